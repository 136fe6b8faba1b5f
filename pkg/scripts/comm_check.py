"""Pre-change fraction of sensors transmitting, against the exp(-b) bound."""
import argparse
import math

from sumshrink.combiners import SchemeSpec, ShrinkageSpec
from sumshrink.experiments import transmission_fraction
from sumshrink.models import SeedSpec, homogeneous


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=20150909)
    p.add_argument("--detector", default="cusum")
    args = p.parse_args()
    models = homogeneous(args.K)
    print(f"{'b':>8s} {'fraction':>9s} {'SE':>8s} {'exp(-b)':>8s}")
    for b in (0.5, 2.3026, 4.6052):
        spec = SchemeSpec(ShrinkageSpec("hard", b=b), args.detector)
        rep = transmission_fraction(spec, models, args.horizon, args.reps, SeedSpec(args.seed))
        print(f"{b:8.4f} {rep.mean_fraction:9.5f} {rep.se:8.5f} {math.exp(-b):8.4f}")


if __name__ == "__main__":
    main()
