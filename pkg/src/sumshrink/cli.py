"""Command-line front end: ``sumshrink {calibrate,delay,comm,bounds}``.

Every command writes into ``--out-dir``. Output files carry no timestamps and
are written in a fixed order, so a fixed ``--seed`` gives byte-identical
files whatever ``--threads`` is.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from . import config as cfgmod
from .calibration import CalibrationError, calibrate_threshold
from .combiners import SchemeSpec, ShrinkageSpec
from .engine import set_threads
from .experiments import (DelayCell, arl_bound_report, info_lower_bound, log_arl_bound,
                          simulate_delay, transmission_fraction)
from .models import ChangeScenario, SeedSpec, StreamModel

log = logging.getLogger("sumshrink")

EXIT_OK, EXIT_CONFIG, EXIT_CALIBRATION, EXIT_CAP = 0, 2, 3, 4
CAP_TOLERANCE = 0.01
CSV_COLUMNS = ["scheme_id", "a", "b_spec", "r", "affected_count", "mean_delay", "se", "reps", "lower_bound"]


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.profile is not None:
        if args.profile not in cfg.profiles:
            raise cfgmod.ConfigError(f"config has no profile {args.profile!r}")
        cfg.profile = args.profile
    if args.reps is not None:
        cfg.reps = args.reps
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    set_threads(cfg.threads)
    return cfg


def _apply_thresholds(cfg: cfgmod.RunConfig, path: str) -> None:
    found = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            if rec.get("a") is not None:
                found[rec["scheme"]] = rec["a"]
    for s in cfg.schemes:
        if s["name"] in found:
            s["a"] = found[s["name"]]


def _b_spec(spec: SchemeSpec) -> str:
    sh = spec.shrinkage
    if sh.kind in ("hard", "soft", "comb"):
        return "vector" if isinstance(sh.b, tuple) else f"{sh.b:g}"
    if sh.kind == "xs":
        return f"p0={sh.p0:g};window={sh.window}"
    return ""


# commands ---------------------------------------------------------------

def cmd_calibrate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.out_dir)
    target = cfg.target()
    seeds = SeedSpec(cfg.seed)
    lines, status = [], EXIT_OK
    for raw, spec in zip(cfg.schemes, cfg.scheme_specs()):
        if spec.a is not None and not args.force:
            log.warning("scheme %s already has a=%g; skipped (use --force to recalibrate)", spec.name, spec.a)
            lines.append({"scheme": spec.name, "a": spec.a, "status": "fixed"})
            continue
        try:
            res = calibrate_threshold(spec.with_threshold(None), cfg.models, target, seeds)
        except CalibrationError as e:
            log.error("calibration failed for %s: %s", spec.name, e)
            lines.append({"scheme": spec.name, "a": None, "status": "failed", "error": str(e),
                          "diagnostics": {k: repr(v) for k, v in e.diagnostics.items()}})
            status = EXIT_CALIBRATION
            continue
        rec = res.record(spec.name)
        rec["status"] = "ok" if res.success else "not_converged"
        lines.append(rec)
        if not res.success:
            status = EXIT_CALIBRATION
        raw["a"] = res.a
        print(f"{spec.name:>20s}  a={res.a:.4f}  ARL={res.arl_hat:.1f} (SE {res.se:.1f})  {rec['status']}")
    _write(out / "calibration.jsonl", "".join(_dumps(r) + "\n" for r in lines))
    _write(out / "resolved_config.json", _dumps(cfg.resolved()) + "\n")
    return status


def cmd_delay(args) -> int:
    cfg = _load(args)
    if args.thresholds:
        _apply_thresholds(cfg, args.thresholds)
    missing = [s["name"] for s in cfg.schemes if s.get("a") is None]
    if missing:
        raise cfgmod.ConfigError(f"schemes without a threshold: {missing}")
    exp = cfg.experiment()
    seeds = SeedSpec(cfg.seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    jsonl, worst = [], 0.0
    for spec in exp.schemes:
        for sc, desc in zip(exp.scenarios, cfg.scenarios):
            cell: DelayCell = simulate_delay(spec, exp.models, sc, exp.reps, seeds, exp.delay_cap)
            lb = info_lower_bound(exp.gamma, sc, exp.models) if sc.affected else math.nan
            worst = max(worst, cell.capped / cell.reps)
            r = spec.shrinkage.r_for(exp.K) if spec.kind in ("order", "comb") else ""
            writer.writerow([spec.name, f"{spec.a:.4f}", _b_spec(spec), r, len(sc.affected),
                             f"{cell.mean_delay:.4f}", f"{cell.se:.4f}", cell.reps, f"{lb:.6e}"])
            jsonl.append({"scheme": spec.to_dict(), "scenario": desc, "affected_count": len(sc.affected),
                          "mean_delay": cell.mean_delay, "se": cell.se, "reps": cell.reps,
                          "capped": cell.capped, "lower_bound": lb})
    out = Path(cfg.out_dir)
    _write(out / "delays.csv", buf.getvalue())
    _write(out / "delays.jsonl", "".join(_dumps(r) + "\n" for r in jsonl))
    _write(out / "resolved_config.json", _dumps(cfg.resolved()) + "\n")
    sys.stdout.write(buf.getvalue())
    if worst > CAP_TOLERANCE:
        log.error("%.1f%% of paths in some cell hit the horizon cap %d", 100 * worst, exp.delay_cap)
        return EXIT_CAP
    return EXIT_OK


def cmd_comm(args) -> int:
    cfg = _load(args)
    c = cfg.comm
    levels = c.get("b") or [0.0]
    horizon = int(c.get("horizon", 1000))
    reps = int(args.reps if args.reps is not None else c.get("reps", 100))
    detector = c.get("detector", "cusum")
    seeds = SeedSpec(cfg.seed)
    lines = []
    for b in levels:
        spec = SchemeSpec(ShrinkageSpec("hard", b=b), detector)
        rep = transmission_fraction(spec, cfg.models, horizon, reps, seeds)
        lines.append({"b": b, "detector": detector, "mean_fraction": rep.mean_fraction, "se": rep.se,
                      "reps": rep.reps, "horizon": rep.horizon})
        print(f"b={b:<8g} fraction={rep.mean_fraction:.6f}  SE={rep.se:.6f}")
    out = Path(cfg.out_dir)
    _write(out / "comm.jsonl", "".join(_dumps(r) + "\n" for r in lines))
    _write(out / "resolved_config.json", _dumps(cfg.resolved()) + "\n")
    return EXIT_OK


def cmd_bounds(args) -> int:
    rec = {"K": args.K, "a": args.a}
    if args.a is not None:
        rec["log_arl_bound"] = log_arl_bound(args.K, args.a)
        rec["arl_bound"] = arl_bound_report(args.K, args.a)
        print(f"ARL lower bound (K={args.K}, a={args.a:g}): {rec['arl_bound']:.6e}")
    if args.gamma is not None:
        if not 1 <= args.affected <= args.K:
            raise cfgmod.ConfigError("--affected must lie in [1, K]")
        models = (StreamModel.gaussian(args.post_mean),) * args.K
        sc = ChangeScenario.first_m(args.K, args.affected)
        rec.update(gamma=args.gamma, affected=args.affected, post_mean=args.post_mean,
                   delay_lower_bound=info_lower_bound(args.gamma, sc, models))
        print(f"delay lower bound (gamma={args.gamma:g}, m={args.affected}, mu={args.post_mean:g}): "
              f"{rec['delay_lower_bound']:.6e}")
    if args.out_dir:
        _write(Path(args.out_dir) / "bounds.jsonl", _dumps(rec) + "\n")
    return EXIT_OK


# parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sumshrink", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML config path or bundled name (table1, table3, smoke)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--reps", type=int, help="override the profile's replication count")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--profile", choices=sorted(cfgmod.PROFILES))
        sp.add_argument("--out-dir")

    sp = sub.add_parser("calibrate", help="search global thresholds for ARL gamma")
    common(sp)
    sp.add_argument("--force", action="store_true", help="recalibrate schemes with a fixed threshold")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("delay", help="simulate the detection-delay grid")
    common(sp)
    sp.add_argument("--thresholds", help="calibration.jsonl whose thresholds override the config")
    sp.set_defaults(func=cmd_delay)

    sp = sub.add_parser("comm", help="pre-change fraction of transmitting sensors")
    common(sp)
    sp.set_defaults(func=cmd_comm)

    sp = sub.add_parser("bounds", help="ARL lower bound and first-order delay bound")
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--a", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--affected", type=int, default=1)
    sp.add_argument("--post-mean", type=float, default=1.0)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
