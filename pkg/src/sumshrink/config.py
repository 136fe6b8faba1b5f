"""Experiment configuration files (YAML) and their resolved form."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .calibration import CalibrationTarget, censoring_from_eta
from .combiners import SchemeSpec, ShrinkageSpec
from .detectors import LpConfig
from .experiments import DELAY_CAP, ExperimentSpec
from .models import INF, ChangeScenario, StreamModel, kl_number

PROFILES = {"desk": {"reps": 500, "calibration_reps": 500},
            "paper": {"reps": 2500, "calibration_reps": 2500}}


class ConfigError(ValueError):
    pass


def bundled(name: str) -> Path:
    """Path of a bundled reference config (``table1``, ``table3``, ``smoke``...)."""
    return Path(str(resources.files("sumshrink") / "configs" / f"{name}.yaml"))


def _scenario_from(desc: dict, K: int) -> ChangeScenario:
    desc = dict(desc)
    if "K" in desc and int(desc["K"]) != K:
        raise ConfigError(f"scenario K={desc['K']} but config K={K}")
    nu = desc.get("nu", 1)
    nu = INF if nu in (None, "inf", "never") else int(nu)
    post = desc.get("post_mean")
    affected = desc.get("affected", 0)
    delays = desc.get("delays")
    if isinstance(affected, int):
        if delays is None:
            sc = ChangeScenario.first_m(K, affected, nu=nu if nu != INF else 1, post_mean=post)
            return replace(sc, nu=nu) if nu == INF else sc
        affected = list(range(affected))
    delays = None if delays is None else [INF if d in (None, "inf") else int(d) for d in delays]
    if nu == INF:
        return ChangeScenario(INF, (0,) * K)
    return ChangeScenario.from_indices(K, affected, nu=nu, delays=delays, post_mean=post)


def _normal_scenario(desc: dict) -> dict:
    out = {k: desc[k] for k in ("nu", "post_mean", "affected", "delays") if k in desc}
    out.setdefault("nu", 1)
    return out


@dataclass
class RunConfig:
    """Everything one CLI invocation needs, in resolved form.

    ``to_dict`` / ``from_dict`` round-trip exactly; the resolved dict is what
    the commands echo next to their results.
    """

    name: str = "experiment"
    seed: int = 0
    K: int = 100
    post_mean: float | list = 1.0
    gamma: float = 5000.0
    schemes: list = field(default_factory=list)
    scenarios: list = field(default_factory=list)
    profile: str = "desk"
    profiles: dict = field(default_factory=lambda: {k: dict(v) for k, v in PROFILES.items()})
    reps: int | None = None
    calibration: dict = field(default_factory=dict)
    delay: dict = field(default_factory=dict)
    comm: dict = field(default_factory=dict)
    threads: int = 1
    out_dir: str = "results"
    reference: dict = field(default_factory=dict)

    # derived views ----------------------------------------------------
    @property
    def models(self) -> tuple[StreamModel, ...]:
        if isinstance(self.post_mean, list):
            if len(self.post_mean) != self.K:
                raise ConfigError("post_mean list length differs from K")
            return tuple(StreamModel.gaussian(m) for m in self.post_mean)
        return (StreamModel.gaussian(float(self.post_mean)),) * self.K

    @property
    def rho(self) -> list[float]:
        info = np.array([kl_number(m) for m in self.models])
        return list(info / info.sum())

    def profile_value(self, key: str) -> int:
        if self.reps is not None:
            return int(self.reps)
        try:
            return int(self.profiles[self.profile][key])
        except KeyError as e:
            raise ConfigError(f"profile {self.profile!r} lacks {key!r}") from e

    @property
    def delay_reps(self) -> int:
        return self.profile_value("reps")

    @property
    def calibration_reps(self) -> int:
        return self.profile_value("calibration_reps")

    def scheme_specs(self) -> list[SchemeSpec]:
        return [scheme_from_dict(d) for d in self.schemes]

    def change_scenarios(self) -> list[ChangeScenario]:
        return [_scenario_from(d, self.K) for d in self.scenarios]

    def target(self) -> CalibrationTarget:
        c = self.calibration
        br = c.get("bracket")
        return CalibrationTarget(float(c.get("gamma", self.gamma)), self.calibration_reps,
                                 float(c.get("rel_tol", 0.02)), c.get("horizon_cap"),
                                 tuple(br) if br else None)

    def experiment(self) -> ExperimentSpec:
        return ExperimentSpec(self.models, self.scheme_specs(), self.change_scenarios(), self.gamma,
                              self.delay_reps, self.seed, int(self.delay.get("horizon_cap", DELAY_CAP)))

    # serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name, "seed": self.seed, "K": self.K, "post_mean": self.post_mean,
            "gamma": self.gamma, "profile": self.profile, "profiles": self.profiles,
            "reps": self.reps, "threads": self.threads, "out_dir": self.out_dir,
            "calibration": self.calibration, "delay": self.delay, "comm": self.comm,
            "scenarios": self.scenarios, "schemes": self.schemes, "reference": self.reference,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return parse_config(d)

    def resolved(self) -> dict:
        """Config echo with derived quantities, for embedding in outputs.

        Execution settings (threads, output directory) are left out so the
        echo is identical wherever and however the run happens.
        """
        out = self.to_dict()
        del out["threads"], out["out_dir"]
        out["rho"] = self.rho
        out["delay_reps"] = self.delay_reps
        out["calibration_reps"] = self.calibration_reps
        return out


def scheme_from_dict(d: dict, models=None) -> SchemeSpec:
    d = dict(d)
    kind = d.get("kind")
    if kind is None:
        raise ConfigError(f"scheme without kind: {d}")
    b = d.get("b", 0.0)
    if isinstance(b, list):
        b = tuple(float(v) for v in b)
    lp = d.get("lp") or {}
    try:
        sh = ShrinkageSpec(kind, b, int(d.get("r", 1)), float(d.get("p0", 1.0)), int(d.get("window", 200)))
        a = d.get("a")
        return SchemeSpec(sh, d.get("detector", "cusum"), None if a is None else float(a),
                          LpConfig(**{k: float(v) for k, v in lp.items()}), d.get("name", ""))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad scheme {d}: {e}") from e


def _resolve_scheme(d: dict, models, lp_default: dict | None) -> dict:
    d = dict(d)
    if "eta" in d:
        if "b" in d:
            raise ConfigError(f"scheme {d.get('name')} gives both b and eta")
        bk = censoring_from_eta(float(d.pop("eta")), [kl_number(m) for m in models])
        d["b"] = float(bk[0]) if np.allclose(bk, bk[0], rtol=0, atol=0) else [float(v) for v in bk]
    if lp_default and str(d.get("detector", "")).startswith("lp") and "lp" not in d:
        d["lp"] = dict(lp_default)
    spec = scheme_from_dict(d)
    return spec.to_dict()


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {"name", "seed", "K", "post_mean", "gamma", "profile", "profiles", "reps", "threads",
             "out_dir", "calibration", "delay", "comm", "scenarios", "scenario_grid", "schemes", "lp",
             "reference"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(
        name=str(raw.get("name", "experiment")),
        seed=int(raw.get("seed", 0)),
        K=int(raw.get("K", 100)),
        post_mean=raw.get("post_mean", 1.0),
        gamma=float(raw.get("gamma", 5000.0)),
        profile=str(raw.get("profile", "desk")),
        reps=None if raw.get("reps") is None else int(raw["reps"]),
        threads=int(raw.get("threads", 1)),
        out_dir=str(raw.get("out_dir", "results")),
        calibration=dict(raw.get("calibration") or {}),
        delay=dict(raw.get("delay") or {}),
        comm=dict(raw.get("comm") or {}),
        reference=dict(raw.get("reference") or {}),
    )
    if isinstance(cfg.post_mean, list):
        cfg.post_mean = [float(v) for v in cfg.post_mean]
    else:
        cfg.post_mean = float(cfg.post_mean)
    if raw.get("profiles"):
        cfg.profiles = {k: dict(v) for k, v in raw["profiles"].items()}
    if cfg.profile not in cfg.profiles:
        raise ConfigError(f"unknown profile {cfg.profile!r}")
    models = cfg.models
    scen = [_normal_scenario(s) for s in raw.get("scenarios") or []]
    grid = raw.get("scenario_grid")
    if grid:
        base = {k: v for k, v in grid.items() if k != "affected_counts"}
        scen += [_normal_scenario({**base, "affected": int(m)}) for m in grid["affected_counts"]]
    cfg.scenarios = scen
    try:
        cfg.change_scenarios()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad scenario: {e}") from e
    cfg.schemes = [_resolve_scheme(s, models, raw.get("lp")) for s in raw.get("schemes") or []]
    names = [s["name"] for s in cfg.schemes]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate scheme names: {names}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = bundled(str(path))
    try:
        raw = yaml.safe_load(p.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"no such config: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    return parse_config(raw)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
