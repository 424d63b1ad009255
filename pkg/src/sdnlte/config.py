"""Experiment configuration: dataclasses, YAML parsing and validation.

A config file is a single YAML document with nested sections and a versioned
`schema_version` field. Omitted fields take the standard simulation defaults
(100 RBs over 20 MHz, 1 s LB period, 1 dB hysteresis, 25 dB report threshold,
40 dBm macro cells of 250 m radius). Unknown keys are rejected with the
offending section and key named.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .backhaul import BackhaulConfig
from .handover import HandoverConfig
from .radio import RadioConfig

SCHEMA_VERSION = 1

POLICIES = ("proposed", "qos_aware", "max_rsrq")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """One simulation point: scenario, traffic mix, policy and seed."""

    scenario: int = 1
    num_users: int = 100
    distribution: str = "uniform"
    doa: float | None = None
    gbr_fraction: float = 0.9
    http_fraction: float = 0.5
    gbr_demand_bps: int = 250_000
    policy: str = "proposed"
    seed: int = 0
    duration_s: float = 30.0
    warmup_periods: int = 1
    sched_alpha: float = 0.1
    hol_bucket_ms: float = 10.0
    oracle_budget: int = 2_000_000
    radio: RadioConfig = field(default_factory=RadioConfig)
    handover: HandoverConfig = field(default_factory=HandoverConfig)
    backhaul: BackhaulConfig = field(default_factory=BackhaulConfig)

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; valid: {', '.join(POLICIES)}")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.handover.policy != self.policy:
            object.__setattr__(
                self, "handover", dataclasses.replace(self.handover, policy=self.policy)
            )

    def replaced(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class SweepAxes:
    num_users: tuple[int, ...] = ()
    doa: tuple[float, ...] = ()
    policies: tuple[str, ...] = ()
    seeds: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    base: SimConfig = field(default_factory=SimConfig)
    sweep: SweepAxes = field(default_factory=SweepAxes)
    out_dir: str = "out"

    def __post_init__(self) -> None:
        if self.sweep.policies:
            for p in self.sweep.policies:
                if p not in POLICIES:
                    raise ConfigError(
                        f"unknown policy {p!r} in sweep; valid: {', '.join(POLICIES)}"
                    )

    def sweep_points(self) -> list[SimConfig]:
        """Cartesian product of the sweep axes over the base config."""
        users = self.sweep.num_users or (self.base.num_users,)
        doas = self.sweep.doa or (self.base.doa,)
        policies = self.sweep.policies or (self.base.policy,)
        seeds = self.sweep.seeds or (self.base.seed,)
        points = []
        for n in users:
            for d in doas:
                for p in policies:
                    for s in seeds:
                        dist = self.base.distribution
                        if d is not None:
                            dist = "asymmetric"
                        points.append(
                            self.base.replaced(
                                num_users=n, doa=d, policy=p, seed=s, distribution=dist
                            )
                        )
        return points


_TOP_KEYS = {
    "schema_version", "out_dir", "scenario", "num_users", "distribution", "doa",
    "gbr_fraction", "http_fraction", "gbr_demand_bps", "policy", "seed",
    "duration_s", "warmup_periods", "sched_alpha", "hol_bucket_ms",
    "oracle_budget", "radio", "handover", "backhaul", "sweep",
}
_RADIO_KEYS = {f.name for f in dataclasses.fields(RadioConfig)}
_HANDOVER_KEYS = {f.name for f in dataclasses.fields(HandoverConfig)} - {"policy"}
_BACKHAUL_KEYS = {f.name for f in dataclasses.fields(BackhaulConfig)}
_SWEEP_KEYS = {f.name for f in dataclasses.fields(SweepAxes)}


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {section}: {', '.join(sorted(unknown))}; "
            f"allowed: {', '.join(sorted(allowed))}"
        )


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys("top level", data, _TOP_KEYS)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")

    radio_d = dict(data.get("radio") or {})
    _check_keys("radio", radio_d, _RADIO_KEYS)
    handover_d = dict(data.get("handover") or {})
    _check_keys("handover", handover_d, _HANDOVER_KEYS)
    backhaul_d = dict(data.get("backhaul") or {})
    _check_keys("backhaul", backhaul_d, _BACKHAUL_KEYS)
    if "qos_weights" in backhaul_d and isinstance(backhaul_d["qos_weights"], dict):
        backhaul_d["qos_weights"] = tuple(
            (str(k), float(v)) for k, v in backhaul_d["qos_weights"].items()
        )
    sweep_d = dict(data.get("sweep") or {})
    _check_keys("sweep", sweep_d, _SWEEP_KEYS)

    policy = data.get("policy", "proposed")
    try:
        base = SimConfig(
            scenario=int(data.get("scenario", 1)),
            num_users=int(data.get("num_users", 100)),
            distribution=str(data.get("distribution", "uniform")),
            doa=None if data.get("doa") is None else float(data["doa"]),
            gbr_fraction=float(data.get("gbr_fraction", 0.9)),
            http_fraction=float(data.get("http_fraction", 0.5)),
            gbr_demand_bps=int(data.get("gbr_demand_bps", 250_000)),
            policy=str(policy),
            seed=int(data.get("seed", 0)),
            duration_s=float(data.get("duration_s", 30.0)),
            warmup_periods=int(data.get("warmup_periods", 1)),
            sched_alpha=float(data.get("sched_alpha", 0.1)),
            hol_bucket_ms=float(data.get("hol_bucket_ms", 10.0)),
            oracle_budget=int(data.get("oracle_budget", 2_000_000)),
            radio=RadioConfig(**radio_d),
            handover=HandoverConfig(policy=str(policy), **handover_d),
            backhaul=BackhaulConfig(**backhaul_d),
        )
        sweep = SweepAxes(
            num_users=tuple(int(x) for x in sweep_d.get("num_users", ())),
            doa=tuple(float(x) for x in sweep_d.get("doa", ())),
            policies=tuple(str(x) for x in sweep_d.get("policies", ())),
            seeds=tuple(int(x) for x in sweep_d.get("seeds", ())),
        )
        return ExperimentConfig(base=base, sweep=sweep, out_dir=str(data.get("out_dir", "out")))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_config(path: str | Path) -> ExperimentConfig:
    """Load, validate and default-fill a YAML experiment config."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(data or {})


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Serialise a config so that parse(serialize(cfg)) round-trips."""
    base = cfg.base
    return {
        "schema_version": SCHEMA_VERSION,
        "out_dir": cfg.out_dir,
        "scenario": base.scenario,
        "num_users": base.num_users,
        "distribution": base.distribution,
        "doa": base.doa,
        "gbr_fraction": base.gbr_fraction,
        "http_fraction": base.http_fraction,
        "gbr_demand_bps": base.gbr_demand_bps,
        "policy": base.policy,
        "seed": base.seed,
        "duration_s": base.duration_s,
        "warmup_periods": base.warmup_periods,
        "sched_alpha": base.sched_alpha,
        "hol_bucket_ms": base.hol_bucket_ms,
        "oracle_budget": base.oracle_budget,
        "radio": dataclasses.asdict(base.radio),
        "handover": {
            k: v for k, v in dataclasses.asdict(base.handover).items() if k != "policy"
        },
        "backhaul": {
            **dataclasses.asdict(base.backhaul),
            "qos_weights": {k: v for k, v in base.backhaul.qos_weights},
        },
        "sweep": {
            "num_users": list(cfg.sweep.num_users),
            "doa": list(cfg.sweep.doa),
            "policies": list(cfg.sweep.policies),
            "seeds": list(cfg.sweep.seeds),
        },
    }


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))
