"""Experiment configuration: schema, profiles and YAML loading."""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

SCHEMA_VERSION = 1
PROFILES = ("desk", "full")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AreaConfig(_Section):
    id: int
    template: Literal["grid", "ring", "radial"]
    gue_count: int = Field(ge=0)
    mbs_position: tuple[float, float]
    params: dict[str, Any] = Field(default_factory=dict)
    mbs_height: float = 25.0


class ScenarioConfig(_Section):
    L: float = Field(1500.0, gt=0)
    W: float = Field(700.0, gt=0)
    fleet_size: int = Field(3, ge=1)
    areas: list[AreaConfig]
    takeoff_sets: list[list[str]]
    v_gue_max: float = Field(14.0, gt=0)
    trace_seed: int = 0
    max_dwell: int = Field(2, ge=0)

    @model_validator(mode="after")
    def _check(self):
        ids = [a.id for a in self.areas]
        if len(set(ids)) != len(ids):
            raise ValueError("area ids must be unique")
        if not self.areas or not self.takeoff_sets:
            raise ValueError("at least one area and one takeoff set are required")
        for ts in self.takeoff_sets:
            if len(ts) != self.fleet_size:
                raise ValueError(f"takeoff set {ts} does not have fleet_size={self.fleet_size} sites")
        return self


class RadioConfig(_Section):
    h: float = Field(100.0, gt=0)
    phi: float = Field(100.0, gt=0, le=180)
    n_beam: int = 9
    f_c: float = Field(30.0, gt=0)
    P_tx: float = 14.0
    G_tx: float = 0.0
    G_rx: float = 23.0
    G_rx_mbs: float = 15.0
    P_n: float = -106.0
    sinr_th: float = 0.0
    sigma_los: float = Field(4.0, ge=0)
    sigma_nlos: float = Field(6.0, ge=0)
    P_tx_backhaul: float = 30.0
    G_backhaul: float = 25.0


class RRMConfig(_Section):
    D: float = Field(1e6, gt=0)
    ru_budget: int | None = Field(20, ge=1)
    b_sys: float = Field(7.2e6, gt=0)
    delta_f: float = Field(15e3, gt=0)
    n_sub: int = Field(12, ge=1)
    rrm_period: float = Field(0.1, gt=0)
    t_slot: float = Field(1e-3, gt=0)
    solver: Literal["greedy", "exact"] = "greedy"


class EnvSection(_Section):
    v: float = Field(20.0, gt=0)
    T: float = Field(270.0, gt=0)
    T_s: float = Field(10.0, gt=0)
    N_w: int = Field(9, ge=1)

    @property
    def t_steps(self) -> int:
        return int(round(self.T / self.T_s))


class LearnerConfig(_Section):
    hidden: list[int] = Field(default_factory=lambda: [128, 128])
    head_hidden: int = Field(64, ge=0)
    lr: float = Field(1e-4, gt=0)
    K_i: int = Field(50_000, ge=1)
    K_mu: int = Field(1_000_000, ge=1)
    k: int = Field(128, ge=1)
    Y: int = Field(100, ge=1)
    gamma: float = Field(0.99, ge=0, lt=1)


class ExploreConfig(_Section):
    eps_mu_frac: float = Field(0.2, gt=0, le=1)
    eps_i_frac: float = Field(0.6, gt=0, le=1)
    eps_min: float = Field(0.05, gt=0, lt=1)
    J: int = Field(2700, ge=0)


STRATEGY_PREFIX_EGREEDY = "egreedy-"


def parse_strategy(name: str) -> tuple[str, float | None]:
    """'mamo' | 'mama' | 'generalized' | 'egreedy-<frac>' -> (kind, eps_frac override)."""
    if name in ("mamo", "mama", "generalized"):
        return name, None
    if name.startswith(STRATEGY_PREFIX_EGREEDY):
        try:
            frac = float(name[len(STRATEGY_PREFIX_EGREEDY):])
        except ValueError:
            raise ValueError(f"bad epsilon fraction in strategy {name!r}") from None
        if not 0 < frac <= 1:
            raise ValueError(f"epsilon fraction in {name!r} must be in (0, 1]")
        return "egreedy", frac
    raise ValueError(f"unknown strategy {name!r}")


class RunConfig(_Section):
    N: int = Field(1000, ge=1)
    strategies: list[str] = Field(default_factory=lambda: ["mamo", "mama", "egreedy-0.6", "egreedy-0.2", "generalized"])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    checkpoint_every: int = Field(50, ge=0)
    eval_episodes: int = Field(5, ge=1)
    n_hat_s: int = Field(3, ge=1)
    fse_fraction: float = Field(0.6, gt=0, le=1)
    workers: int = Field(1, ge=1)

    @field_validator("strategies")
    @classmethod
    def _known(cls, v):
        if not v:
            raise ValueError("at least one strategy is required")
        for s in v:
            parse_strategy(s)
        return v


class ExperimentConfig(_Section):
    version: int = SCHEMA_VERSION
    profile: str = "custom"
    scenario: ScenarioConfig
    radio: RadioConfig = RadioConfig()
    rrm: RRMConfig = RRMConfig()
    env: EnvSection = EnvSection()
    learner: LearnerConfig = LearnerConfig()
    explore: ExploreConfig = ExploreConfig()
    run: RunConfig = RunConfig()

    @field_validator("version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported config version {v} (expected {SCHEMA_VERSION})")
        return v

    def with_overrides(self, **sections: dict) -> "ExperimentConfig":
        data = self.model_dump()
        for name, patch in sections.items():
            if isinstance(data.get(name), dict):
                data[name] = {**data[name], **patch}
            else:
                data[name] = patch
        return ExperimentConfig.model_validate(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


class ConfigError(ValueError):
    pass


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def load_profile(name: str) -> ExperimentConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    text = resources.files("uabs_fleet").joinpath(f"profiles/{name}.yaml").read_text()
    return parse_config(yaml.safe_load(text))
