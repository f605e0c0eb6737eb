"""YAML experiment configs validated with pydantic; unknown keys are rejected.

Schema (every section optional)::

    scenario:
      terrain: {kind: flat|gaps, count, width_range: [lo, hi], beam_width, first_gap_start, floor_z, seed}
      gait: walk|trot|bound|pronk|uncoupled   # default: the observation preset's coupling, else trot
      action: {scenario: flat|gap, flat_gait: walk|trot}
      observation: <preset name> | {preset: <name>, <feature>: true|false, ...}
      reward: {kind: flat|gap, case: 1..27}
      horizon: seconds
      v_des_range: [lo, hi]
      l_step_scale: factor
    controller: {kind: open-loop|gap-schedule|checkpoint|zero, mu, omega, v_des, checkpoint}
    evaluation: {episodes}
    training: {env: quadruped|toy, samples, checkpoint_every, eval_episodes, ppo: {...}}
    sweep: {samples, eval_episodes, cases: [...]}
    extended_gait: {scales: [...]}
    seeds: [...]
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .episode import Scenario
from .learn.actions import ActionSpec
from .learn.ppo import PpoConfig
from .sensing import FEATURES, PRESETS, ObservationConfig, preset, preset_coupling

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TerrainSection(_Strict):
    kind: Literal["flat", "gaps"] = "flat"
    count: int = Field(4, ge=1)
    width_range: tuple[float, float] = (0.14, 0.20)
    beam_width: float = Field(0.14, gt=0)
    first_gap_start: float = Field(0.6, ge=0)
    floor_z: float = -1.0
    seed: Optional[int] = None

    @field_validator("width_range")
    @classmethod
    def _ordered(cls, v):
        if not 0 < v[0] <= v[1]:
            raise ValueError("width_range must satisfy 0 < lo <= hi")
        return v


class ActionSection(_Strict):
    scenario: Literal["flat", "gap"] = "flat"
    flat_gait: Literal["walk", "trot"] = "trot"


class RewardSection(_Strict):
    kind: Literal["flat", "gap"] = "flat"
    case: int = Field(19, ge=1, le=27)


class ScenarioSection(_Strict):
    terrain: TerrainSection = TerrainSection()
    gait: Optional[Literal["walk", "trot", "bound", "pronk", "uncoupled"]] = None
    action: ActionSection = ActionSection()
    observation: Union[str, dict[str, Union[bool, str]]] = "blind"
    reward: RewardSection = RewardSection()
    horizon: float = Field(10.0, gt=0)
    v_des_range: tuple[float, float] = (1.0, 1.0)
    l_step_scale: float = Field(1.0, ge=0)

    @field_validator("observation")
    @classmethod
    def _known_observation(cls, v):
        if isinstance(v, str):
            if v not in PRESETS:
                raise ValueError(f"unknown observation preset '{v}'")
            return v
        for k, val in v.items():
            if k == "preset":
                if val not in PRESETS:
                    raise ValueError(f"unknown observation preset '{val}'")
            elif k not in FEATURES:
                raise ValueError(f"unknown observation feature '{k}'")
            elif not isinstance(val, bool):
                raise ValueError(f"feature '{k}' must be true or false")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        self.build()
        return self

    def observation_preset(self) -> str | None:
        if isinstance(self.observation, str):
            return self.observation
        return self.observation.get("preset")

    def build(self) -> Scenario:
        spec = ActionSpec(self.action.scenario, self.action.flat_gait)
        name = self.observation_preset()
        obs = preset(name, spec.dim) if name else ObservationConfig(action_dim=spec.dim)
        if isinstance(self.observation, dict):
            flags = {k: v for k, v in self.observation.items() if k != "preset"}
            if flags:
                d = obs.to_dict()
                d.update(flags)
                obs = ObservationConfig.from_dict(d)
        gait = self.gait or (preset_coupling(name) if name else "trot")
        t = self.terrain
        return Scenario(
            terrain=t.kind, gap_count=t.count, gap_width_range=tuple(t.width_range), beam_width=t.beam_width,
            first_gap_start=t.first_gap_start, gap_floor_z=t.floor_z, terrain_seed=t.seed, gait=gait,
            action=spec, observation=obs, reward=self.reward.kind, reward_case=self.reward.case,
            horizon=self.horizon, v_des_range=tuple(self.v_des_range), l_step_scale=self.l_step_scale,
        )


class ControllerSection(_Strict):
    kind: Literal["open-loop", "gap-schedule", "checkpoint", "zero"] = "open-loop"
    mu: float = 1.5
    omega: float = 12.0
    v_des: float = 1.0
    checkpoint: Optional[str] = None

    @model_validator(mode="after")
    def _needs_path(self):
        if self.kind == "checkpoint" and not self.checkpoint:
            raise ValueError("controller kind 'checkpoint' needs a checkpoint path")
        return self


class EvaluationSection(_Strict):
    episodes: int = Field(7, ge=1)


class PpoSection(_Strict):
    batch_size: int = Field(4096, gt=0)
    minibatch: int = Field(128, gt=0)
    epochs: int = Field(10, gt=0)
    clip: float = Field(0.2, gt=0, lt=1)
    entropy_coef: float = Field(0.01, ge=0)
    gamma: float = Field(0.99, gt=0, le=1)
    lam: float = Field(0.95, gt=0, le=1)
    desired_kl: float = Field(0.01, gt=0)
    lr: float = Field(1e-4, ge=0)
    hidden: list[int] = [256, 256]
    activation: Literal["tanh", "elu"] = "tanh"
    value_coef: float = Field(1.0, ge=0)
    num_envs: int = Field(64, gt=0)

    @field_validator("hidden")
    @classmethod
    def _positive(cls, v):
        if not v or any(h <= 0 for h in v):
            raise ValueError("hidden must be a non-empty list of positive layer sizes")
        return v

    @model_validator(mode="after")
    def _divisible(self):
        if self.batch_size % self.num_envs:
            raise ValueError("batch_size must be a multiple of num_envs")
        return self

    def build(self) -> PpoConfig:
        return PpoConfig(**self.model_dump())


class TrainingSection(_Strict):
    env: Literal["quadruped", "toy"] = "quadruped"
    samples: int = Field(500_000, gt=0)
    checkpoint_every: int = Field(10, ge=0)
    eval_episodes: int = Field(16, ge=0)
    ppo: PpoSection = PpoSection()


class SweepSection(_Strict):
    samples: int = Field(500_000, gt=0)  # per cell
    eval_episodes: int = Field(20, ge=1)
    cases: Optional[list[int]] = None


class ExtendedGaitSection(_Strict):
    scales: list[float] = [0.0, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0]
    episodes: int = Field(1, ge=1)

    @field_validator("scales")
    @classmethod
    def _non_negative(cls, v):
        if any(s < 0 for s in v):
            raise ValueError("L_step scales must be non-negative")
        return v


class ExperimentConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    scenario: ScenarioSection = ScenarioSection()
    controller: ControllerSection = ControllerSection()
    evaluation: EvaluationSection = EvaluationSection()
    training: TrainingSection = TrainingSection()
    sweep: SweepSection = SweepSection()
    extended_gait: ExtendedGaitSection = ExtendedGaitSection()
    seeds: list[int] = [0]

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; expected {SCHEMA_VERSION}")
        return v

    def build_scenario(self) -> Scenario:
        return self.scenario.build()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(data) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_config(data)


def json_schema() -> dict:
    """Published schema of the config format."""
    return ExperimentConfig.model_json_schema()

