"""Run configuration: a validated, JSON-serializable description of one experiment."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .game import Setting

OUT_ENV = "CONTRACT_LAB_OUT"

LEARNERS = ("alg1", "alg2", "fixed", "random", "greedy", "pricing")
ENVIRONMENTS = ("adv1", "adv2", "adv3", "adv4", "adv5", "random", "two_action")
COST_ONLY = {"alg1", "pricing", "adv2", "adv4", "two_action"}
REWARD_ONLY = {"alg2", "adv3", "adv5"}


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "contract_lab_out"))


class LearnerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["alg1", "alg2", "fixed", "random", "greedy", "pricing"]
    x0: float = Field(0.5, ge=0.0, le=1.0)
    seed: int = 0


class EnvironmentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["adv1", "adv2", "adv3", "adv4", "adv5", "random", "two_action"]
    seed: int = 0
    code: Optional[str] = None  # path to a JSON spherical code
    code_trials: int = 1_000_000
    code_size: Optional[int] = None


class OracleSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    theta_grid: int = Field(0, ge=0, description="points per free dimension; 0 disables the grid")
    contract_grid: float = Field(1e-4, gt=0.0, le=0.5)


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: Optional[str] = None
    csv: bool = True
    svg: bool = True
    json_summary: bool = True


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    setting: Setting = Setting.COST
    learner: LearnerSpec
    environment: EnvironmentSpec
    T: int = Field(gt=0)
    d: int = Field(ge=1)
    delta: Optional[float] = Field(None, gt=0.0, description="learner padding override")
    env_delta: Optional[float] = Field(None, gt=0.0, description="adversary parameter override")
    K: Optional[int] = Field(None, gt=0)
    c_low: float = Field(0.1, gt=0.0, le=0.5)
    seed: int = 0
    oracle: OracleSpec = OracleSpec()
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _cross_check(self):
        names = {self.learner.name, self.environment.name}
        if self.setting is Setting.COST and names & REWARD_ONLY:
            raise ValueError(f"{sorted(names & REWARD_ONLY)} need the reward setting")
        if self.setting is Setting.REWARD and names & COST_ONLY:
            raise ValueError(f"{sorted(names & COST_ONLY)} need the cost setting")
        env = self.environment.name
        if env == "adv1" and self.d != 2:
            raise ValueError("adv1 needs d = 2")
        if env in ("adv2", "adv3", "adv4", "adv5") and self.d < 3:
            raise ValueError(f"{env} needs d >= 3")
        if env in ("adv4", "adv5") and self.K is None:
            raise ValueError(f"{env} needs K")
        if self.learner.name == "pricing" and env != "two_action":
            raise ValueError("the pricing learner runs on two_action rounds only")
        if self.oracle.theta_grid and self.setting is Setting.REWARD and self.d > 3 and env not in ("adv3", "adv5"):
            raise ValueError("reward-setting theta grids need d <= 3")
        return self

    def out_dir(self) -> Path:
        return Path(self.output.dir) if self.output.dir else default_out_dir()

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.model_validate_json(text)
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())

    def echo(self) -> dict:
        return json.loads(self.model_dump_json())
