"""Run configuration and its JSON form.

A configuration file looks like::

    {
      "model": {"N": 10, "alpha": 1.0, "J": 1.0, "h": 0.0, "kappa": 0.5},
      "ansatz": {"kind": "LJNH"},
      "sampler": {"n_samples": 2000, "sweeps_between_samples": 1,
                  "thermalization_sweeps": 100, "rethermalization_sweeps": 10},
      "regularization": {"snr_threshold": 0.0, "eigenvalue_cutoff": 1e-8},
      "scheme": "midpoint", "dt": 0.001, "total_time": 3.0, "record_stride": 50,
      "n_trajectories": 100, "mode": "nonlinear", "master_seed": 1234,
      "output_dir": "runs/n10"
    }

Missing sections fall back to defaults; unknown keys are rejected so typos
do not silently change a run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import RegularizationConfig
from .integrator import SCHEMES
from .model import ModelSpec
from .sampler import SamplerConfig

MODES = ("nonlinear", "linear")


class ConfigError(ValueError):
    pass


def _build(cls, d: dict | None, what: str):
    d = dict(d or {})
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(d) - names
    if extra:
        raise ConfigError(f"unknown {what} keys: {sorted(extra)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {what} section: {err}") from err


@dataclass
class RunConfig:
    model: ModelSpec
    ansatz: dict = field(default_factory=lambda: {"kind": "LJNH"})
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    scheme: str = "midpoint"
    dt: float = 1e-3
    total_time: float = 1.0
    record_stride: int = 10
    n_trajectories: int = 1
    mode: str = "nonlinear"
    master_seed: int = 0
    output_dir: str = "otvmc_run"
    save_trajectories: bool = False     # per-trajectory raw moments next to the ensemble CSV

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ConfigError("n_trajectories must be >= 1")
        if self.total_time < 0:
            raise ConfigError("total_time must be >= 0")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if "kind" not in self.ansatz:
            raise ConfigError("ansatz section needs a 'kind'")

    @property
    def n_steps(self) -> int:
        n = self.total_time / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ConfigError("total_time must be a multiple of dt")
        return int(round(n))

    @property
    def record_steps(self) -> list[int]:
        """Steps at which observables are recorded: every stride, plus the last."""
        steps = list(range(0, self.n_steps + 1, self.record_stride))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return steps

    # -- serialisation --------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "model" not in d:
            raise ConfigError("configuration needs a 'model' section")
        try:
            model = ModelSpec.from_dict(d.pop("model"))
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid model section: {err}") from err
        sampler = _build(SamplerConfig, d.pop("sampler", None), "sampler")
        reg = _build(RegularizationConfig, d.pop("regularization", None), "regularization")
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        return cls(model=model, sampler=sampler, regularization=reg, **d)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "ansatz": dict(self.ansatz),
            "sampler": dataclasses.asdict(self.sampler),
            "regularization": dataclasses.asdict(self.regularization),
            "scheme": self.scheme,
            "dt": self.dt,
            "total_time": self.total_time,
            "record_stride": self.record_stride,
            "n_trajectories": self.n_trajectories,
            "mode": self.mode,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "save_trajectories": self.save_trajectories,
        }

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def trajectory_key(self) -> str:
        """Hash of everything that determines a single trajectory's output."""
        d = self.to_dict()
        for k in ("n_trajectories", "output_dir", "save_trajectories"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]
