"""Run configuration: a JSON document with fixed sections; unknown keys are rejected."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .aggregator import WEIGHTINGS, AggregatorConfig
from .codec import DEFAULT_TAU, DEFAULT_THETA
from .geometry import CameraIntrinsics
from .learner.training import TrainConfig
from .synth import MODELS, NoiseConfig, default_camera, make_model

_CAM = default_camera(128)

DEFAULTS = {
    "camera": _CAM.to_dict(),
    "codec": {"theta_mm": DEFAULT_THETA, "tau_px": DEFAULT_TAU},
    "aggregator": {"k": 5, "sigma_mm": 40.0, "max_iters": 30, "stop_eps_mm": 1e-3, "weighting": "weighted"},
    "train": {
        "lr": 0.001, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8, "batch": 8, "steps": 200, "seed": 0,
        "stacks": 2, "channels": 16, "levels": 3, "augment": True, "loss_weights": [1.0, 1.0, 1.0],
    },
    "synth": {
        "model": "hand16",
        "noise": {"depth_noise_std": 0.0, "hole_prob": 0.0, "target_noise_std_S": 0.0,
                  "target_noise_std_V": 0.0, "seed": 0},
    },
    "eval": {"thresholds": [float(t) for t in range(0, 81, 2)]},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown key {where}{k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where}{k} must be an object")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict | None = None) -> "RunConfig":
        cfg = cls(_merge(DEFAULTS, d or {}, ""))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        if path is None:
            return cls.from_dict()
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at offset {e.pos}: {e.msg}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def validate(self) -> None:
        try:
            self.camera, self.aggregator, self.train_config, self.noise
            if self.raw["synth"]["model"] not in MODELS:
                raise ConfigError(f"synth.model must be one of {sorted(MODELS)}")
            if self.raw["aggregator"]["weighting"] not in WEIGHTINGS:
                raise ConfigError(f"aggregator.weighting must be one of {WEIGHTINGS}")
            th = [float(t) for t in self.thresholds]
            if any(b < a for a, b in zip(th, th[1:])):
                raise ConfigError("eval.thresholds must be ascending")
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from None

    @property
    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_dict(self.raw["camera"])

    @property
    def theta(self) -> float:
        return float(self.raw["codec"]["theta_mm"])

    @property
    def tau(self) -> float:
        return float(self.raw["codec"]["tau_px"])

    @property
    def aggregator(self) -> AggregatorConfig:
        a = self.raw["aggregator"]
        return AggregatorConfig(
            theta=self.theta, tau=self.tau, k_candidates=int(a["k"]), sigma=float(a["sigma_mm"]),
            max_iters=int(a["max_iters"]), stop_eps=float(a["stop_eps_mm"]), weighting=a["weighting"],
        )

    @property
    def train_config(self) -> TrainConfig:
        t = dict(self.raw["train"])
        return TrainConfig(theta=self.theta, tau=self.tau, **t)

    @property
    def noise(self) -> NoiseConfig:
        return NoiseConfig(**self.raw["synth"]["noise"])

    @property
    def model_name(self) -> str:
        return self.raw["synth"]["model"]

    def hand_model(self):
        return make_model(self.model_name)

    @property
    def thresholds(self) -> list[float]:
        return list(self.raw["eval"]["thresholds"])
