"""Model parameters (payoff weights, rationality profiles, normalization) and JSON I/O."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .game import ConfigurationError, NormalizationConstants, PlayerRole, RoleNorms
from .qre import RationalityProfile

FORMAT_VERSION = 1
WEIGHT_SHAPE = (3, 3, 5)
INITIAL_WEIGHTS = (0.5, 0.3, 0.2)
INITIAL_LAMBDA = 2.0


def uniform_weights(cell=INITIAL_WEIGHTS) -> np.ndarray:
    return np.broadcast_to(np.asarray(cell, float)[:, None, None], WEIGHT_SHAPE).copy()


def check_weights(w: np.ndarray, atol: float = 1e-9) -> None:
    w = np.asarray(w)
    if w.shape != WEIGHT_SHAPE:
        raise ConfigurationError(f"weight tensor must have shape {WEIGHT_SHAPE}, got {w.shape}")
    if np.any(w < 0) or not np.allclose(w.sum(axis=0), 1.0, rtol=0, atol=atol):
        raise ConfigurationError("weights must be non-negative and sum to one in every cell")


@dataclass
class ModelParameters:
    weights: dict[PlayerRole, np.ndarray]
    rationality: dict[PlayerRole, RationalityProfile]
    normalization: NormalizationConstants
    metadata: dict = field(default_factory=dict)

    def w(self, role: PlayerRole) -> np.ndarray:
        return self.weights[role]

    def lam(self, role: PlayerRole) -> RationalityProfile:
        return self.rationality[role]

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            {r: w.copy() for r, w in self.weights.items()},
            {r: p.with_values(p.values.copy()) for r, p in self.rationality.items()},
            self.normalization,
            dict(self.metadata),
        )

    def validate(self) -> None:
        for role in PlayerRole:
            check_weights(self.weights[role])
            if self.rationality[role].values.shape[0] < 1:
                raise ConfigurationError("empty rationality profile")

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "shapes": {"weights": list(WEIGHT_SHAPE), "components": ["safety", "efficiency", "rule"]},
            "weights": {r.value: self.weights[r].tolist() for r in PlayerRole},
            "rationality": {
                r.value: {
                    "values": self.rationality[r].values.tolist(),
                    "bin_width": self.rationality[r].bin_width,
                    "max_distance": self.rationality[r].max_distance,
                }
                for r in PlayerRole
            },
            "normalization": self.normalization.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParameters":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported parameter format {d.get('format_version')!r}")
        shape = tuple(d["shapes"]["weights"])
        if shape != WEIGHT_SHAPE:
            raise ConfigurationError(f"unsupported weight shape {shape}")
        weights = {}
        rationality = {}
        for r in PlayerRole:
            w = np.asarray(d["weights"][r.value], dtype=float)
            if w.shape != shape:
                raise ConfigurationError(f"{r.value} weights have shape {w.shape}, expected {shape}")
            weights[r] = w
            rp = d["rationality"][r.value]
            rationality[r] = RationalityProfile(
                np.asarray(rp["values"], dtype=float), float(rp["bin_width"]), float(rp["max_distance"])
            )
        return cls(weights, rationality, NormalizationConstants.from_dict(d["normalization"]),
                   dict(d.get("metadata", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "ModelParameters":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def initial_parameters(
    normalization: NormalizationConstants,
    bin_width: float = 2.0,
    max_distance: float = 40.0,
    weights=INITIAL_WEIGHTS,
    lam: float = INITIAL_LAMBDA,
) -> ModelParameters:
    """The untrained starting point: one weight triple everywhere, constant lambda."""
    return ModelParameters(
        {r: uniform_weights(weights) for r in PlayerRole},
        {r: RationalityProfile.constant(lam, bin_width, max_distance) for r in PlayerRole},
        normalization,
    )


def load_resource(name: str) -> ModelParameters:
    text = resources.files("leftturn").joinpath(f"resources/{name}").read_text()
    return ModelParameters.from_dict(json.loads(text))


def reference_parameters() -> ModelParameters:
    """Parameters calibrated on the bundled synthetic dataset."""
    return load_resource("reference_params.json")


def generator_parameters() -> ModelParameters:
    """Hand-set ground-truth parameters used to synthesize calibration data."""
    return load_resource("generator_params.json")


__all__ = [
    "ModelParameters",
    "RoleNorms",
    "check_weights",
    "initial_parameters",
    "reference_parameters",
    "generator_parameters",
    "uniform_weights",
]
