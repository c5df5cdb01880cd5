"""Synthetic reward oracles standing in for a learned step scorer.

Two layers:

* a token-level model where each position of a beam carries an i.i.d. scalar
  score, so partial rewards are prefix sums and full-step rewards are full
  sums on the same keyed draws;
* a direct final-reward model that maps a normalized partial reward through a
  monotone curve and adds bounded-variance noise.

Both noise families offered here (gaussian, centered uniform) satisfy a
sub-Gaussian moment bound with parameter equal to their standard deviation,
which is what the tail bound in the analysis module assumes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DOMAIN_NOISE,
    BeamNode,
    ConfigError,
    KeyedStream,
    counter_normals,
    counter_uniforms,
)

__all__ = [
    "GAUSSIAN",
    "UNIFORM",
    "BeamScoreModel",
    "BeamPopulation",
    "MonotoneNoiseModel",
    "token_score",
    "token_scores",
    "partial_reward",
    "final_reward_toy",
    "final_reward_mapped",
    "make_population",
    "homogeneous_population",
]

GAUSSIAN = "gaussian"
UNIFORM = "uniform"

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class BeamScoreModel:
    """Per-beam token score distribution.

    Gaussian models draw mean + std * z. Uniform models draw from the interval
    centered on the mean whose standard deviation equals std, so both families
    are exchangeable in every experiment that only fixes the first two moments.
    """

    mean: float
    std: float
    token_dist: str = GAUSSIAN

    def __post_init__(self) -> None:
        if self.std < 0:
            raise ConfigError("token std must be non-negative")
        if self.token_dist not in (GAUSSIAN, UNIFORM):
            raise ConfigError(f"unknown token_dist: {self.token_dist!r}")

    @property
    def bounds(self) -> tuple[float, float]:
        """Declared support [a, b] of a uniform model."""
        if self.token_dist != UNIFORM:
            raise ValueError("bounds are defined for uniform models only")
        half = _SQRT3 * self.std
        return (self.mean - half, self.mean + half)


def model_scores(
    model: BeamScoreModel, lane: np.uint64 | np.ndarray, start: int, count: int
) -> np.ndarray:
    """Token scores at indices [start, start+count) on the given lane(s)."""
    if model.token_dist == GAUSSIAN:
        return model.mean + model.std * counter_normals(lane, start, count)
    lo, hi = model.bounds
    return lo + (hi - lo) * counter_uniforms(lane, start, count)


@dataclass(frozen=True)
class BeamPopulation:
    """The per-beam score models of one experiment.

    design_gap records the constructed spacing between the best mean and the
    rest; it is 0.0 for deliberately tied populations, in which case the
    mis-rejection bound is vacuous and reported as such downstream.
    """

    models: tuple[BeamScoreModel, ...]
    design_gap: float = 0.0

    def __post_init__(self) -> None:
        if len(self.models) < 1:
            raise ConfigError("population needs at least one model")

    @property
    def size(self) -> int:
        return len(self.models)

    @property
    def has_unique_best(self) -> bool:
        means = [m.mean for m in self.models]
        top = max(means)
        return sum(1 for m in means if m == top) == 1

    def model_for(self, node: BeamNode) -> BeamScoreModel:
        """Score model of a tree node: the model of its founding root beam."""
        idx = node.model_index
        if idx >= len(self.models):
            raise ValueError(f"beam model index {idx} out of range")
        return self.models[idx]


def make_population(
    n_beams: int,
    design_gap: float,
    base_mean: float,
    token_std: float,
    token_dist: str = GAUSSIAN,
) -> BeamPopulation:
    """Population with one elevated beam.

    Beam 0 gets mean base_mean + design_gap, the other n_beams - 1 get
    base_mean; every beam shares token_std and the distribution family. The
    elevated beam is the unique best by construction.
    """
    if n_beams < 2:
        raise ConfigError("population gap is undefined below two beams")
    if design_gap <= 0:
        raise ConfigError("design_gap must be positive")
    best = BeamScoreModel(base_mean + design_gap, token_std, token_dist)
    rest = BeamScoreModel(base_mean, token_std, token_dist)
    return BeamPopulation((best,) + (rest,) * (n_beams - 1), design_gap)


def homogeneous_population(
    n_beams: int, mean: float, token_std: float, token_dist: str = GAUSSIAN
) -> BeamPopulation:
    """Population of identical models (design_gap 0; bound checks flag it vacuous)."""
    if n_beams < 1:
        raise ConfigError("population needs at least one model")
    model = BeamScoreModel(mean, token_std, token_dist)
    return BeamPopulation((model,) * n_beams, 0.0)


# ---------------------------------------------------------------------------
# token-level rewards


def token_scores(
    pop: BeamPopulation,
    beam: BeamNode,
    start: int,
    count: int,
    stream: KeyedStream,
) -> np.ndarray:
    """Scores of the beam's tokens at indices [start, start+count).

    Deterministic in (stream.seed, beam.path, index); the engine and the flat
    Monte Carlo trials share this path, which is what guarantees that partial
    and final rewards agree on their common prefix.
    """
    model = pop.model_for(beam)
    return model_scores(model, stream.lane(beam.path), start, count)


def token_score(pop: BeamPopulation, beam: BeamNode, t: int, stream: KeyedStream) -> float:
    """Score of one token position on this beam."""
    if t < 0:
        raise ValueError("token index must be non-negative")
    return float(token_scores(pop, beam, t, 1, stream)[0])


def partial_reward(
    pop: BeamPopulation,
    beam: BeamNode,
    prefix_len: int,
    stream: KeyedStream,
    normalized: bool = False,
    step_len: int | None = None,
) -> float:
    """Reward of the beam's first prefix_len tokens.

    Parameters
    ----------
    prefix_len : tokens scored before the rejection decision; at least 1.
    normalized : divide the sum by prefix_len. Raw sums are the default and
        are what the search engine ranks on; normalized means are the [0, 1]
        convention expected by the mapped final-reward model.
    step_len : optional step budget; prefix_len above it is an error.
    """
    if prefix_len < 1:
        raise ValueError("prefix_len must be at least 1")
    if step_len is not None and prefix_len > step_len:
        raise ValueError("prefix_len exceeds the step budget")
    total = float(token_scores(pop, beam, 0, prefix_len, stream).sum())
    return total / prefix_len if normalized else total


def final_reward_toy(
    pop: BeamPopulation,
    beam: BeamNode,
    horizon: int,
    stream: KeyedStream,
    normalized: bool = False,
) -> float:
    """Reward of the full horizon on this beam.

    Shares its first prefix_len draws with partial_reward by construction of
    the keyed stream (same lane, same token indices).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    total = float(token_scores(pop, beam, 0, horizon, stream).sum())
    return total / horizon if normalized else total


# ---------------------------------------------------------------------------
# monotone-map final-reward model

IDENTITY = "identity"
LOGISTIC = "logistic"
PIECEWISE = "piecewise_linear"

_GRID = np.linspace(0.0, 1.0, 1000)


@dataclass(frozen=True)
class MonotoneNoiseModel:
    """Final reward as a monotone map of the normalized partial reward plus noise.

    The map must be non-decreasing from [0, 1] into [0, 1]; this is checked on
    a 1000-point grid at construction. Noise is zero-mean with std noise_std,
    gaussian or centered uniform, and the output is clamped back to [0, 1].
    Clamping skews the noise near the boundary, so calibration experiments
    keep their inputs away from 0 and 1.
    """

    map_kind: str = IDENTITY
    noise_std: float = 0.0
    noise_dist: str = GAUSSIAN
    steepness: float = 8.0
    midpoint: float = 0.5
    knots: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.noise_dist not in (GAUSSIAN, UNIFORM):
            raise ConfigError(f"unknown noise_dist: {self.noise_dist!r}")
        if self.map_kind not in (IDENTITY, LOGISTIC, PIECEWISE):
            raise ConfigError(f"unknown map kind: {self.map_kind!r}")
        if self.map_kind == PIECEWISE:
            if not self.knots or len(self.knots) < 2:
                raise ConfigError("piecewise map needs at least two knots")
            xs = [k[0] for k in self.knots]
            ys = [k[1] for k in self.knots]
            if xs[0] != 0.0 or xs[-1] != 1.0:
                raise ConfigError("piecewise knots must span [0, 1]")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ConfigError("piecewise knot x values must strictly increase")
            if any(v < 0.0 or v > 1.0 for v in ys):
                raise ConfigError("piecewise knot y values must lie in [0, 1]")
        elif self.map_kind == LOGISTIC and self.steepness <= 0:
            raise ConfigError("logistic steepness must be positive")
        g = self.apply_map(_GRID)
        if np.any(np.diff(g) < 0):
            raise ConfigError("map is not non-decreasing on [0, 1]")
        if g.min() < 0.0 or g.max() > 1.0:
            raise ConfigError("map leaves [0, 1]")

    def apply_map(self, p):
        """g(p), vectorized over numpy inputs."""
        arr = np.asarray(p, dtype=np.float64)
        if self.map_kind == IDENTITY:
            out = arr
        elif self.map_kind == LOGISTIC:
            out = 1.0 / (1.0 + np.exp(-self.steepness * (arr - self.midpoint)))
        else:
            xs = np.array([k[0] for k in self.knots])
            ys = np.array([k[1] for k in self.knots])
            out = np.interp(arr, xs, ys)
        return out if isinstance(p, np.ndarray) else float(out)


def final_reward_mapped(
    model: MonotoneNoiseModel,
    p: float,
    stream: KeyedStream,
    path: Sequence[int] = (),
    t: int = 0,
) -> float:
    """g(p) plus keyed noise, clamped to [0, 1].

    p must be a normalized partial reward in [0, 1]. The noise variate is
    addressed by (path, t) in its own key domain, so it never collides with
    token draws on the same path.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("partial reward must lie in [0, 1]")
    value = model.apply_map(float(p))
    if model.noise_std > 0:
        lane = stream.lane(tuple(path), DOMAIN_NOISE)
        if model.noise_dist == GAUSSIAN:
            eta = model.noise_std * float(counter_normals(lane, t, 1)[0])
        else:
            u = float(counter_uniforms(lane, t, 1)[0])
            eta = model.noise_std * _SQRT3 * (2.0 * u - 1.0)
        value += eta
    return min(1.0, max(0.0, value))
