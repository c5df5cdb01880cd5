"""Domain types, config validation, and the keyed deterministic random stream.

Every random quantity in the simulator is addressed by a key
(seed, domain, path, token_index) rather than drawn from a shared sequential
generator. Two strategies that expand the same tree node therefore observe
exactly the same token scores, which is what makes vanilla-vs-early-rejection
comparisons counterfactually fair. Keyed derivation is pure: no hidden state,
safe to evaluate concurrently, identical results at any worker count.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtri

__all__ = [
    "ConfigError",
    "SearchConfig",
    "BeamNode",
    "KeyedStream",
    "ACTIVE",
    "REJECTED_EARLY",
    "COMPLETED",
    "DOMAIN_TOKEN",
    "DOMAIN_NOISE",
    "DOMAIN_SEED",
    "DOMAIN_CELL",
    "validate_config",
    "keyed_draw",
    "search_config_from_dict",
    "derive_seed",
]


class ConfigError(ValueError):
    """Invalid configuration or malformed config document."""


_U64 = 1 << 64

# Key domains. Lanes with different domains never collide even on equal paths.
DOMAIN_TOKEN = 0   # per-token score draws
DOMAIN_NOISE = 1   # mapped-model noise draws
DOMAIN_SEED = 2    # derived per-trial seeds
DOMAIN_CELL = 3    # derived sweep-cell seeds

# SplitMix64 constants. The finalizer below is the standard avalanche mix;
# lane bases come from sha256, so streams on distinct keys are unrelated.
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)


def _mix64(z: np.ndarray) -> np.ndarray:
    # uint64 wraparound is intended everywhere in here
    z = z ^ (z >> _S30)
    z = z * _MIX_A
    z = z ^ (z >> _S27)
    z = z * _MIX_B
    return z ^ (z >> _S31)


def _lane_base(seed: int, path: Sequence[int], domain: int) -> np.uint64:
    if not 0 <= seed < _U64:
        raise ConfigError("seed must fit in 64 unsigned bits")
    if not 0 <= domain < 256:
        raise ValueError("domain must be a small non-negative integer")
    for p in path:
        if p < 0 or p >= _U64:
            raise ValueError("path elements must be non-negative 64-bit integers")
    buf = struct.pack(f"<QBI{len(path)}Q", seed, domain, len(path), *path)
    digest = hashlib.sha256(buf).digest()
    return np.uint64(int.from_bytes(digest[:8], "little"))


def _counter_words(base: np.uint64 | np.ndarray, start: int, count: int) -> np.ndarray:
    """Raw 64-bit words at token indices [start, start+count) for one or many lanes.

    base may be a scalar lane key or an array of lane keys; the result gains a
    trailing axis of length count.
    """
    if start < 0 or count < 0:
        raise ValueError("token index range must be non-negative")
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    base_arr = np.asarray(base, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = base_arr[..., None] + idx * _GAMMA
        return _mix64(state)


def _to_unit(words: np.ndarray) -> np.ndarray:
    # top 53 bits, offset to the open interval (0, 1); keeps ndtri finite
    return ((words >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def counter_uniforms(base: np.uint64 | np.ndarray, start: int, count: int) -> np.ndarray:
    """Unit-interval variates on the lane(s) with base key `base`."""
    return _to_unit(_counter_words(base, start, count))


def counter_normals(base: np.uint64 | np.ndarray, start: int, count: int) -> np.ndarray:
    """Standard normal variates on the lane(s) with base key `base`."""
    return ndtri(counter_uniforms(base, start, count))


@dataclass(frozen=True)
class KeyedStream:
    """Counter-based random stream addressed by (seed, domain, path, token_index).

    The same key always yields the same variate, on any platform and at any
    parallelism degree. Distinct keys yield statistically independent variates.
    """

    seed: int

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or not 0 <= self.seed < _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def lane(self, path: Sequence[int], domain: int = DOMAIN_TOKEN) -> np.uint64:
        """Base key of the lane for `path` under `domain`."""
        return _lane_base(self.seed, tuple(path), domain)

    def uniforms(
        self, path: Sequence[int], start: int, count: int, domain: int = DOMAIN_TOKEN
    ) -> np.ndarray:
        return counter_uniforms(self.lane(path, domain), start, count)

    def normals(
        self, path: Sequence[int], start: int, count: int, domain: int = DOMAIN_TOKEN
    ) -> np.ndarray:
        return counter_normals(self.lane(path, domain), start, count)


def keyed_draw(
    stream: KeyedStream,
    path: Sequence[int],
    t: int,
    dist: tuple,
    domain: int = DOMAIN_TOKEN,
) -> float:
    """One variate at key (stream.seed, domain, path, t).

    dist is ("normal", mu, sigma) or ("uniform", lo, hi). Re-invocation with the
    same key returns a bit-identical value.
    """
    if t < 0:
        raise ValueError("token index must be non-negative")
    kind = dist[0]
    if kind == "normal":
        mu, sigma = float(dist[1]), float(dist[2])
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        z = counter_normals(stream.lane(path, domain), t, 1)[0]
        return mu + sigma * float(z)
    if kind == "uniform":
        lo, hi = float(dist[1]), float(dist[2])
        if hi < lo:
            raise ValueError("uniform bounds out of order")
        u = counter_uniforms(stream.lane(path, domain), t, 1)[0]
        return lo + (hi - lo) * float(u)
    raise ValueError(f"unknown distribution kind: {kind!r}")


def derive_seed(base_seed: int, path: Sequence[int], domain: int = DOMAIN_SEED) -> int:
    """A fresh unsigned 64-bit seed keyed by (base_seed, domain, path).

    Used for per-trial and per-sweep-cell child streams; stable under addition
    of unrelated cells because the derivation keys on the cell identity, not on
    enumeration order.
    """
    return int(_lane_base(base_seed, tuple(path), domain))


# ---------------------------------------------------------------------------
# search configuration


@dataclass(frozen=True)
class SearchConfig:
    """Shape of one search run.

    beam_width        candidates kept alive per step (N)
    expansion_factor  children spawned per survivor (M)
    prefix_len        tokens scored before the early-rejection decision
    step_len          tokens in a full step
    num_steps         steps per run
    horizon           total scored tokens of a complete sequence; equals
                      step_len * num_steps because the token-level score model
                      spans the whole run
    seed              base seed of the keyed stream
    """

    beam_width: int
    expansion_factor: int
    prefix_len: int
    step_len: int
    num_steps: int
    horizon: int
    seed: int

    @property
    def keep_count(self) -> int:
        """Beams surviving each selection: beam_width / expansion_factor."""
        return self.beam_width // self.expansion_factor


def validate_config(cfg: SearchConfig) -> SearchConfig:
    """Return cfg unchanged if every invariant holds, else raise ConfigError
    naming the violated invariant."""
    for name in ("beam_width", "expansion_factor", "step_len", "num_steps", "horizon"):
        value = getattr(cfg, name)
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f"{name} must be a positive integer")
    if not isinstance(cfg.prefix_len, int) or cfg.prefix_len < 1:
        raise ConfigError("prefix_len must be at least 1")
    if cfg.beam_width % cfg.expansion_factor != 0:
        raise ConfigError("beam_width not divisible by expansion_factor")
    if cfg.prefix_len > cfg.step_len:
        raise ConfigError("prefix_len exceeds step_len")
    if cfg.horizon != cfg.step_len * cfg.num_steps:
        raise ConfigError("horizon must equal step_len * num_steps")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < _U64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    # keep_count >= 1 follows from divisibility and positivity
    return cfg


_SEARCH_FIELDS = tuple(f.name for f in fields(SearchConfig))


def search_config_from_dict(doc: dict) -> SearchConfig:
    """Build and validate a SearchConfig from a JSON-shaped mapping.

    The document must carry exactly the SearchConfig field names; unknown keys
    are an error, as are missing ones.
    """
    if not isinstance(doc, dict):
        raise ConfigError("search config must be a JSON object")
    unknown = sorted(set(doc) - set(_SEARCH_FIELDS))
    if unknown:
        raise ConfigError(f"unknown key(s) in search config: {', '.join(unknown)}")
    missing = sorted(set(_SEARCH_FIELDS) - set(doc))
    if missing:
        raise ConfigError(f"missing key(s) in search config: {', '.join(missing)}")
    values = {}
    for name in _SEARCH_FIELDS:
        v = doc[name]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"search config field {name} must be an integer")
        values[name] = v
    return validate_config(SearchConfig(**values))


# ---------------------------------------------------------------------------
# beam nodes

ACTIVE = "active"
REJECTED_EARLY = "rejected_early"
COMPLETED = "completed"


@dataclass(frozen=True)
class BeamNode:
    """One node of the expansion tree.

    path identifies the node for keying and tie-breaking (child indices from
    the root; the founding element also selects the score model, so a lineage
    keeps its designed per-token mean). Instances are immutable; the transition
    helpers return updated copies and only ever move status forward.

    inherited_reward is the sum of the step rewards of all ancestors, so
    inherited_reward + final_reward is the whole-sequence reward of a node
    that completed its step.
    """

    path: tuple[int, ...]
    tokens_generated: int = 0
    partial_reward: float | None = None
    final_reward: float | None = None
    status: str = ACTIVE
    inherited_reward: float = 0.0

    def __post_init__(self) -> None:
        if len(self.path) == 0:
            raise ValueError("path must be non-empty")
        if self.status not in (ACTIVE, REJECTED_EARLY, COMPLETED):
            raise ValueError(f"unknown status: {self.status!r}")

    @property
    def model_index(self) -> int:
        return self.path[0]

    @property
    def depth(self) -> int:
        return len(self.path) - 1

    def with_partial(self, tokens: int, reward: float) -> "BeamNode":
        if self.status != ACTIVE:
            raise ValueError("partial reward can only be set on an active beam")
        if tokens < self.tokens_generated:
            raise ValueError("tokens_generated cannot decrease")
        return replace(self, tokens_generated=tokens, partial_reward=reward)

    def rejected(self) -> "BeamNode":
        if self.status != ACTIVE:
            raise ValueError(f"illegal transition {self.status} -> {REJECTED_EARLY}")
        return replace(self, status=REJECTED_EARLY)

    def completed(self, tokens: int, step_reward: float) -> "BeamNode":
        if self.status != ACTIVE:
            raise ValueError(f"illegal transition {self.status} -> {COMPLETED}")
        if tokens < self.tokens_generated:
            raise ValueError("tokens_generated cannot decrease")
        return replace(
            self, status=COMPLETED, tokens_generated=tokens, final_reward=step_reward
        )

    def sequence_reward(self) -> float:
        """Whole-sequence reward of a completed node."""
        if self.status != COMPLETED or self.final_reward is None:
            raise ValueError("sequence reward requires a completed step")
        return self.inherited_reward + self.final_reward
