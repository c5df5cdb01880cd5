"""Decoding strategies over the synthetic oracles, with exact cost accounting.

Both strategies keep a width-N frontier. Each step scores the frontier,
selects the top N/M by that step's reward, and expands every survivor into M
children, restoring width N. The early-rejection variant decides on the first
prefix_len tokens and only lets survivors finish the step; the vanilla variant
completes every beam before selecting. Token draws are keyed by node path, so
the two strategies see identical scores wherever their trees overlap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ConfigError, BeamNode, KeyedStream, SearchConfig, validate_config
from .oracle import BeamPopulation, model_scores, token_scores

__all__ = [
    "VANILLA",
    "EARLY_REJECTION",
    "SCORE_MODE",
    "StrategySpec",
    "RunLedger",
    "SearchState",
    "select_top",
    "vanilla_step",
    "er_step",
    "run_search",
    "coupled_run",
    "exhaustive_argmax",
    "misrejection_trial",
    "misrejection_batch",
]

VANILLA = "vanilla"
EARLY_REJECTION = "early_rejection"

# Selection and terminal ranking use raw score sums over tokens. Normalized
# means exist in the oracle layer for the mapped model; every ledger and
# report states which convention produced its numbers.
SCORE_MODE = "sum"


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    rescore_after_completion: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (VANILLA, EARLY_REJECTION):
            raise ConfigError(f"unknown strategy kind: {self.kind!r}")
        if self.kind == VANILLA and self.rescore_after_completion:
            raise ConfigError("rescore_after_completion applies to early_rejection only")


@dataclass
class RunLedger:
    """Exact token and scorer-call accounting for one search run."""

    strategy: str = VANILLA
    prefix_tokens: int = 0
    completion_tokens: int = 0
    prm_calls: int = 0
    prm_tokens_scored: int = 0
    steps_executed: int = 0
    survivors_per_step: list[tuple[tuple[int, ...], ...]] = field(default_factory=list)
    best_path: tuple[int, ...] | None = None
    best_final_reward: float | None = None

    @property
    def gen_tokens_total(self) -> int:
        return self.prefix_tokens + self.completion_tokens

    @property
    def gen_tokens_by_phase(self) -> tuple[int, int]:
        return (self.prefix_tokens, self.completion_tokens)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "score_mode": SCORE_MODE,
            "gen_tokens_total": self.gen_tokens_total,
            "gen_tokens_by_phase": {
                "prefix_tokens": self.prefix_tokens,
                "completion_tokens": self.completion_tokens,
            },
            "prm_calls": self.prm_calls,
            "prm_tokens_scored": self.prm_tokens_scored,
            "steps_executed": self.steps_executed,
            "survivors_per_step": [
                [list(path) for path in step] for step in self.survivors_per_step
            ],
            "best_path": list(self.best_path) if self.best_path is not None else None,
            "best_final_reward": self.best_final_reward,
        }


@dataclass
class SearchState:
    step_index: int
    active: list[BeamNode]
    survivors: list[BeamNode] = field(default_factory=list)
    closed: list[BeamNode] = field(default_factory=list)


def initial_state(cfg: SearchConfig) -> SearchState:
    return SearchState(0, [BeamNode((i,)) for i in range(cfg.beam_width)])


def select_top(
    scores: Sequence[float],
    k: int,
    paths: Sequence[tuple[int, ...]] | None = None,
) -> tuple[set[int], float]:
    """Indices of the k highest scores and the threshold T (k-th largest score).

    Ties are broken by ascending path; with no paths given, by ascending index.
    Every kept score is >= T and every discarded score is <= T.
    """
    n = len(scores)
    if n == 0:
        raise ValueError("empty scores")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if paths is None:
        paths = [(i,) for i in range(n)]
    if len(paths) != n:
        raise ValueError("paths and scores must align")
    order = sorted(range(n), key=lambda i: (-scores[i], paths[i]))
    threshold = float(scores[order[k - 1]])
    return set(order[:k]), threshold


def _expand(survivors: list[BeamNode], expansion_factor: int) -> list[BeamNode]:
    children = []
    for node in survivors:
        carried = node.sequence_reward()
        for j in range(expansion_factor):
            children.append(BeamNode(node.path + (j,), inherited_reward=carried))
    return children


def _select(
    scored: list[BeamNode], keep: int, score_of
) -> tuple[list[BeamNode], list[int]]:
    kept_idx, _threshold = select_top(
        [score_of(n) for n in scored], keep, [n.path for n in scored]
    )
    survivors = [scored[i] for i in sorted(kept_idx)]  # scored is path-ordered
    dropped = [i for i in range(len(scored)) if i not in kept_idx]
    return survivors, dropped


def vanilla_step(
    state: SearchState,
    cfg: SearchConfig,
    pop: BeamPopulation,
    stream: KeyedStream,
    ledger: RunLedger,
) -> SearchState:
    """Complete every beam, score full steps, keep the top N/M, expand."""
    beams = state.active
    n, s = len(beams), cfg.step_len
    if n != cfg.beam_width:
        raise ValueError("frontier width does not match beam_width")
    base = state.step_index * s

    scored = []
    for node in beams:  # path order
        step_total = float(token_scores(pop, node, base, s, stream).sum())
        scored.append(node.completed(s, step_total))
    ledger.completion_tokens += n * s
    ledger.prm_calls += n
    ledger.prm_tokens_scored += n * s

    survivors, dropped = _select(scored, cfg.keep_count, lambda nd: nd.final_reward)
    closed = state.closed + [scored[i] for i in dropped]
    return SearchState(
        state.step_index + 1,
        _expand(survivors, cfg.expansion_factor),
        survivors,
        closed,
    )


def er_step(
    state: SearchState,
    cfg: SearchConfig,
    pop: BeamPopulation,
    stream: KeyedStream,
    ledger: RunLedger,
    rescore: bool = False,
) -> SearchState:
    """Decide on prefix_len tokens, finish only the survivors, expand."""
    beams = state.active
    n, s, tau = len(beams), cfg.step_len, cfg.prefix_len
    if n != cfg.beam_width:
        raise ValueError("frontier width does not match beam_width")
    base = state.step_index * s

    probed = []
    for node in beams:
        prefix_total = float(token_scores(pop, node, base, tau, stream).sum())
        probed.append(node.with_partial(tau, prefix_total))
    ledger.prefix_tokens += n * tau
    ledger.prm_calls += n
    ledger.prm_tokens_scored += n * tau

    kept, dropped = _select(probed, cfg.keep_count, lambda nd: nd.partial_reward)

    survivors = []
    for node in kept:
        rest = 0.0
        if s > tau:
            rest = float(token_scores(pop, node, base + tau, s - tau, stream).sum())
        survivors.append(node.completed(s, node.partial_reward + rest))
    ledger.completion_tokens += len(kept) * (s - tau)
    if rescore:
        # survivor full steps re-scored after completion; ranking stays on partials
        ledger.prm_calls += len(kept)
        ledger.prm_tokens_scored += len(kept) * s

    closed = state.closed + [probed[i].rejected() for i in dropped]
    return SearchState(
        state.step_index + 1,
        _expand(survivors, cfg.expansion_factor),
        survivors,
        closed,
    )


def _best_of(candidates: list[tuple[float, tuple[int, ...]]]) -> tuple[float, tuple[int, ...]]:
    # highest reward, ties to the lexicographically smallest path
    best_reward, best_path = candidates[0]
    for reward, path in candidates[1:]:
        if reward > best_reward or (reward == best_reward and path < best_path):
            best_reward, best_path = reward, path
    return best_reward, best_path


def run_search(cfg: SearchConfig, pop: BeamPopulation, spec: StrategySpec) -> RunLedger:
    """Run one strategy for num_steps steps and return its completed ledger.

    The returned beam is the final step's survivor with the highest
    whole-sequence reward; that terminal scoring pass is charged to the ledger
    as keep_count scorer calls over full sequences.
    """
    cfg = validate_config(cfg)
    if pop.size < cfg.beam_width:
        raise ConfigError("population smaller than beam_width")
    stream = KeyedStream(cfg.seed)
    ledger = RunLedger(strategy=spec.kind)
    state = initial_state(cfg)
    for _ in range(cfg.num_steps):
        if spec.kind == VANILLA:
            state = vanilla_step(state, cfg, pop, stream, ledger)
        else:
            state = er_step(
                state, cfg, pop, stream, ledger, rescore=spec.rescore_after_completion
            )
        ledger.survivors_per_step.append(tuple(n.path for n in state.survivors))
        ledger.steps_executed += 1

    finalists = [(n.sequence_reward(), n.path) for n in state.survivors]
    ledger.prm_calls += len(finalists)
    ledger.prm_tokens_scored += len(finalists) * cfg.num_steps * cfg.step_len
    best_reward, best_path = _best_of(finalists)
    ledger.best_path = best_path
    ledger.best_final_reward = best_reward
    return ledger


def coupled_run(
    cfg: SearchConfig,
    pop: BeamPopulation,
    er_spec: StrategySpec | None = None,
) -> tuple[RunLedger, RunLedger]:
    """Both strategies on the same keyed stream; shared nodes see shared scores."""
    if er_spec is None:
        er_spec = StrategySpec(EARLY_REJECTION)
    elif er_spec.kind != EARLY_REJECTION:
        raise ConfigError("er_spec must be an early_rejection spec")
    vanilla = run_search(cfg, pop, StrategySpec(VANILLA))
    er = run_search(cfg, pop, er_spec)
    return vanilla, er


def exhaustive_argmax(cfg: SearchConfig, pop: BeamPopulation) -> tuple[tuple[int, ...], float]:
    """Best leaf of the unpruned expansion tree on the run's keyed stream.

    Completes every beam at every step with no selection; the result is the
    oracle-optimal sequence a strategy is judged against. Tree size is
    N * M^(num_steps - 1) leaves, so keep configs desk-sized.
    """
    cfg = validate_config(cfg)
    if pop.size < cfg.beam_width:
        raise ConfigError("population smaller than beam_width")
    stream = KeyedStream(cfg.seed)
    level = [((i,), 0.0) for i in range(cfg.beam_width)]
    s = cfg.step_len
    for k in range(cfg.num_steps):
        scored = []
        for path, carried in level:
            node = BeamNode(path, inherited_reward=carried)
            total = carried + float(token_scores(pop, node, k * s, s, stream).sum())
            scored.append((path, total))
        if k == cfg.num_steps - 1:
            best_reward, best_path = _best_of([(r, p) for p, r in scored])
            return best_path, best_reward
        level = [
            (path + (j,), total)
            for path, total in scored
            for j in range(cfg.expansion_factor)
        ]
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# flat single-step mis-rejection trials (theorem setting)


def misrejection_batch(
    n_beams: int,
    expansion_factor: int,
    prefix_len: int,
    horizon: int,
    pop: BeamPopulation,
    seeds: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized flat trials: one step, N beams, no tree.

    For each seed, beam i draws horizon token scores on path (i,); the trial
    mis-rejects when the argmax-final beam is not among the top N/M by prefix
    sum. Returns (flags, partial_sums) with shapes (trials,) and (trials, N).
    """
    if n_beams < 1 or expansion_factor < 1:
        raise ConfigError("beam and expansion counts must be positive")
    if n_beams % expansion_factor != 0:
        raise ConfigError("beam_width not divisible by expansion_factor")
    if not 1 <= prefix_len <= horizon:
        raise ConfigError("prefix_len must lie in [1, horizon]")
    if pop.size < n_beams:
        raise ConfigError("population smaller than beam count")
    keep = n_beams // expansion_factor

    n = len(seeds)
    lanes = np.empty((n, n_beams), dtype=np.uint64)
    for i, seed in enumerate(seeds):
        trial_stream = KeyedStream(int(seed))
        for b in range(n_beams):
            lanes[i, b] = trial_stream.lane((b,))

    partials = np.empty((n, n_beams), dtype=np.float64)
    finals = np.empty((n, n_beams), dtype=np.float64)
    for b in range(n_beams):  # one beam at a time bounds the working set
        scores = model_scores(pop.models[b], lanes[:, b], 0, horizon)
        partials[:, b] = scores[:, :prefix_len].sum(axis=1)
        finals[:, b] = scores.sum(axis=1)

    istar = np.argmax(finals, axis=1)  # ties resolve to the lowest index
    order = np.argsort(-partials, axis=1, kind="stable")  # stable = path tie-break
    ranks = np.empty_like(order)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(n_beams)[None, :]
    flags = ranks[np.arange(n), istar] >= keep
    return flags, partials


def misrejection_trial(
    n_beams: int,
    expansion_factor: int,
    prefix_len: int,
    horizon: int,
    pop: BeamPopulation,
    seed: int,
) -> bool:
    """True when the best-by-final beam fails the prefix selection."""
    flags, _ = misrejection_batch(
        n_beams, expansion_factor, prefix_len, horizon, pop, np.array([seed], dtype=np.uint64)
    )
    return bool(flags[0])
