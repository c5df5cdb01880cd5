"""Statistics, closed-form guarantees, and the compute cost model.

Correlation and rank estimators here are deliberately definitional: the exact
conventions (tau-a rank correlation with ties contributing zero, r2 as
1 - SSE/SST with the constant-target convention, hard errors on degenerate
samples) are part of the verification contract, so nothing is delegated to a
stats library whose defaults differ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._parallel import ordered_map
from .core import ConfigError, KeyedStream, SearchConfig, derive_seed, validate_config
from .oracle import BeamPopulation, BeamScoreModel, model_scores
from .search import SCORE_MODE, RunLedger, misrejection_batch

__all__ = [
    "CorrelationReport",
    "BoundReport",
    "CostModel",
    "FlopReport",
    "pearson",
    "kendall_tau",
    "linear_fit",
    "theoretical_correlation",
    "min_tau_for_rho",
    "estimate_gap_and_noise",
    "misrejection_bound",
    "verify_bound",
    "correlation_study",
    "run_flops",
    "batching_plan",
]

_CHUNK = 1024  # trials per work unit; fixed so results never depend on workers


# ---------------------------------------------------------------------------
# estimators


def _paired(xs, ys, min_len: int = 2) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
        raise ValueError("inputs must be equal-length 1-d sequences")
    if len(x) < min_len:
        raise ValueError(f"need at least {min_len} sample pairs")
    return x, y


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation of two samples.

    Raises
    ------
    ValueError
        If either sample has zero variance ("degenerate sample").
    """
    x, y = _paired(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    ssx = float(dx @ dx)
    ssy = float(dy @ dy)
    if ssx == 0.0 or ssy == 0.0:
        raise ValueError("degenerate sample: zero variance")
    r = float(dx @ dy) / math.sqrt(ssx * ssy)
    return min(1.0, max(-1.0, r))


def _inversions(values: list[float]) -> int:
    # bottom-up merge sort counting inversions
    a = list(values)
    n = len(a)
    inv = 0
    width = 1
    buf = a[:]
    while width < n:
        lo = 0
        while lo < n:
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            if mid == hi:
                buf[lo:hi] = a[lo:hi]  # lone run, nothing to merge against
            else:
                i, j, k = lo, mid, lo
                while i < mid and j < hi:
                    if a[i] <= a[j]:
                        buf[k] = a[i]
                        i += 1
                    else:
                        buf[k] = a[j]
                        inv += mid - i
                        j += 1
                    k += 1
                buf[k:hi] = a[i:mid] if i < mid else a[j:hi]
            lo += 2 * width
        a, buf = buf, a
        width *= 2
    return inv


def _sign_pair_sum(x: np.ndarray, y: np.ndarray) -> float:
    # sum of sign(dx)*sign(dy) over ordered pairs, in row chunks to cap memory
    total = 0.0
    step = max(1, (1 << 22) // max(1, len(x)))
    for lo in range(0, len(x), step):
        hi = lo + step
        dx = np.sign(x[lo:hi, None] - x[None, :])
        dy = np.sign(y[lo:hi, None] - y[None, :])
        total += float((dx * dy).sum())
    return total / 2.0  # each unordered pair counted twice, self pairs are zero


def kendall_tau(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation (concordant - discordant) / C(n, 2).

    Tie handling is the tau-a convention: tied pairs contribute zero to the
    numerator while the denominator stays C(n, 2). Continuous inputs have no
    ties and take an O(n log n) inversion-counting path.
    """
    x, y = _paired(xs, ys)
    n = len(x)
    pairs = n * (n - 1) // 2
    has_ties = len(np.unique(x)) < n or len(np.unique(y)) < n
    if has_ties:
        numer = _sign_pair_sum(x, y)
    else:
        order = np.argsort(x, kind="stable")
        disc = _inversions(list(y[order]))
        numer = float(pairs - 2 * disc)
    tau = numer / pairs
    return min(1.0, max(-1.0, tau))


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Ordinary least squares line: (slope, intercept, r2).

    r2 is 1 - SSE/SST. A constant target gives slope 0 and r2 0 by convention;
    zero variance in x is an error because the slope is then undefined.
    """
    x, y = _paired(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    ssx = float(dx @ dx)
    if ssx == 0.0:
        raise ValueError("zero variance in x: slope undefined")
    sst = float(dy @ dy)
    slope = float(dx @ dy) / ssx
    intercept = float(y.mean() - slope * x.mean())
    if sst == 0.0:
        return slope, intercept, 0.0
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(resid @ resid) / sst
    return slope, intercept, min(1.0, max(0.0, r2))


# ---------------------------------------------------------------------------
# closed-form theory


def theoretical_correlation(prefix_len: int, horizon: int) -> float:
    """Correlation sqrt(prefix_len / horizon) implied by shared-prefix sums."""
    if prefix_len < 1:
        raise ValueError("prefix_len must be at least 1")
    if prefix_len > horizon:
        raise ValueError("prefix_len exceeds horizon")
    return math.sqrt(prefix_len / horizon)


def min_tau_for_rho(rho_star: float, horizon: int) -> int:
    """Smallest prefix length whose theoretical correlation reaches rho_star.

    Computed as ceil(rho_star^2 * horizon) with a 1e-9 slack before the ceil:
    decimal targets such as 0.8 are not float-exact and would otherwise round
    an exact integer boundary up by one.
    """
    if not 0.0 < rho_star <= 1.0:
        raise ConfigError("target correlation must lie in (0, 1]")
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    needed = math.ceil(rho_star * rho_star * horizon - 1e-9)
    return max(1, needed)


def estimate_gap_and_noise(samples: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Held-out estimates of the best-vs-rest mean gap and the noise scale.

    samples holds one sequence of partial-reward observations per beam. The
    gap estimate is the top sample mean minus the best competitor's mean; the
    noise estimate is the pooled sample standard deviation across beams.
    """
    if len(samples) < 2:
        raise ValueError("need at least two beams")
    arrays = [np.asarray(s, dtype=np.float64) for s in samples]
    if any(a.ndim != 1 or len(a) < 2 for a in arrays):
        raise ValueError("need at least two samples per beam")
    means = np.array([a.mean() for a in arrays])
    best = int(np.argmax(means))
    others = np.delete(means, best)
    gap = float(means[best] - others.max())
    ss = sum(float(((a - a.mean()) ** 2).sum()) for a in arrays)
    dof = sum(len(a) - 1 for a in arrays)
    return gap, math.sqrt(ss / dof)


def misrejection_bound(n_beams: int, gap: float, sigma: float) -> tuple[float, float]:
    """Tail bound (n_beams - 1) * exp(-gap^2 / (4 sigma^2)) on mis-rejection.

    Returns the raw value and its clamp to [0, 1]; the raw value is reported
    unclamped so vacuous regimes (raw >= 1) stay visible. sigma is the
    sub-Gaussian parameter of one beam's partial score.
    """
    if n_beams < 1:
        raise ValueError("n_beams must be at least 1")
    if gap < 0:
        raise ValueError("gap must be non-negative")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if n_beams == 1:
        return 0.0, 0.0
    if sigma == 0.0:
        if gap == 0.0:
            raise ConfigError("vacuous configuration: gap 0 with sigma 0")
        return 0.0, 0.0
    raw = (n_beams - 1) * math.exp(-(gap * gap) / (4.0 * sigma * sigma))
    return raw, min(1.0, raw)


# ---------------------------------------------------------------------------
# Monte Carlo verification


@dataclass(frozen=True)
class BoundReport:
    """Closed-form bound against the measured mis-rejection rate."""

    n_beams: int
    prefix_len: int
    gap_at_prefix: float
    sigma_at_prefix: float
    gap_estimate: float
    sigma_estimate: float
    bound_raw: float
    bound_prob: float
    empirical_rate: float
    standard_error: float
    n_trials: int
    vacuous: bool

    @property
    def dominated(self) -> bool:
        """Whether the measured rate sits under bound_prob + 3 standard errors."""
        return self.empirical_rate <= self.bound_prob + 3.0 * self.standard_error

    def to_dict(self) -> dict:
        return {
            "n_beams": self.n_beams,
            "prefix_len": self.prefix_len,
            "gap_at_prefix": self.gap_at_prefix,
            "sigma_at_prefix": self.sigma_at_prefix,
            "gap_estimate": self.gap_estimate,
            "sigma_estimate": self.sigma_estimate,
            "bound_raw": self.bound_raw,
            "bound_prob": self.bound_prob,
            "empirical_rate": self.empirical_rate,
            "standard_error": self.standard_error,
            "n_trials": self.n_trials,
            "vacuous": self.vacuous,
            "dominated": self.dominated,
            "score_mode": SCORE_MODE,
        }


def _bound_chunk(args) -> tuple[np.ndarray, np.ndarray]:
    n_beams, expansion_factor, prefix_len, horizon, pop, seeds = args
    return misrejection_batch(n_beams, expansion_factor, prefix_len, horizon, pop, seeds)


def _true_gap_and_sigma(pop: BeamPopulation, n_beams: int) -> tuple[float, float]:
    means = np.array([m.mean for m in pop.models[:n_beams]])
    best = int(np.argmax(means))
    others = np.delete(means, best)
    gap = float(means[best] - others.max()) if len(others) else 0.0
    # heterogeneous stds take the most conservative per-token parameter
    sigma = max(m.std for m in pop.models[:n_beams])
    return gap, sigma


def verify_bound(
    cfg: SearchConfig,
    pop: BeamPopulation,
    n_trials: int,
    workers: int = 1,
) -> BoundReport:
    """Monte Carlo mis-rejection rate against the closed-form bound.

    Runs n_trials flat single-step trials at cfg's beam_width, expansion
    factor, prefix_len, and horizon. The bound is evaluated at the
    population's true per-token gap and noise scaled to prefix sums
    (gap * prefix_len, sigma * sqrt(prefix_len)); held-out style estimates of
    the same two quantities are reported from the trial partials.
    """
    cfg = validate_config(cfg)
    if n_trials < 1:
        raise ConfigError("n_trials must be at least 1")
    n, m, tau, horizon = cfg.beam_width, cfg.expansion_factor, cfg.prefix_len, cfg.horizon

    seeds = np.array(
        [derive_seed(cfg.seed, (t,)) for t in range(n_trials)], dtype=np.uint64
    )
    chunks = [
        (n, m, tau, horizon, pop, seeds[lo : lo + _CHUNK])
        for lo in range(0, n_trials, _CHUNK)
    ]
    results = ordered_map(_bound_chunk, chunks, workers)
    flags = np.concatenate([r[0] for r in results])
    partials = np.concatenate([r[1] for r in results], axis=0)

    rate = float(flags.mean())
    se = math.sqrt(rate * (1.0 - rate) / n_trials)
    gap_tok, sigma_tok = _true_gap_and_sigma(pop, n)
    gap_tau = tau * gap_tok
    sigma_tau = math.sqrt(tau) * sigma_tok
    raw, prob = misrejection_bound(n, gap_tau, sigma_tau)
    if n_trials >= 2 and n >= 2:
        gap_hat, sigma_hat = estimate_gap_and_noise([partials[:, b] for b in range(n)])
    else:
        gap_hat, sigma_hat = float("nan"), float("nan")
    return BoundReport(
        n_beams=n,
        prefix_len=tau,
        gap_at_prefix=gap_tau,
        sigma_at_prefix=sigma_tau,
        gap_estimate=gap_hat,
        sigma_estimate=sigma_hat,
        bound_raw=raw,
        bound_prob=prob,
        empirical_rate=rate,
        standard_error=se,
        n_trials=n_trials,
        vacuous=prob >= 1.0,
    )


@dataclass(frozen=True)
class CorrelationReport:
    """Empirical vs theoretical agreement of prefix and full-horizon rewards."""

    prefix_len: int
    horizon: int
    pearson_empirical: float
    pearson_theoretical: float
    kendall: float
    fit_slope: float
    fit_intercept: float
    fit_r2: float
    n_trials: int


def _corr_chunk(args) -> tuple[np.ndarray, np.ndarray]:
    model, horizon, prefix_lens, seed, start, count = args
    stream = KeyedStream(seed)
    lanes = np.array(
        [stream.lane((trial,)) for trial in range(start, start + count)], dtype=np.uint64
    )
    scores = model_scores(model, lanes, 0, horizon)
    csum = np.cumsum(scores, axis=1)
    cols = np.array(prefix_lens, dtype=np.int64) - 1
    return csum[:, cols], csum[:, horizon - 1]


def correlation_study(
    model: BeamScoreModel,
    prefix_lens: Sequence[int],
    horizon: int,
    n_trials: int,
    seed: int,
    workers: int = 1,
) -> list[CorrelationReport]:
    """Prefix-sum vs full-sum agreement for each requested prefix length.

    Each trial draws one fresh lane of horizon token scores; every prefix
    length reads its partial sum off the same trial, so rows share sample
    paths exactly as partial and final rewards share prefixes. Rows come back
    sorted by ascending prefix length.
    """
    taus = sorted(set(int(t) for t in prefix_lens))
    if not taus:
        raise ConfigError("prefix_lens must be non-empty")
    if taus[0] < 1 or taus[-1] > horizon:
        raise ConfigError("prefix lengths must lie in [1, horizon]")
    if n_trials < 2:
        raise ConfigError("n_trials must be at least 2")
    if model.std <= 0:
        raise ConfigError("correlation study needs token_std > 0")

    chunks = [
        (model, horizon, tuple(taus), seed, lo, min(_CHUNK, n_trials - lo))
        for lo in range(0, n_trials, _CHUNK)
    ]
    results = ordered_map(_corr_chunk, chunks, workers)
    partials = np.concatenate([r[0] for r in results], axis=0)
    finals = np.concatenate([r[1] for r in results])

    reports = []
    for j, tau in enumerate(taus):
        p = partials[:, j]
        slope, intercept, r2 = linear_fit(p, finals)
        reports.append(
            CorrelationReport(
                prefix_len=tau,
                horizon=horizon,
                pearson_empirical=pearson(p, finals),
                pearson_theoretical=theoretical_correlation(tau, horizon),
                kendall=kendall_tau(p, finals),
                fit_slope=slope,
                fit_intercept=intercept,
                fit_r2=r2,
                n_trials=n_trials,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# compute cost model


@dataclass(frozen=True)
class CostModel:
    """FLOP accounting convention: flops_per_param_token * params * tokens.

    The constant defaults to 2 (one multiply-accumulate per parameter per
    token, forward pass only) and is explicit so any other convention is a
    config change, not a code change.
    """

    gen_params: float
    prm_params: float
    flops_per_param_token: float = 2.0

    def __post_init__(self) -> None:
        for name in ("gen_params", "prm_params", "flops_per_param_token"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class FlopReport:
    gen_flops: float
    prm_flops: float
    total_flops: float


def run_flops(ledger: RunLedger, cost: CostModel) -> FlopReport:
    """FLOPs implied by a run ledger under the cost model."""
    gen = cost.flops_per_param_token * cost.gen_params * ledger.gen_tokens_total
    prm = cost.flops_per_param_token * cost.prm_params * ledger.prm_tokens_scored
    return FlopReport(gen, prm, gen + prm)


def batching_plan(
    memory_budget: float, per_beam_token_mem: float, prefix_len: int, step_len: int
) -> tuple[int, int]:
    """Batch sizes for the two phases under a fixed memory budget.

    The prefix phase holds prefix_len tokens per beam and fits
    floor(budget / (mem * prefix_len)) beams; the completion phase holds full
    steps and fits floor(budget / (mem * step_len)). The prefix batch is
    always at least as large.
    """
    if memory_budget <= 0 or per_beam_token_mem <= 0:
        raise ValueError("memory quantities must be positive")
    if prefix_len < 1 or step_len < 1:
        raise ValueError("token lengths must be positive")
    if prefix_len > step_len:
        raise ValueError("prefix_len exceeds step_len")
    b_large = math.floor(memory_budget / (per_beam_token_mem * prefix_len))
    b_small = math.floor(memory_budget / (per_beam_token_mem * step_len))
    if b_small == 0:
        raise ValueError("step does not fit in memory")
    return b_large, b_small
