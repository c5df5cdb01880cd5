"""Experiment driver behind the CLI.

Reads one JSON config document, runs coupled searches, sweeps, correlation
studies, and bound checks, and writes the artifacts: ledger JSON, sweep CSV,
correlation CSV, bound JSON, plus a rendered figure next to each delimited
output. Everything here is deterministic in (config, seed), including under
worker pools, because all randomness is keyed and all output ordering is a
post-collection sort.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from ._parallel import ordered_map
from .analysis import (
    CostModel,
    correlation_study,
    min_tau_for_rho,
    run_flops,
    verify_bound,
)
from .core import (
    DOMAIN_CELL,
    ConfigError,
    SearchConfig,
    derive_seed,
    search_config_from_dict,
    validate_config,
)
from .oracle import (
    GAUSSIAN,
    UNIFORM,
    BeamPopulation,
    BeamScoreModel,
    MonotoneNoiseModel,
    homogeneous_population,
    make_population,
)
from .search import (
    EARLY_REJECTION,
    VANILLA,
    StrategySpec,
    coupled_run,
    exhaustive_argmax,
    run_search,
)

ORACLE_POPULATION = "population"
ORACLE_MAPPED = "mapped"

# strategy codes feed sweep-cell seed derivation; renumbering breaks replay
_STRATEGY_CODE = {VANILLA: 0, EARLY_REJECTION: 1}

SWEEP_HEADER = [
    "strategy",
    "N",
    "M",
    "tau",
    "success_rate",
    "gen_tokens",
    "prm_tokens",
    "mean_total_flops",
    "flop_ratio_vs_vanilla",
    "n_trials",
]
SWEEP_NOTE = (
    "# success_rate is oracle-relative: the fraction of trials where the "
    "strategy returned the same beam as an unpruned full-completion argmax "
    "on the identical keyed stream"
)

CORRELATION_HEADER = [
    "tau",
    "L",
    "pearson_emp",
    "pearson_theory",
    "kendall",
    "slope",
    "intercept",
    "r2",
    "n_trials",
]

_DEFAULT_TRIALS = 1000


# ---------------------------------------------------------------------------
# config ingestion


@dataclass(frozen=True)
class OracleSpec:
    """Parsed "oracle" section; builds populations on demand."""

    kind: str
    gap: float = 0.0
    base_mean: float = 0.0
    token_std: float = 1.0
    token_dist: str = GAUSSIAN
    mapped: Optional[MonotoneNoiseModel] = None

    def population(self, n_beams: int) -> BeamPopulation:
        if self.kind != ORACLE_POPULATION:
            raise ConfigError(
                f"oracle kind {self.kind!r} does not define a beam population"
            )
        if self.gap == 0.0:
            return homogeneous_population(
                n_beams, self.base_mean, self.token_std, self.token_dist
            )
        return make_population(
            n_beams, self.gap, self.base_mean, self.token_std, self.token_dist
        )

    def score_model(self) -> BeamScoreModel:
        if self.kind != ORACLE_POPULATION:
            raise ConfigError(
                f"oracle kind {self.kind!r} does not define a token score model"
            )
        return BeamScoreModel(self.base_mean, self.token_std, self.token_dist)


@dataclass(frozen=True)
class SweepSpec:
    """Parsed "sweep" section; axis lists stay None until provided."""

    prefix_lens: Optional[tuple[int, ...]] = None
    beam_widths: Optional[tuple[int, ...]] = None
    strategies: Optional[tuple[str, ...]] = None
    trials: int = _DEFAULT_TRIALS
    output_dir: Optional[str] = None


@dataclass(frozen=True)
class ExperimentSpec:
    search: SearchConfig
    oracle: OracleSpec
    cost: CostModel
    sweep: SweepSpec


def _check_keys(doc: dict, allowed: Sequence[str], section: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {section} section")


def _number(doc: dict, key: str, section: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ConfigError(f"{section} section is missing {key!r}")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number")
    return float(value)


def _int_list(doc: dict, key: str, section: str) -> Optional[tuple[int, ...]]:
    if key not in doc:
        return None
    values = doc[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{section}.{key} must be a non-empty list")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"{section}.{key} entries must be positive integers")
        out.append(v)
    if len(set(out)) != len(out):
        raise ConfigError(f"duplicate value in {section}.{key}")
    return tuple(out)


def parse_oracle(doc: dict) -> OracleSpec:
    if not isinstance(doc, dict):
        raise ConfigError("oracle section must be an object")
    kind = doc.get("kind")
    if kind == ORACLE_POPULATION:
        _check_keys(
            doc, ("kind", "gap", "base_mean", "token_std", "token_dist"), "oracle"
        )
        dist = doc.get("token_dist", GAUSSIAN)
        if dist not in (GAUSSIAN, UNIFORM):
            raise ConfigError(f"unknown token_dist {dist!r}")
        gap = _number(doc, "gap", "oracle", default=0.0)
        if gap < 0:
            raise ConfigError("oracle.gap must be non-negative")
        std = _number(doc, "token_std", "oracle", default=1.0)
        if std < 0:
            raise ConfigError("oracle.token_std must be non-negative")
        return OracleSpec(
            kind=ORACLE_POPULATION,
            gap=gap,
            base_mean=_number(doc, "base_mean", "oracle", default=0.0),
            token_std=std,
            token_dist=dist,
        )
    if kind == ORACLE_MAPPED:
        allowed = (
            "kind",
            "map_kind",
            "noise_std",
            "noise_dist",
            "steepness",
            "midpoint",
            "knots",
        )
        _check_keys(doc, allowed, "oracle")
        knots = doc.get("knots")
        if knots is not None:
            knots = tuple(tuple(point) for point in knots)
        mapped = MonotoneNoiseModel(
            map_kind=doc.get("map_kind", "identity"),
            noise_std=_number(doc, "noise_std", "oracle", default=0.0),
            noise_dist=doc.get("noise_dist", GAUSSIAN),
            steepness=_number(doc, "steepness", "oracle", default=8.0),
            midpoint=_number(doc, "midpoint", "oracle", default=0.5),
            knots=knots,
        )
        return OracleSpec(kind=ORACLE_MAPPED, mapped=mapped)
    raise ConfigError(f"oracle.kind must be {ORACLE_POPULATION!r} or {ORACLE_MAPPED!r}")


def parse_cost(doc: Optional[dict]) -> CostModel:
    if doc is None:
        return CostModel(gen_params=1e9, prm_params=1e9)
    if not isinstance(doc, dict):
        raise ConfigError("cost section must be an object")
    _check_keys(doc, ("gen_params", "prm_params", "flops_per_param_token"), "cost")
    return CostModel(
        gen_params=_number(doc, "gen_params", "cost", default=1e9),
        prm_params=_number(doc, "prm_params", "cost", default=1e9),
        flops_per_param_token=_number(
            doc, "flops_per_param_token", "cost", default=2.0
        ),
    )


def parse_sweep(doc: Optional[dict]) -> SweepSpec:
    if doc is None:
        return SweepSpec()
    if not isinstance(doc, dict):
        raise ConfigError("sweep section must be an object")
    _check_keys(
        doc,
        ("prefix_lens", "beam_widths", "strategies", "trials", "output_dir"),
        "sweep",
    )
    strategies = None
    if "strategies" in doc:
        raw = doc["strategies"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("sweep.strategies must be a non-empty list")
        for name in raw:
            if name not in _STRATEGY_CODE:
                raise ConfigError(f"unknown strategy {name!r}")
        if len(set(raw)) != len(raw):
            raise ConfigError("duplicate value in sweep.strategies")
        strategies = tuple(raw)
    trials = doc.get("trials", _DEFAULT_TRIALS)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError("sweep.trials must be a positive integer")
    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("sweep.output_dir must be a string")
    return SweepSpec(
        prefix_lens=_int_list(doc, "prefix_lens", "sweep"),
        beam_widths=_int_list(doc, "beam_widths", "sweep"),
        strategies=strategies,
        trials=trials,
        output_dir=output_dir,
    )


def parse_experiment(doc: dict) -> ExperimentSpec:
    """Parse the whole config document; unknown keys anywhere are errors."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(doc, ("search", "oracle", "cost", "sweep"), "config")
    if "search" not in doc:
        raise ConfigError("config is missing the search section")
    if "oracle" not in doc:
        raise ConfigError("config is missing the oracle section")
    return ExperimentSpec(
        search=search_config_from_dict(doc["search"]),
        oracle=parse_oracle(doc["oracle"]),
        cost=parse_cost(doc.get("cost")),
        sweep=parse_sweep(doc.get("sweep")),
    )


def load_experiment(
    path: str,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
) -> ExperimentSpec:
    """Read and parse a config file, applying CLI overrides."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    spec = parse_experiment(doc)
    if seed is not None:
        if seed < 0 or seed > 0xFFFFFFFFFFFFFFFF:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        spec = replace(spec, search=replace(spec.search, seed=seed))
    if trials is not None:
        if trials < 1:
            raise ConfigError("trials must be a positive integer")
        spec = replace(spec, sweep=replace(spec.sweep, trials=trials))
    return spec


# ---------------------------------------------------------------------------
# serialization helpers


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows, note: Optional[str] = None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if note:
            fh.write(note + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(
    spec: ExperimentSpec, out_dir: str, trace: bool = False
) -> dict:
    """One coupled run; writes both ledgers, a summary, and a figure."""
    cfg = spec.search
    pop = spec.oracle.population(cfg.beam_width)
    van, er = coupled_run(cfg, pop)
    os.makedirs(out_dir, exist_ok=True)

    van_doc = van.to_dict()
    er_doc = er.to_dict()
    van_flops = run_flops(van, spec.cost)
    er_flops = run_flops(er, spec.cost)
    write_json(os.path.join(out_dir, "vanilla_ledger.json"), van_doc)
    write_json(os.path.join(out_dir, "early_rejection_ledger.json"), er_doc)

    gen_ratio = van.gen_tokens_total / er.gen_tokens_total
    flop_ratio = van_flops.total_flops / er_flops.total_flops
    agree = van.best_path == er.best_path
    lines = [
        "coupled strategy comparison",
        f"seed: {cfg.seed}",
        (
            f"beam_width N={cfg.beam_width}, expansion M={cfg.expansion_factor}, "
            f"keep p={cfg.keep_count}"
        ),
        (
            f"prefix tau={cfg.prefix_len}, step s={cfg.step_len}, "
            f"steps K={cfg.num_steps}, horizon L={cfg.horizon}"
        ),
        "",
        "strategy          gen_tokens  prm_tokens  total_flops",
        (
            f"vanilla           {van.gen_tokens_total:<11d} "
            f"{van.prm_tokens_scored:<11d} {van_flops.total_flops!r}"
        ),
        (
            f"early_rejection   {er.gen_tokens_total:<11d} "
            f"{er.prm_tokens_scored:<11d} {er_flops.total_flops!r}"
        ),
        "",
        f"generation token ratio (vanilla / early_rejection): {gen_ratio!r}",
        f"total FLOP ratio (vanilla / early_rejection): {flop_ratio!r}",
        f"best path vanilla: {list(van.best_path)!r}",
        f"best path early_rejection: {list(er.best_path)!r}",
        f"strategies agree on best path: {agree}",
    ]
    with open(
        os.path.join(out_dir, "simulate_summary.txt"), "w", encoding="utf-8"
    ) as fh:
        fh.write("\n".join(lines) + "\n")

    if trace:
        with open(
            os.path.join(out_dir, "survivor_trace.jsonl"), "w", encoding="utf-8"
        ) as fh:
            for name, ledger in ((VANILLA, van), (EARLY_REJECTION, er)):
                for step, survivors in enumerate(ledger.survivors_per_step):
                    fh.write(
                        json.dumps(
                            {
                                "strategy": name,
                                "step": step,
                                "survivors": [list(p) for p in survivors],
                            }
                        )
                        + "\n"
                    )

    from .plots import comparison_figure

    comparison_figure(van_doc, er_doc, os.path.join(out_dir, "comparison.png"))
    return {"vanilla": van_doc, "early_rejection": er_doc, "agree": agree}


# ---------------------------------------------------------------------------
# sweep


def _run_cell(args: tuple) -> tuple:
    """One sweep cell: fixed (strategy, N, tau), trials sequential inside."""
    (strategy, n_beams, tau, search_doc, oracle, cost, trials) = args
    base = SearchConfig(
        beam_width=n_beams,
        expansion_factor=search_doc["expansion_factor"],
        prefix_len=tau,
        step_len=search_doc["step_len"],
        num_steps=search_doc["num_steps"],
        horizon=search_doc["horizon"],
        seed=0,
    )
    pop = oracle.population(n_beams)
    cell_seed = derive_seed(
        search_doc["seed"], (_STRATEGY_CODE[strategy], n_beams, tau), DOMAIN_CELL
    )
    hits = 0
    flops_sum = 0.0
    ratio_sum = 0.0
    gen_tokens = 0
    prm_tokens = 0
    for trial in range(trials):
        cfg = replace(base, seed=derive_seed(cell_seed, (trial,)))
        if strategy == VANILLA:
            ledger = run_search(cfg, pop, StrategySpec(VANILLA))
            ratio_sum += 1.0
        else:
            van, ledger = coupled_run(cfg, pop)
            van_total = run_flops(van, cost).total_flops
            ratio_sum += van_total / run_flops(ledger, cost).total_flops
        best_path, _ = exhaustive_argmax(cfg, pop)
        hits += int(ledger.best_path == best_path)
        flops_sum += run_flops(ledger, cost).total_flops
        gen_tokens = ledger.gen_tokens_total
        prm_tokens = ledger.prm_tokens_scored
    return (
        strategy,
        n_beams,
        base.expansion_factor,
        tau,
        hits / trials,
        gen_tokens,
        prm_tokens,
        flops_sum / trials,
        ratio_sum / trials,
        trials,
    )


def cmd_sweep(spec: ExperimentSpec, out_dir: str, workers: int = 1) -> list[tuple]:
    """Full cross-product of (strategy, N, tau); one CSV row per cell."""
    sweep = spec.sweep
    if sweep.prefix_lens is None:
        raise ConfigError("sweep requires sweep.prefix_lens")
    if sweep.beam_widths is None:
        raise ConfigError("sweep requires sweep.beam_widths")
    if sweep.strategies is None:
        raise ConfigError("sweep requires sweep.strategies")

    search_doc = {
        "expansion_factor": spec.search.expansion_factor,
        "step_len": spec.search.step_len,
        "num_steps": spec.search.num_steps,
        "horizon": spec.search.horizon,
        "seed": spec.search.seed,
    }
    cells = []
    for strategy in sorted(sweep.strategies):
        for n_beams in sorted(sweep.beam_widths):
            for tau in sorted(sweep.prefix_lens):
                # validate each cell's shape up front so a bad axis value
                # fails before any work is scheduled
                validate_config(
                    SearchConfig(
                        beam_width=n_beams,
                        expansion_factor=spec.search.expansion_factor,
                        prefix_len=tau,
                        step_len=spec.search.step_len,
                        num_steps=spec.search.num_steps,
                        horizon=spec.search.horizon,
                        seed=0,
                    )
                )
                cells.append(
                    (
                        strategy,
                        n_beams,
                        tau,
                        search_doc,
                        spec.oracle,
                        spec.cost,
                        sweep.trials,
                    )
                )
    rows = ordered_map(_run_cell, cells, workers=workers)
    rows.sort(key=lambda r: (r[0], r[1], r[3]))

    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_HEADER, rows, note=SWEEP_NOTE)

    from .plots import sweep_figure

    sweep_figure(rows, os.path.join(out_dir, "sweep.png"))
    return rows


# ---------------------------------------------------------------------------
# correlate


def cmd_correlate(spec: ExperimentSpec, out_dir: str, workers: int = 1) -> list[tuple]:
    """Prefix-vs-final correlation study over the configured tau grid."""
    if spec.sweep.prefix_lens is None:
        raise ConfigError("correlate requires sweep.prefix_lens")
    reports = correlation_study(
        spec.oracle.score_model(),
        spec.sweep.prefix_lens,
        spec.search.horizon,
        spec.sweep.trials,
        spec.search.seed,
        workers=workers,
    )
    rows = [
        (
            r.prefix_len,
            r.horizon,
            r.pearson_empirical,
            r.pearson_theoretical,
            r.kendall,
            r.fit_slope,
            r.fit_intercept,
            r.fit_r2,
            r.n_trials,
        )
        for r in reports
    ]
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "correlation.csv"), CORRELATION_HEADER, rows)

    from .plots import correlation_figure

    correlation_figure(rows, os.path.join(out_dir, "correlation.png"))
    return rows


# ---------------------------------------------------------------------------
# verify-bound


def cmd_verify_bound(spec: ExperimentSpec, out_dir: str, workers: int = 1) -> dict:
    """Monte Carlo check of the mis-rejection tail bound; writes bound JSON."""
    pop = spec.oracle.population(spec.search.beam_width)
    report = verify_bound(spec.search, pop, spec.sweep.trials, workers=workers)
    doc = report.to_dict()
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "bound.json"), doc)

    from .plots import bound_figure

    bound_figure(doc, os.path.join(out_dir, "bound.png"))
    return doc


# ---------------------------------------------------------------------------
# plan-tau


def cmd_plan_tau(rho_star: float, horizon: int) -> int:
    """Smallest prefix length whose design correlation reaches rho_star."""
    return min_tau_for_rho(rho_star, horizon)
