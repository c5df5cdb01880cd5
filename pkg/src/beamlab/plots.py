"""Figure rendering for the report paths.

Draws straight onto matplotlib Figure objects instead of pyplot so no global
state leaks between commands, and pins savefig metadata so a re-run writes a
byte-identical PNG. matplotlib is only imported when a figure is rendered;
the library paths never touch it.
"""
from __future__ import annotations

import math
from typing import Sequence

# fixed palette; cycling through a style would tie bytes to rcParams
_BLUE = "#2c6fbb"
_ORANGE = "#d2691e"
_GRAY = "#6f6f6f"
_STRATEGY_COLOR = {"vanilla": _BLUE, "early_rejection": _ORANGE}

_META = {"Software": "beamlab"}
_DPI = 100


def _new_figure(width: float, height: float):
    from matplotlib.figure import Figure

    return Figure(figsize=(width, height), dpi=_DPI)


def _save(fig, path: str) -> None:
    fig.savefig(path, format="png", dpi=_DPI, metadata=_META)


def comparison_figure(van_doc: dict, er_doc: dict, path: str) -> None:
    """Grouped bars of generator and scorer token spend per strategy."""
    fig = _new_figure(6.4, 4.0)
    ax = fig.add_subplot(111)
    labels = ["gen tokens", "scorer tokens"]
    van_vals = [van_doc["gen_tokens_total"], van_doc["prm_tokens_scored"]]
    er_vals = [er_doc["gen_tokens_total"], er_doc["prm_tokens_scored"]]
    xs = range(len(labels))
    width = 0.38
    ax.bar(
        [x - width / 2 for x in xs], van_vals, width,
        label="vanilla", color=_BLUE,
    )
    ax.bar(
        [x + width / 2 for x in xs], er_vals, width,
        label="early rejection", color=_ORANGE,
    )
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels)
    ax.set_ylabel("tokens")
    ax.set_title("token spend per strategy")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def sweep_figure(rows: Sequence[tuple], path: str) -> None:
    """Success rate and mean FLOPs against tau, one series per (strategy, N)."""
    fig = _new_figure(9.6, 4.0)
    ax_acc = fig.add_subplot(121)
    ax_cost = fig.add_subplot(122)
    series: dict[tuple[str, int], list[tuple]] = {}
    for row in rows:
        series.setdefault((row[0], row[1]), []).append(row)
    for (strategy, n_beams), cells in sorted(series.items()):
        cells.sort(key=lambda r: r[3])
        taus = [c[3] for c in cells]
        color = _STRATEGY_COLOR[strategy]
        # darker shade for wider beams so series stay tellable apart
        alpha = 0.45 + 0.55 * (
            1.0 if len({r[1] for r in rows}) == 1
            else (n_beams - min(r[1] for r in rows))
            / max(1, max(r[1] for r in rows) - min(r[1] for r in rows))
        )
        label = f"{strategy} N={n_beams}"
        ax_acc.plot(
            taus, [c[4] for c in cells], marker="o", color=color,
            alpha=alpha, label=label,
        )
        ax_cost.plot(
            taus, [c[7] for c in cells], marker="o", color=color,
            alpha=alpha, label=label,
        )
    ax_acc.set_xlabel("tau")
    ax_acc.set_ylabel("success rate")
    ax_acc.set_ylim(-0.05, 1.05)
    ax_acc.set_title("oracle-relative success")
    ax_cost.set_xlabel("tau")
    ax_cost.set_ylabel("mean total FLOPs")
    ax_cost.set_yscale("log")
    ax_cost.set_title("compute spend")
    ax_acc.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def correlation_figure(rows: Sequence[tuple], path: str) -> None:
    """Empirical prefix-final correlation against the square-root curve."""
    fig = _new_figure(6.4, 4.4)
    ax = fig.add_subplot(111)
    taus = [r[0] for r in rows]
    horizon = rows[0][1]
    grid = [1 + i * (horizon - 1) / 255.0 for i in range(256)]
    ax.plot(
        grid, [math.sqrt(t / horizon) for t in grid],
        color=_GRAY, linestyle="--", label="sqrt(tau / L)",
    )
    ax.plot(
        taus, [r[2] for r in rows], marker="o", linestyle="none",
        color=_BLUE, label="Pearson (empirical)",
    )
    ax.plot(
        taus, [r[4] for r in rows], marker="s", linestyle="none",
        color=_ORANGE, label="Kendall tau-a",
    )
    ax.set_xlabel("prefix length tau")
    ax.set_ylabel("rank / linear correlation")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"prefix score predictiveness, L={horizon}")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def bound_figure(doc: dict, path: str) -> None:
    """Empirical mis-rejection rate next to the tail bound."""
    fig = _new_figure(5.2, 4.0)
    ax = fig.add_subplot(111)
    rate = doc["empirical_rate"]
    se3 = 3.0 * doc["standard_error"]
    bound = doc["bound_prob"]
    ax.bar([0], [rate], 0.5, color=_BLUE, label="empirical rate")
    ax.errorbar([0], [rate], yerr=[[min(se3, rate)], [se3]], fmt="none",
                ecolor="black", capsize=4)
    ax.bar([1], [bound], 0.5, color=_ORANGE, label="tail bound")
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["empirical", "bound"])
    ax.set_ylabel("mis-rejection probability")
    title = f"N={doc['n_beams']}, tau={doc['prefix_len']}, trials={doc['n_trials']}"
    if doc.get("vacuous"):
        title += " (vacuous bound)"
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
