"""Report tables and charts built from condition summaries."""
from __future__ import annotations

import json
import logging
import pathlib
import typing as t

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from .metrics import ConditionSummary, qualify
from .records import Outcome
from .stats import ContrastResult

matplotlib.use("Agg")

logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "parley", "svg.fonttype": "path"}

# summary attribute: (chart title, CI attribute)
CHARTED_METRICS = {
    "action_entropy_mean": ("Action entropy [bits]", "action_entropy_ci"),
    "concession_arc_rate": ("Concession-arc rate", "concession_arc_ci"),
    "max_turn_exhaustion_rate": ("Max-turn exhaustion rate", "max_turn_exhaustion_ci"),
}

OUTCOME_COLORS = {
    Outcome.COMPROMISE: "#4c72b0",
    Outcome.CONSENSUS: "#55a868",
    Outcome.AUTHORITY_DECISION: "#c44e52",
    Outcome.DEADLOCK: "#8c8c8c",
}


def read_summaries(directory: pathlib.Path) -> t.List[ConditionSummary]:
    """Condition summaries written by the aggregation, in file order."""
    path = pathlib.Path(directory) / "summaries.jsonl"
    if not path.exists():
        return []
    summaries = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            data = json.loads(line)
            summaries.append(
                ConditionSummary(
                    **{
                        k: tuple(v) if k.endswith("_ci") else v
                        for k, v in data.items()
                    }
                )
            )
    return summaries


def read_contrasts(directory: pathlib.Path) -> t.List[ContrastResult]:
    path = pathlib.Path(directory) / "contrasts.jsonl"
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as f:
        return [ContrastResult(**json.loads(line)) for line in f if line.strip()]


def _with_ci(value: float, ci: t.Tuple[float, float]) -> str:
    return f"{value:.3f} [{ci[0]:.3f}, {ci[1]:.3f}]"


def _sorted(summaries: t.Iterable[ConditionSummary]) -> t.List[ConditionSummary]:
    return sorted(
        summaries, key=lambda s: (s.experiment_id, s.model_family, s.condition_id)
    )


# -- tables -----------------------------------------------------------------


def primary_table(summaries: t.Sequence[ConditionSummary]) -> pd.DataFrame:
    """Authority count, action entropy, exhaustion and concession arc per
    cell."""
    return pd.DataFrame(
        [
            {
                "Experiment": s.experiment_id,
                "Family": s.model_family,
                "Condition": s.condition_id,
                "Authority": f"{s.outcome_counts[Outcome.AUTHORITY_DECISION.value]}"
                f"/{s.n_runs}",
                "Entropy": _with_ci(s.action_entropy_mean, s.action_entropy_ci),
                "Exhaustion": _with_ci(
                    s.max_turn_exhaustion_rate, s.max_turn_exhaustion_ci
                ),
                "Arc": _with_ci(s.concession_arc_rate, s.concession_arc_ci),
            }
            for s in _sorted(summaries)
        ]
    )


def outcome_table(summaries: t.Sequence[ConditionSummary]) -> pd.DataFrame:
    """Outcome distribution and outcome entropy per cell."""
    rows = []
    for s in _sorted(summaries):
        row = {
            "Experiment": s.experiment_id,
            "Family": s.model_family,
            "Condition": s.condition_id,
        }
        row.update({o.value: s.outcome_counts[o.value] for o in Outcome})
        row["Outcome entropy"] = round(s.outcome_entropy, 6)
        row["Active unresolved"] = s.authority_subtypes["active_unresolved"]
        row["Hardline escalation"] = s.authority_subtypes["hardline_escalation"]
        rows.append(row)
    return pd.DataFrame(rows)


def reliability_table(summaries: t.Sequence[ConditionSummary]) -> pd.DataFrame:
    """Parse success and error burden per cell."""
    return pd.DataFrame(
        [
            {
                "Experiment": s.experiment_id,
                "Family": s.model_family,
                "Condition": s.condition_id,
                "Parse success": _with_ci(s.parse_success_rate, s.parse_success_ci),
                "Provider-error turns": _with_ci(
                    s.avg_provider_error_turns, s.provider_error_turns_ci
                ),
                "Format-error turns": f"{s.avg_format_error_turns:.3f}",
                "Zero-action runs": s.zero_action_runs,
                "First concession": "-"
                if s.first_concession_turn_mean is None
                else f"{s.first_concession_turn_mean:.1f}",
                "Diversity": "-"
                if s.trajectory_diversity is None
                else f"{s.trajectory_diversity:.3f}",
            }
            for s in _sorted(summaries)
        ]
    )


def qualification_table(summaries: t.Sequence[ConditionSummary]) -> pd.DataFrame:
    """Sampler-qualification screen per cell."""
    rows = []
    for s in _sorted(summaries):
        result = qualify(s)
        rows.append(
            {
                "Experiment": s.experiment_id,
                "Family": s.model_family,
                "Condition": s.condition_id,
                "Qualified": "yes" if result.passed else "no",
                "Failed checks": ", ".join(result.failed_checks) or "-",
            }
        )
    return pd.DataFrame(rows)


def perturbation_table(summaries: t.Sequence[ConditionSummary]) -> pd.DataFrame:
    """Compact per-cell view used to compare scenario variants of one
    grammar."""
    return pd.DataFrame(
        [
            {
                "Experiment": s.experiment_id,
                "Family": s.model_family,
                "Condition": s.condition_id,
                "Cmp.": s.outcome_counts[Outcome.COMPROMISE.value],
                "Cns.": s.outcome_counts[Outcome.CONSENSUS.value],
                "Auth.": s.outcome_counts[Outcome.AUTHORITY_DECISION.value],
                "H": f"{s.action_entropy_mean:.3f}",
                "Arc": f"{s.concession_arc_rate:.3f}",
                "Exh.": f"{s.max_turn_exhaustion_rate:.3f}",
                "Parse": f"{s.parse_success_rate:.3f}",
            }
            for s in _sorted(summaries)
        ]
    )


def contrast_table(contrasts: t.Sequence[ContrastResult]) -> pd.DataFrame:
    """Contrasts, primary family first."""
    ordered = sorted(
        contrasts,
        key=lambda c: (
            c.family != "primary",
            c.experiment_id,
            c.model_family,
            c.group_a,
            c.group_b,
            c.metric_name,
        ),
    )
    return pd.DataFrame(
        [
            {
                "Experiment": c.experiment_id,
                "Family": c.model_family,
                "Metric": c.metric_name,
                "A": c.group_a,
                "B": c.group_b,
                "Mean A": f"{c.group_a_mean:.3f}",
                "Mean B": f"{c.group_b_mean:.3f}",
                "Diff": f"{c.mean_diff:.3f}",
                "p": f"{c.p_value:.4f}",
                "p (Holm)": "-" if c.p_holm is None else f"{c.p_holm:.4f}",
                "Cliff's delta": f"{c.cliffs_delta:.3f}",
                "Contrast family": c.family,
            }
            for c in ordered
        ]
    )


# -- charts -----------------------------------------------------------------


def _save_svg(fig: Figure, path: pathlib.Path) -> None:
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _cell_labels(summaries: t.Sequence[ConditionSummary]) -> t.List[str]:
    return [f"{s.model_family}\n{s.condition_id}" for s in summaries]


def metric_chart(
    summaries: t.Sequence[ConditionSummary], metric: str, path: pathlib.Path
) -> None:
    """Bar chart of one metric over the cells of an experiment, with CIs."""
    title, ci_name = CHARTED_METRICS[metric]
    values = np.array([getattr(s, metric) for s in summaries])
    cis = np.array([getattr(s, ci_name) for s in summaries])
    errors = np.clip(np.vstack([values - cis[:, 0], cis[:, 1] - values]), 0.0, None)
    x = np.arange(len(summaries))

    fig = Figure(figsize=(max(4.0, 1.2 * len(summaries)), 4.0))
    ax = fig.add_subplot()
    ax.bar(x, values, yerr=errors, capsize=4, color="#4c72b0", edgecolor="black")
    ax.set_xticks(x)
    ax.set_xticklabels(_cell_labels(summaries), fontsize=7)
    ax.set_ylabel(title)
    ax.set_title(f"{title}: {summaries[0].experiment_id}")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    _save_svg(fig, path)


def outcome_chart(summaries: t.Sequence[ConditionSummary], path: pathlib.Path) -> None:
    """Stacked outcome counts over the cells of an experiment."""
    x = np.arange(len(summaries))
    fig = Figure(figsize=(max(4.0, 1.2 * len(summaries)), 4.0))
    ax = fig.add_subplot()
    bottom = np.zeros(len(summaries))
    for outcome, color in OUTCOME_COLORS.items():
        counts = np.array([s.outcome_counts[outcome.value] for s in summaries])
        ax.bar(x, counts, bottom=bottom, color=color, label=outcome.value)
        bottom += counts
    ax.set_xticks(x)
    ax.set_xticklabels(_cell_labels(summaries), fontsize=7)
    ax.set_ylabel("Runs")
    ax.set_title(f"Outcomes: {summaries[0].experiment_id}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)


def error_chart(summaries: t.Sequence[ConditionSummary], path: pathlib.Path) -> None:
    """Average provider-error and format-error turns per run."""
    x = np.arange(len(summaries))
    width = 0.4
    fig = Figure(figsize=(max(4.0, 1.2 * len(summaries)), 4.0))
    ax = fig.add_subplot()
    ax.bar(
        x - width / 2,
        [s.avg_provider_error_turns for s in summaries],
        width,
        color="#dd8452",
        label="provider error",
    )
    ax.bar(
        x + width / 2,
        [s.avg_format_error_turns for s in summaries],
        width,
        color="#8172b3",
        label="format error",
    )
    ax.set_xticks(x)
    ax.set_xticklabels(_cell_labels(summaries), fontsize=7)
    ax.set_ylabel("Error turns per run")
    ax.set_title(f"Error burden: {summaries[0].experiment_id}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)


# -- report -----------------------------------------------------------------


def _markdown(table: pd.DataFrame) -> str:
    return table.to_markdown(index=False, disable_numparse=True)


def write_report(
    summaries_dir: pathlib.Path, report_dir: pathlib.Path
) -> t.List[pathlib.Path]:
    """Render the summaries of a store as markdown, CSV and SVG files.

    Args:
        summaries_dir: Directory holding ``summaries.jsonl`` and, optionally,
            ``contrasts.jsonl``.
        report_dir: Output directory.

    Returns:
        Written files, sorted; empty when there is nothing to report.
    """
    summaries = _sorted(read_summaries(summaries_dir))
    if not summaries:
        logger.warning("no summaries in %s", summaries_dir)
        return []
    contrasts = read_contrasts(summaries_dir)
    report_dir = pathlib.Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    written: t.List[pathlib.Path] = []

    tables = {
        "primary": ("Primary endpoints", primary_table(summaries)),
        "outcomes": ("Outcome distribution", outcome_table(summaries)),
        "reliability": ("Reliability", reliability_table(summaries)),
        "qualification": ("Sampler qualification", qualification_table(summaries)),
        "perturbation": ("Within-grammar perturbations", perturbation_table(summaries)),
    }
    if contrasts:
        tables["contrasts"] = ("Contrasts", contrast_table(contrasts))

    sections = []
    for name, (title, table) in tables.items():
        path = report_dir / f"{name}.csv"
        table.to_csv(path, index=False, lineterminator="\n")
        written.append(path)
        sections.append(f"## {title}\n\n{_markdown(table)}\n")
    path = report_dir / "report.md"
    path.write_text("# Report\n\n" + "\n".join(sections), encoding="utf-8")
    written.append(path)

    experiments = sorted({s.experiment_id for s in summaries})
    for experiment in experiments:
        cells = [s for s in summaries if s.experiment_id == experiment]
        for metric in CHARTED_METRICS:
            path = report_dir / f"{experiment}__{metric}.svg"
            metric_chart(cells, metric, path)
            written.append(path)
        path = report_dir / f"{experiment}__outcomes.svg"
        outcome_chart(cells, path)
        written.append(path)
        path = report_dir / f"{experiment}__errors.svg"
        error_chart(cells, path)
        written.append(path)

    logger.info("report written to %s (%d files)", report_dir, len(written))
    return sorted(written)
