"""Run-level and condition-level behavioural metrics."""
from __future__ import annotations

import functools
import logging
import typing as t
from collections import Counter

import numpy as np
from attrs import frozen
from scipy.stats import entropy

from .constants import DEFAULT_CI_LEVEL, DEFAULT_RESAMPLES
from .records import Action, ErrorClass, Outcome, RunRecord, TurnRecord
from .stats import bootstrap_ci

logger = logging.getLogger(__name__)

ACTIVE_UNRESOLVED = "active_unresolved"
HARDLINE_ESCALATION = "hardline_escalation"

# sampler-qualification thresholds
MIN_ENTROPY_MEAN = 0.1  # bits


def _entropy_bits(counts: t.Sequence[int]) -> float:
    counts = [c for c in counts if c > 0]
    if len(counts) < 2:
        return 0.0
    return float(entropy(counts, base=2))


@functools.singledispatch
def action_entropy(value: t.Any) -> float:
    """Shannon entropy [bits] of the parsed actions of a run.

    Accepts a run record or a sequence of turn records. Error turns carry no
    action; a run without any parsed action has entropy 0 and is logged.
    """
    raise NotImplementedError(f"action_entropy is not defined for {type(value)}")


@action_entropy.register(RunRecord)
def _action_entropy_run(value: RunRecord) -> float:
    return _action_entropy_turns(value.turns)


@action_entropy.register(list)
@action_entropy.register(tuple)
def _action_entropy_turns(value: t.Sequence[TurnRecord]) -> float:
    counts = Counter(turn.action for turn in value if turn.action is not None)
    if not counts:
        logger.warning("run has no parsed action; action entropy set to 0")
        return 0.0
    return _entropy_bits(list(counts.values()))


def count_errors(turns: t.Sequence[TurnRecord], error: ErrorClass) -> int:
    """Number of turns carrying `error`."""
    return sum(turn.parsed is error for turn in turns)


def first_concession_turn(turns: t.Sequence[TurnRecord]) -> t.Optional[int]:
    """Turn index of the first CONCEDE of a run, if any."""
    for turn in turns:
        if turn.action is Action.CONCEDE:
            return turn.turn_index
    return None


def authority_subtype(outcome: Outcome, concession_arc: bool) -> t.Optional[str]:
    """Subtype of an authority decision.

    ``"active_unresolved"`` when the run shows a concession arc (bargaining
    that never closed), ``"hardline_escalation"`` otherwise; `None` for
    other outcomes.
    """
    if outcome is not Outcome.AUTHORITY_DECISION:
        return None
    return ACTIVE_UNRESOLVED if concession_arc else HARDLINE_ESCALATION


# -- condition-level rates --------------------------------------------------


def _mean(values: t.Iterable[float]) -> float:
    values = list(values)
    if not values:
        msg = "cannot average over zero runs"
        logger.critical(msg)
        raise ValueError(msg)
    return float(np.mean(values))


def concession_arc_rate(runs: t.Sequence[RunRecord]) -> float:
    """Fraction of runs with a concession arc."""
    return _mean(run.metrics.concession_arc for run in runs)


def max_turn_exhaustion_rate(runs: t.Sequence[RunRecord]) -> float:
    """Fraction of runs that reached the turn cap."""
    return _mean(run.exhausted for run in runs)


def parse_success_rate(runs: t.Sequence[RunRecord]) -> float:
    """Fraction of runs without a format-error turn."""
    return _mean(run.metrics.parse_success for run in runs)


def avg_provider_error_turns(runs: t.Sequence[RunRecord]) -> float:
    return _mean(run.metrics.provider_error_turns for run in runs)


def avg_format_error_turns(runs: t.Sequence[RunRecord]) -> float:
    return _mean(run.metrics.format_error_turns for run in runs)


def edit_distance(a: t.Sequence[t.Any], b: t.Sequence[t.Any]) -> int:
    """Levenshtein distance between two sequences."""
    row = np.arange(len(b) + 1)
    for i, x in enumerate(a, start=1):
        previous = row.copy()
        row[0] = i
        for j, y in enumerate(b, start=1):
            row[j] = min(previous[j] + 1, row[j - 1] + 1, previous[j - 1] + (x != y))
    return int(row[-1])


def normalized_edit_distance(a: t.Sequence[t.Any], b: t.Sequence[t.Any]) -> float:
    """Edit distance divided by the longer length (0 for two empty sequences)."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return edit_distance(a, b) / longest


def trajectory_diversity(runs: t.Sequence[RunRecord]) -> t.Optional[float]:
    """Mean pairwise normalized edit distance of parsed-action sequences.

    Returns:
        Value in [0, 1], or `None` for fewer than two runs.
    """
    if len(runs) < 2:
        return None
    sequences = [run.actions for run in runs]
    distances = [
        normalized_edit_distance(sequences[i], sequences[j])
        for i in range(len(sequences))
        for j in range(i + 1, len(sequences))
    ]
    return float(np.mean(distances))


def outcome_counts(runs: t.Sequence[RunRecord]) -> t.Dict[str, int]:
    """Count of each outcome, every outcome listed."""
    counts = Counter(run.outcome for run in runs)
    return {outcome.value: counts.get(outcome, 0) for outcome in Outcome}


def outcome_entropy(runs: t.Sequence[RunRecord]) -> float:
    """Shannon entropy [bits] of the terminal-outcome distribution."""
    return _entropy_bits(list(outcome_counts(runs).values()))


# -- condition summary ------------------------------------------------------


@frozen(kw_only=True)
class ConditionSummary:
    """Metric summary of one (experiment, family, condition) cell."""

    experiment_id: str
    model_family: str
    condition_id: str
    n_runs: int
    action_entropy_mean: float
    action_entropy_ci: t.Tuple[float, float]
    concession_arc_rate: float
    concession_arc_ci: t.Tuple[float, float]
    max_turn_exhaustion_rate: float
    max_turn_exhaustion_ci: t.Tuple[float, float]
    parse_success_rate: float
    parse_success_ci: t.Tuple[float, float]
    avg_provider_error_turns: float
    provider_error_turns_ci: t.Tuple[float, float]
    avg_format_error_turns: float
    trajectory_diversity: t.Optional[float]
    outcome_entropy: float
    outcome_counts: t.Dict[str, int]
    zero_action_runs: int
    first_concession_turn_mean: t.Optional[float]
    authority_subtypes: t.Dict[str, int]
    error_excluded: bool = False

    def as_row(self) -> t.Dict[str, t.Any]:
        """Flat mapping for tabular export."""
        row: t.Dict[str, t.Any] = {}
        for name in self.__attrs_attrs__:
            value = getattr(self, name.name)
            if name.name.endswith("_ci"):
                row[f"{name.name}_lo"], row[f"{name.name}_hi"] = value
            elif isinstance(value, dict):
                for key, count in value.items():
                    row[f"{name.name.removesuffix('s')}_{key.lower()}"] = count
            else:
                row[name.name] = value
        return row


def summarize_condition(
    runs: t.Sequence[RunRecord],
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    level: float = DEFAULT_CI_LEVEL,
    error_excluded: bool = False,
) -> ConditionSummary:
    """Summarize the runs of one cell.

    Args:
        runs: Runs of a single (experiment, family, condition) cell.
        resamples: Bootstrap resamples per confidence interval.
        seed: Base seed; each interval uses its own offset from it.
        level: Confidence level.
        error_excluded: Label the summary as an error-excluded reanalysis.

    Raises:
        ValueError: If `runs` is empty or mixes cells.

    Returns:
        Condition summary.
    """
    if not runs:
        msg = "cannot summarize an empty cell"
        logger.critical(msg)
        raise ValueError(msg)
    cells = {(r.experiment_id, r.model_family, r.condition_id) for r in runs}
    if len(cells) != 1:
        msg = f"runs belong to several cells: {sorted(cells)}"
        logger.critical(msg)
        raise ValueError(msg)
    (experiment_id, model_family, condition_id), = cells

    def ci(values: t.Iterable[float], offset: int) -> t.Tuple[float, float]:
        return bootstrap_ci(
            list(values), level=level, resamples=resamples, seed=seed + offset
        )

    entropies = [run.metrics.action_entropy for run in runs]
    concessions = [
        run.metrics.first_concession_turn
        for run in runs
        if run.metrics.first_concession_turn is not None
    ]
    subtypes = Counter(run.metrics.authority_subtype for run in runs)

    return ConditionSummary(
        experiment_id=experiment_id,
        model_family=model_family,
        condition_id=condition_id,
        n_runs=len(runs),
        action_entropy_mean=_mean(entropies),
        action_entropy_ci=ci(entropies, 0),
        concession_arc_rate=concession_arc_rate(runs),
        concession_arc_ci=ci((r.metrics.concession_arc for r in runs), 1),
        max_turn_exhaustion_rate=max_turn_exhaustion_rate(runs),
        max_turn_exhaustion_ci=ci((r.exhausted for r in runs), 2),
        parse_success_rate=parse_success_rate(runs),
        parse_success_ci=ci((r.metrics.parse_success for r in runs), 3),
        avg_provider_error_turns=avg_provider_error_turns(runs),
        provider_error_turns_ci=ci((r.metrics.provider_error_turns for r in runs), 4),
        avg_format_error_turns=avg_format_error_turns(runs),
        trajectory_diversity=trajectory_diversity(runs),
        outcome_entropy=outcome_entropy(runs),
        outcome_counts=outcome_counts(runs),
        zero_action_runs=sum(run.metrics.zero_action for run in runs),
        first_concession_turn_mean=float(np.mean(concessions)) if concessions else None,
        authority_subtypes={
            ACTIVE_UNRESOLVED: subtypes.get(ACTIVE_UNRESOLVED, 0),
            HARDLINE_ESCALATION: subtypes.get(HARDLINE_ESCALATION, 0),
        },
        error_excluded=error_excluded,
    )


@frozen
class Qualification:
    """Result of the sampler-qualification screen for one cell."""

    experiment_id: str
    model_family: str
    condition_id: str
    failed_checks: t.Tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failed_checks


def qualify(summary: ConditionSummary) -> Qualification:
    """Screen a cell for rigid, non-negotiated behaviour.

    A cell fails ``near_zero_diversity`` when its mean action entropy is
    below 0.1 bits, ``zero_concession`` when no run shows a concession arc
    and ``universal_exhaustion`` when every run hit the turn cap.
    """
    failed = []
    if summary.action_entropy_mean < MIN_ENTROPY_MEAN:
        failed.append("near_zero_diversity")
    if summary.concession_arc_rate == 0.0:
        failed.append("zero_concession")
    if summary.max_turn_exhaustion_rate == 1.0:
        failed.append("universal_exhaustion")
    return Qualification(
        summary.experiment_id,
        summary.model_family,
        summary.condition_id,
        tuple(failed),
    )
