"""Core module: running, aggregating and sweeping run matrices."""
from __future__ import annotations

import logging
import pathlib
import threading
import typing as t
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor, as_completed

import pandas as pd
from attrs import define, evolve, field

from . import accessor  # noqa: F401  registers DataFrame.parley
from .accessor import runs_frame
from .backends.core import Gateway
from .backends.factory import factory
from .backends.scripted import ScriptedPolicy
from .config import (
    FamilySpec,
    MatrixConfig,
    ResolvedMatrix,
    resolve,
    resolve_condition,
    slug,
)
from .engine import classify_state, run_episode
from .metrics import ConditionSummary, summarize_condition
from .records import (
    ConditionSpec,
    LedgerVariant,
    Outcome,
    Reflection,
    RunRecord,
    ScenarioSpec,
    condition_identifier,
)
from .schema import append_runs, read_runs, to_dict, validate_run_record, write_lines
from .stats import ContrastResult, contrast, holm_adjust

logger = logging.getLogger(__name__)

CellKey = t.Tuple[str, str, str]

# name of the contrasted metric: run-level value
PRIMARY_ENDPOINTS: t.Dict[str, t.Callable[[RunRecord], float]] = {
    "action_entropy": lambda r: r.metrics.action_entropy,
    "concession_arc_rate": lambda r: float(r.metrics.concession_arc),
    "max_turn_exhaustion_rate": lambda r: float(r.exhausted),
}

SWEEP_KINDS = ("min_turn_rule", "temperature", "token_budget")

SWEEP_DEFAULTS: t.Dict[str, t.Tuple[float, ...]] = {
    "min_turn_rule": (4, 5, 6),
    "temperature": (0.3, 0.7, 1.0),
    "token_budget": (384, 1024),
}


# -- run --------------------------------------------------------------------


def cell_path(
    runs_dir: pathlib.Path, experiment: str, family: str, condition: str
) -> pathlib.Path:
    """Run file of a cell."""
    return runs_dir / f"{slug(experiment)}__{slug(family)}__{slug(condition)}.jsonl"


def make_agents(
    family: FamilySpec,
    spec: ScenarioSpec,
    seed: int,
    semaphore: t.Optional[threading.BoundedSemaphore] = None,
) -> t.List[Gateway]:
    """One gateway per actor of `spec` for a run of `family`.

    Scripted actors get a seed derived from the run seed and their position,
    and non-authority actors are offset in the active-unresolved cycle by
    their ordinal among non-authority actors.
    """
    if family.is_scripted:
        agents = []
        ordinal = 0
        for index, actor in enumerate(spec.actors):
            phase = 0 if actor.is_authority else ordinal
            ordinal += not actor.is_authority
            policy = ScriptedPolicy.from_identifier(
                family.policy, rng_seed=seed * 64 + index, phase=phase
            )
            agents.append(Gateway(factory.create("scripted", policy=policy), semaphore))
        return agents

    backend = factory.create(
        family.kind,
        model=family.model,
        base_url=family.base_url,
        api_key_env=family.api_key_env,
        reasoning_style=family.reasoning_style,
        retries=family.retries,
        backoff_factor=family.backoff_factor,
    )
    return [Gateway(backend, semaphore) for _ in spec.actors]


@define
class MatrixRun:
    """Tally of a `run_matrix` call."""

    written: int = 0
    skipped: int = 0
    failed: t.List[str] = field(factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def _stored_run_ids(path: pathlib.Path) -> t.Set[str]:
    if not path.exists():
        return set()
    return {record.run_id for record in read_runs(path)}


def run_matrix(
    config: MatrixConfig,
    resolved: t.Optional[ResolvedMatrix] = None,
    workers: t.Optional[int] = None,
    resume: bool = True,
) -> MatrixRun:
    """Execute every run of a matrix and append the records to the cell files.

    Args:
        config: Matrix configuration.
        resolved: Resolved definitions (default: ``resolve(config)``).
        workers: Number of concurrent episodes (default: ``config.workers``).
        resume: Skip runs already stored; without it, cell files are
            rewritten.

    Raises:
        ValueError: If the matrix does not resolve; nothing is run then.

    Returns:
        Counts of written and skipped runs and the ids of failed runs.
    """
    resolved = resolved or resolve(config)
    workers = workers or config.workers
    semaphores = {
        family_id: threading.BoundedSemaphore(family.max_concurrency)
        for family_id, family in resolved.families.items()
        if family.max_concurrency
    }

    tally = MatrixRun()
    jobs: t.Dict[CellKey, t.List[int]] = {}
    indices: t.Dict[CellKey, int] = {}
    for cell_index, experiment, family, condition in config.cells():
        key = (experiment, family, condition)
        path = cell_path(config.runs_dir, *key)
        if not resume and path.exists():
            path.unlink()
        done = _stored_run_ids(path)
        pending = []
        for run_index in range(config.runs_per_cell):
            run_id = f"{experiment}/{family}/{condition}/{run_index:03d}"
            if run_id in done:
                tally.skipped += 1
            else:
                pending.append(run_index)
        if pending:
            jobs[key] = pending
            indices[key] = cell_index

    def episode(key: CellKey, run_index: int) -> RunRecord:
        experiment, family, condition = key
        spec = resolved.scenarios[experiment]
        seed = config.seed(indices[key], run_index)
        agents = make_agents(
            resolved.families[family], spec, seed, semaphores.get(family)
        )
        return run_episode(
            spec,
            agents,
            resolved.conditions[condition],
            seed,
            model_family=family,
            experiment_id=experiment,
            run_index=run_index,
        )

    remaining = {key: len(runs) for key, runs in jobs.items()}
    finished: t.Dict[CellKey, t.List[RunRecord]] = defaultdict(list)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(episode, key, run_index): (key, run_index)
            for key, runs in jobs.items()
            for run_index in runs
        }
        for future in as_completed(futures):
            key, run_index = futures[future]
            try:
                finished[key].append(future.result())
            except Exception as e:
                run_id = f"{'/'.join(key)}/{run_index:03d}"
                logger.warning("run %s failed: %r", run_id, e)
                tally.failed.append(run_id)
            remaining[key] -= 1
            if remaining[key] == 0:
                records = sorted(finished.pop(key, []), key=lambda r: r.run_index)
                try:
                    tally.written += append_runs(
                        cell_path(config.runs_dir, *key), records
                    )
                except (OSError, ValueError) as e:
                    logger.warning("cell %s: write failed: %r", "/".join(key), e)
                    tally.failed.extend(record.run_id for record in records)
                    continue
                logger.info("cell %s: %d runs written", "/".join(key), len(records))

    tally.failed.sort()
    return tally


# -- aggregate --------------------------------------------------------------


def load_store(runs_dir: pathlib.Path) -> t.List[RunRecord]:
    """Read and validate every run file of a store.

    Raises:
        ValueError: If a file holds a record of another schema version or a
            record violating an invariant.
    """
    records = []
    for path in sorted(pathlib.Path(runs_dir).glob("*.jsonl")):
        for record in read_runs(path):
            violations = validate_run_record(record)
            if violations:
                msg = f"{path}: invalid run {record.run_id}: {violations}"
                logger.critical(msg)
                raise ValueError(msg)
            records.append(record)
    return records


def group_cells(records: t.Iterable[RunRecord]) -> t.Dict[CellKey, t.List[RunRecord]]:
    """Runs grouped by cell, cells sorted by key and runs by run index."""
    cells: t.Dict[CellKey, t.List[RunRecord]] = defaultdict(list)
    for record in records:
        cells[(record.experiment_id, record.model_family, record.condition_id)].append(
            record
        )
    return {
        key: sorted(cells[key], key=lambda r: r.run_index) for key in sorted(cells)
    }


def _condition_of(runs: t.Sequence[RunRecord]) -> t.Optional[ConditionSpec]:
    if runs[0].condition is not None:
        return runs[0].condition
    try:
        return resolve_condition(runs[0].condition_id)
    except ValueError:
        return None


def _is_negotiation_scaffold(condition: t.Optional[ConditionSpec]) -> bool:
    return (
        condition is not None
        and condition.reflection is Reflection.SCAFFOLD
        and condition.ledger_variant is LedgerVariant.NEGOTIATION
    )


def _is_reflection(condition: t.Optional[ConditionSpec], reflection: Reflection) -> bool:
    return condition is not None and condition.reflection is reflection


@define
class Aggregate:
    """Condition summaries and contrasts of a run store."""

    summaries: t.List[ConditionSummary] = field(factory=list)
    contrasts: t.List[ContrastResult] = field(factory=list)

    def summaries_frame(self) -> pd.DataFrame:
        return pd.DataFrame([s.as_row() for s in self.summaries])

    def contrasts_frame(self) -> pd.DataFrame:
        return pd.DataFrame([to_dict(c) for c in self.contrasts])


def build_contrasts(
    cells: t.Dict[CellKey, t.List[RunRecord]],
    n_shuffles: int,
    seed: int,
    error_excluded: bool = False,
) -> t.List[ContrastResult]:
    """Scaffold-versus-native contrasts (Holm-adjusted within each experiment
    and family) and scaffold-versus-none supporting contrasts."""
    by_group: t.Dict[t.Tuple[str, str], t.List[CellKey]] = defaultdict(list)
    for key in cells:
        by_group[key[:2]].append(key)

    results: t.List[ContrastResult] = []
    for (experiment, family), keys in by_group.items():
        conditions = {key: _condition_of(cells[key]) for key in keys}
        scaffold = [k for k in keys if _is_negotiation_scaffold(conditions[k])]
        native = [k for k in keys if _is_reflection(conditions[k], Reflection.NATIVE)]
        none = [k for k in keys if _is_reflection(conditions[k], Reflection.NONE)]

        for others, family_tag in ((native, "primary"), (none, "supporting")):
            group = []
            for a in scaffold:
                for b in others:
                    for metric, value in PRIMARY_ENDPOINTS.items():
                        group.append(
                            contrast(
                                [value(r) for r in cells[a]],
                                [value(r) for r in cells[b]],
                                metric_name=metric,
                                experiment_id=experiment,
                                model_family=family,
                                group_a=a[2],
                                group_b=b[2],
                                n_shuffles=n_shuffles,
                                seed=seed + len(results) + len(group),
                                family=family_tag,
                                error_excluded=error_excluded,
                            )
                        )
            if family_tag == "primary" and group:
                adjusted = holm_adjust([c.p_value for c in group])
                group = [evolve(c, p_holm=p) for c, p in zip(group, adjusted)]
            results.extend(group)
    return results


def aggregate_runs(
    config: MatrixConfig,
    error_excluded: bool = False,
    seed: t.Optional[int] = None,
    write: bool = True,
) -> Aggregate:
    """Summarize every cell of a run store and contrast its conditions.

    Args:
        config: Matrix configuration (store location and resampling counts).
        error_excluded: Drop runs with any provider-error or format-error
            turn first.
        seed: Base seed of the resampling (default: the matrix base seed).
        write: Write ``summaries/`` files.

    Raises:
        ValueError: If the store holds invalid records.

    Returns:
        Summaries and contrasts.
    """
    seed = config.base_seed if seed is None else seed
    records = load_store(config.runs_dir)
    if error_excluded:
        frame = runs_frame(records)
        keep = set(frame.parley.error_excluded()["run_id"])
        logger.info("error exclusion keeps %d of %d runs", len(keep), len(records))
        records = [r for r in records if r.run_id in keep]

    cells = group_cells(records)
    summaries = [
        summarize_condition(
            runs,
            resamples=config.resamples,
            seed=seed + 10 * index,
            level=config.ci_level,
            error_excluded=error_excluded,
        )
        for index, runs in enumerate(cells.values())
    ]
    result = Aggregate(
        summaries=summaries,
        contrasts=build_contrasts(cells, config.n_shuffles, seed, error_excluded),
    )
    if write:
        write_aggregate(result, summaries_dir(config, error_excluded))
    return result


def summaries_dir(config: MatrixConfig, error_excluded: bool = False) -> pathlib.Path:
    if error_excluded:
        return config.summaries_dir / "error_excluded"
    return config.summaries_dir


def write_aggregate(aggregate: Aggregate, directory: pathlib.Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    aggregate.summaries_frame().to_csv(directory / "summaries.csv", index=False)
    write_lines(directory / "summaries.jsonl", aggregate.summaries)
    aggregate.contrasts_frame().to_csv(directory / "contrasts.csv", index=False)
    write_lines(directory / "contrasts.jsonl", aggregate.contrasts)
    logger.info("summaries written to %s", directory)


# -- sweeps -----------------------------------------------------------------


def reclassify(record: RunRecord, min_turns: int) -> Outcome:
    """Outcome of a stored run under another authority minimum.

    Raises:
        ValueError: If the record has no stored terminal state.
    """
    if record.terminal_state is None:
        msg = f"run {record.run_id} has no terminal state to re-classify"
        logger.critical(msg)
        raise ValueError(msg)
    return classify_state(record.terminal_state, min_turns, record.min_turn_unit)


def sweep_min_turn_rule(
    config: MatrixConfig, values: t.Sequence[int]
) -> pd.DataFrame:
    """Re-classify every stored run at each authority minimum in `values`."""
    rows = []
    for record in load_store(config.runs_dir):
        row = {
            "run_id": record.run_id,
            "experiment_id": record.experiment_id,
            "model_family": record.model_family,
            "condition_id": record.condition_id,
            "outcome": record.outcome.value,
        }
        outcomes = {int(v): reclassify(record, int(v)).value for v in values}
        row.update({f"outcome_min_{v}": o for v, o in outcomes.items()})
        row["changed"] = len(set(outcomes.values()) | {record.outcome.value}) > 1
        rows.append(row)
    return pd.DataFrame(rows)


def _variant_conditions(
    config: MatrixConfig, kind: str, values: t.Sequence[float]
) -> t.Dict[str, ConditionSpec]:
    variants: t.Dict[str, ConditionSpec] = {}
    for identifier in config.conditions:
        base = resolve_condition(identifier, config.condition_definitions)
        for value in values:
            if kind == "temperature":
                variant = evolve(
                    base,
                    condition_id=f"{base.condition_id}@t{value:g}",
                    temperature=float(value),
                )
            else:
                variant = evolve(
                    base,
                    condition_id=condition_identifier(
                        base.reflection, base.ledger_variant, int(value)
                    ),
                    token_floor=int(value),
                )
            variants.setdefault(variant.condition_id, variant)
    return variants


def run_sweep(
    kind: str,
    config: MatrixConfig,
    values: t.Optional[t.Sequence[float]] = None,
    workers: t.Optional[int] = None,
) -> pd.DataFrame:
    """Run a robustness sweep and write it under ``sweeps/<kind>/``.

    The min-turn-rule sweep re-classifies stored runs without re-executing
    them; the temperature and token-budget sweeps re-execute the matrix with
    one condition variant per value.

    Args:
        kind: One of ``min_turn_rule``, ``temperature``, ``token_budget``.
        config: Matrix configuration.
        values: Parameter grid (default depends on `kind`).
        workers: Number of concurrent episodes for re-executing sweeps.

    Raises:
        ValueError: If `kind` is unknown, or stored runs lack a terminal
            state in a min-turn-rule sweep.

    Returns:
        Sweep table: one row per run for the min-turn-rule sweep, one row
        per cell otherwise.
    """
    if kind not in SWEEP_KINDS:
        msg = f"unknown sweep kind {kind!r}; known kinds are {SWEEP_KINDS}"
        logger.critical(msg)
        raise ValueError(msg)
    values = tuple(values) if values else SWEEP_DEFAULTS[kind]
    directory = config.sweeps_dir / kind
    directory.mkdir(parents=True, exist_ok=True)

    if kind == "min_turn_rule":
        table = sweep_min_turn_rule(config, values)
        table.to_csv(directory / "reclassified.csv", index=False)
        logger.info(
            "min-turn-rule sweep over %s: %d outcome changes",
            values,
            int(table["changed"].sum()) if len(table) else 0,
        )
        return table

    variants = _variant_conditions(config, kind, values)
    sweep_config = evolve(
        config,
        conditions=list(variants),
        condition_definitions={
            cid: {k: v for k, v in to_dict(spec).items() if k != "condition_id"}
            for cid, spec in variants.items()
        },
        output_dir=directory,
    )
    tally = run_matrix(sweep_config, workers=workers)
    table = aggregate_runs(sweep_config).summaries_frame()
    table.to_csv(directory / "sweep.csv", index=False)
    table.attrs["failed"] = tally.failed
    return table
