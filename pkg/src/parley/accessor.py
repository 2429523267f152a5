"""Accessor module.

`runs_frame` flattens run records into a table with one row per run; the
``DataFrame.parley`` accessor adds run-table operations to such tables.
"""
from __future__ import annotations

import logging
import typing as t

import pandas as pd

from .records import Outcome, RunRecord

logger = logging.getLogger(__name__)

CELL = ["experiment_id", "model_family", "condition_id"]

COLUMNS = [
    "run_id",
    *CELL,
    "run_index",
    "seed",
    "n_turns",
    "outcome",
    "exhausted",
    "action_entropy",
    "concession_arc",
    "parse_success",
    "provider_error_turns",
    "format_error_turns",
    "zero_action",
    "first_concession_turn",
    "authority_subtype",
]


def runs_frame(records: t.Iterable[RunRecord]) -> pd.DataFrame:
    """One row per run, in record order."""
    rows = [
        {
            "run_id": r.run_id,
            "experiment_id": r.experiment_id,
            "model_family": r.model_family,
            "condition_id": r.condition_id,
            "run_index": r.run_index,
            "seed": r.seed,
            "n_turns": len(r.turns),
            "outcome": r.outcome.value,
            "exhausted": r.exhausted,
            "action_entropy": r.metrics.action_entropy,
            "concession_arc": r.metrics.concession_arc,
            "parse_success": r.metrics.parse_success,
            "provider_error_turns": r.metrics.provider_error_turns,
            "format_error_turns": r.metrics.format_error_turns,
            "zero_action": r.metrics.zero_action,
            "first_concession_turn": r.metrics.first_concession_turn,
            "authority_subtype": r.metrics.authority_subtype,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=COLUMNS)


@pd.api.extensions.register_dataframe_accessor("parley")
class ParleyAccessor:
    """Parley accessor."""

    def __init__(self, pandas_obj: pd.DataFrame):
        missing = [c for c in COLUMNS if c not in pandas_obj.columns]
        if missing:
            raise AttributeError(f"not a run table, missing columns {missing}")
        self._obj = pandas_obj

    @property
    def error_free(self) -> pd.Series:
        """Mask of runs without provider-error or format-error turns."""
        df = self._obj
        return (df["provider_error_turns"] == 0) & (df["format_error_turns"] == 0)

    def error_excluded(self) -> pd.DataFrame:
        """Runs without any error turn."""
        df = self._obj[self.error_free]
        logger.debug("error exclusion kept %d of %d runs", len(df), len(self._obj))
        return df

    def cell_keys(self) -> t.List[t.Tuple[str, str, str]]:
        """Distinct (experiment, family, condition) cells, in order of first
        appearance."""
        keys = self._obj[CELL].drop_duplicates()
        return [tuple(row) for row in keys.itertuples(index=False)]

    def outcome_counts(self) -> pd.DataFrame:
        """Outcome counts per cell, every outcome as a column."""
        counts = (
            self._obj.groupby(CELL, sort=False)["outcome"]
            .value_counts()
            .unstack(fill_value=0)
        )
        columns = [o.value for o in Outcome]
        return counts.reindex(columns=columns, fill_value=0).astype(int)

    def primary_endpoints(self) -> pd.DataFrame:
        """Mean action entropy, concession-arc rate, exhaustion rate and
        parse-success rate per cell."""
        df = self._obj.astype(
            {"concession_arc": float, "exhausted": float, "parse_success": float}
        )
        return df.groupby(CELL, sort=False).agg(
            n_runs=("run_id", "count"),
            action_entropy=("action_entropy", "mean"),
            concession_arc_rate=("concession_arc", "mean"),
            max_turn_exhaustion_rate=("exhausted", "mean"),
            parse_success_rate=("parse_success", "mean"),
        )
