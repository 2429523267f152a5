"""Run-record schema.

Run stores are line-delimited JSON, UTF-8, one run per line. Keys follow
the declaration order of `RunRecord` and nested types, enumerations are
written as their wire tokens and separators are compact, so that equal
records serialize to identical bytes.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import os
import pathlib
import typing as t
from collections import Counter

import attrs
from attrs import define

from .constants import MAX_ACTION_ENTROPY, SCHEMA_VERSION
from .engine import summarize_turns
from .records import (
    ConditionSpec,
    Outcome,
    RunMetrics,
    RunRecord,
    TerminalState,
    TurnRecord,
)

logger = logging.getLogger(__name__)

PathLike = t.Union[str, os.PathLike]


def _value_serializer(instance: t.Any, attribute: t.Any, value: t.Any) -> t.Any:
    if isinstance(value, enum.Enum):
        return value.value
    return value


def to_dict(obj: t.Any) -> t.Dict[str, t.Any]:
    """JSON-ready mapping of an attrs instance."""
    return attrs.asdict(obj, value_serializer=_value_serializer)


def dump_line(obj: t.Any) -> str:
    """Canonical JSON line (no trailing newline) of an attrs instance or
    mapping."""
    data = to_dict(obj) if attrs.has(type(obj)) else obj
    return json.dumps(data, separators=(",", ":"), allow_nan=False)


@define(frozen=True)
class Schema:
    """Run-record schema."""

    version: int = SCHEMA_VERSION

    def validate(self, record: RunRecord) -> t.List[str]:
        """Check a run record against the record invariants.

        Args:
            record: Run record.

        Returns:
            Every violation found, as messages; empty if the record is valid.
        """
        logger.debug("Validating run %s", record.run_id)
        violations: t.List[str] = []

        logger.debug("Checking the schema version")
        if record.schema_version != self.version:
            violations.append(
                f"schema_version {record.schema_version} does not match "
                f"{self.version}"
            )

        logger.debug("Checking that turn indices strictly increase")
        indices = [turn.turn_index for turn in record.turns]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            violations.append(f"turn indices are not strictly increasing: {indices}")

        logger.debug("Checking the action entropy bounds")
        entropy = record.metrics.action_entropy
        if entropy < 0.0:
            violations.append(f"entropy is negative ({entropy})")
        elif entropy > MAX_ACTION_ENTROPY + 1e-9:
            violations.append(f"entropy exceeds log2(5)≈2.3219 ({entropy})")

        logger.debug("Checking per-agent turn counts against the turn cap")
        per_agent = Counter(turn.agent_id for turn in record.turns)
        most = max(per_agent.values(), default=0)
        if most > record.turn_cap:
            violations.append(
                f"an agent took {most} turns, more than the turn cap "
                f"{record.turn_cap}"
            )

        logger.debug("Checking the exhaustion flag")
        state = record.terminal_state
        reached = (
            state.round_count >= record.turn_cap
            if state is not None
            else most >= record.turn_cap
        )
        if record.exhausted != reached:
            violations.append(
                f"exhausted is {record.exhausted} but the turn cap "
                f"{record.turn_cap} was {'' if reached else 'not '}reached"
            )

        if state is not None:
            logger.debug("Checking the outcome against the terminal state")
            count = (
                state.round_count
                if record.min_turn_unit == "rounds"
                else state.turn_count
            )
            if (
                record.outcome is Outcome.DEADLOCK
                and state.authority_active
                and count >= record.authority_min_turns
            ):
                violations.append(
                    "DEADLOCK with an active authority after "
                    f"{count} {record.min_turn_unit} (minimum "
                    f"{record.authority_min_turns})"
                )
            if state.agreement is not None and record.outcome is not state.agreement:
                violations.append(
                    f"outcome {record.outcome.value} differs from the agreement "
                    f"{state.agreement.value}"
                )

        logger.debug("Checking stored metrics against the turns")
        expected = summarize_turns(record.turns, record.outcome)
        if not _metrics_match(record.metrics, expected):
            violations.append(
                f"stored metrics {to_dict(record.metrics)} differ from metrics "
                f"recomputed from the turns {to_dict(expected)}"
            )

        if not violations:
            logger.debug("Run %s is valid", record.run_id)
        return violations

    def convert(self, data: t.Mapping[str, t.Any]) -> RunRecord:
        """Build a run record from its mapping form.

        Raises:
            ValueError: If the mapping does not describe a run record.
        """
        try:
            data = dict(data)
            turns = [TurnRecord(**turn) for turn in data.pop("turns")]
            metrics = RunMetrics(**data.pop("metrics"))
            condition = data.pop("condition", None)
            state = data.pop("terminal_state", None)
            return RunRecord(
                turns=turns,
                metrics=metrics,
                condition=None if condition is None else ConditionSpec(**condition),
                terminal_state=None if state is None else TerminalState(**state),
                **data,
            )
        except (TypeError, KeyError, AttributeError) as e:
            msg = f"not a run record: {e}"
            logger.critical(msg)
            raise ValueError(msg) from e


schema = Schema()


def _metrics_match(stored: RunMetrics, expected: RunMetrics) -> bool:
    a, b = to_dict(stored), to_dict(expected)
    entropy_a, entropy_b = a.pop("action_entropy"), b.pop("action_entropy")
    return a == b and math.isclose(entropy_a, entropy_b, abs_tol=1e-12)


def validate_run_record(record: RunRecord) -> t.List[str]:
    """Invariant violations of `record` (empty list when valid)."""
    return schema.validate(record)


def serialize_run(record: RunRecord) -> str:
    """Canonical one-line form of a run record.

    Raises:
        ValueError: If the record violates an invariant.
    """
    violations = schema.validate(record)
    if violations:
        msg = f"refusing to serialize invalid run {record.run_id}: {violations}"
        logger.critical(msg)
        raise ValueError(msg)
    return dump_line(record)


def deserialize_run(line: str) -> RunRecord:
    """Inverse of `serialize_run`.

    Raises:
        ValueError: If the line is not a JSON run record.
    """
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        msg = f"not a JSON line: {e}"
        logger.critical(msg)
        raise ValueError(msg) from e
    if not isinstance(data, dict):
        msg = "a run line must hold a JSON object"
        logger.critical(msg)
        raise ValueError(msg)
    return schema.convert(data)


def read_runs(path: PathLike, check_version: bool = True) -> t.List[RunRecord]:
    """Read a run store.

    Args:
        path: Line-delimited run file.
        check_version: Reject records written with another schema version.

    Raises:
        ValueError: If a line is malformed or has the wrong schema version.

    Returns:
        Run records, in file order.
    """
    records = []
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = deserialize_run(line)
            except ValueError as e:
                msg = f"{path}:{number}: {e}"
                logger.critical(msg)
                raise ValueError(msg) from e
            if check_version and record.schema_version != SCHEMA_VERSION:
                msg = (
                    f"{path}:{number}: schema version {record.schema_version}, "
                    f"expected {SCHEMA_VERSION}"
                )
                logger.critical(msg)
                raise ValueError(msg)
            records.append(record)
    return records


def append_runs(path: PathLike, records: t.Iterable[RunRecord]) -> int:
    """Append run records to a run store, creating it if needed.

    Returns:
        Number of records written.
    """
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [serialize_run(record) + "\n" for record in records]
    with open(path, "a", encoding="utf-8", newline="\n") as f:
        f.writelines(lines)
    return len(lines)


def write_lines(path: PathLike, objects: t.Iterable[t.Any]) -> None:
    """Write attrs instances or mappings as a line-delimited JSON file."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(dump_line(obj) + "\n" for obj in objects)
