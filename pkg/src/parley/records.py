"""Negotiation vocabulary and record types.

Actions, outcomes and error classes are enumerations whose values are the
canonical wire tokens. Turns, runs, scenarios and conditions are immutable
`attrs` classes; every other module reads and writes these types.
"""
from __future__ import annotations

import enum
import logging
import typing as t

from attrs import field, frozen, validators

from .constants import (
    DEFAULT_AUTHORITY_MIN_TURNS,
    DEFAULT_LEDGER_CHAR_BUDGET,
    DEFAULT_MIN_TURN_UNIT,
    DEFAULT_TEMPERATURE,
    DEFAULT_TIMEOUT_FLOOR_MS,
    DEFAULT_TRANSCRIPT_WINDOW,
    DEFAULT_TURN_CAP,
    MIN_TURN_UNITS,
    SCHEMA_VERSION,
)

logger = logging.getLogger(__name__)


class Action(enum.Enum):
    """Public negotiation move."""

    SUPPORT = "SUPPORT"
    OPPOSE = "OPPOSE"
    CONCEDE = "CONCEDE"
    COUNTER = "COUNTER"
    EXIT = "EXIT"


class Outcome(enum.Enum):
    """Terminal outcome of a run."""

    COMPROMISE = "COMPROMISE"
    CONSENSUS = "CONSENSUS"
    AUTHORITY_DECISION = "AUTHORITY_DECISION"
    DEADLOCK = "DEADLOCK"


class ErrorClass(enum.Enum):
    """Turn-level error class recorded in place of an action."""

    FORMAT_ERROR = "FORMAT_ERROR"
    PROVIDER_ERROR = "PROVIDER_ERROR"


class FormatErrorReason(enum.Enum):
    """Why a turn's text could not be parsed."""

    MISSING_HEADER = "missing_header"
    UNKNOWN_TOKEN = "unknown_token"
    EMPTY_OUTPUT = "empty_output"


class ProviderError(enum.Enum):
    """Why a backend returned no text."""

    TIMEOUT = "timeout"
    TRANSPORT = "transport"
    RATE_LIMIT = "rate_limit"
    MALFORMED_RESPONSE = "malformed_response"


class Reflection(enum.Enum):
    """Reflection condition."""

    NONE = "NONE"
    SCAFFOLD = "SCAFFOLD"
    NATIVE = "NATIVE"
    SCAFFOLD_PLUS_NATIVE = "SCAFFOLD_PLUS_NATIVE"


class LedgerVariant(enum.Enum):
    """Private ledger variant."""

    NEGOTIATION = "NEGOTIATION"
    NEUTRAL_LABEL = "NEUTRAL_LABEL"
    ORTHOGONAL_PROCESS = "ORTHOGONAL_PROCESS"
    ABSENT = "ABSENT"


class ReasoningEffort(enum.Enum):
    """Provider reasoning mode requested by a condition."""

    OFF = "OFF"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"
    PROVIDER_NATIVE = "PROVIDER_NATIVE"


class Termination(enum.Enum):
    """Reason an episode stopped."""

    AGREEMENT = "agreement"
    EXIT_COLLAPSE = "exit_collapse"
    TURN_CAP = "turn_cap"


def _optional(enum_cls: t.Type[enum.Enum]) -> t.Callable:
    def convert(value: t.Any) -> t.Any:
        return None if value is None else enum_cls(value)

    return convert


def _parsed(value: t.Any) -> t.Union[Action, ErrorClass]:
    if isinstance(value, (Action, ErrorClass)):
        return value
    try:
        return Action(value)
    except ValueError:
        return ErrorClass(value)


_non_negative = [validators.instance_of(int), validators.ge(0)]
_positive = [validators.instance_of(int), validators.gt(0)]


@frozen(kw_only=True)
class TurnRecord:
    """One agent turn.

    `parsed` holds either the parsed action or the error class of the turn;
    the matching sub-reason is stored in `format_error` or `provider_error`.
    `message` is the public message (empty for error turns).
    """

    turn_index: int = field(validator=_non_negative)
    agent_id: str = field(validator=validators.instance_of(str))
    raw_text: str = field(validator=validators.instance_of(str))
    parsed: t.Union[Action, ErrorClass] = field(converter=_parsed)
    latency_ms: int = field(default=0, validator=_non_negative)
    tokens_out: int = field(default=0, validator=_non_negative)
    message: str = ""
    format_error: t.Optional[FormatErrorReason] = field(
        default=None, converter=_optional(FormatErrorReason)
    )
    provider_error: t.Optional[ProviderError] = field(
        default=None, converter=_optional(ProviderError)
    )

    def __attrs_post_init__(self):
        if (self.parsed is ErrorClass.FORMAT_ERROR) != (self.format_error is not None):
            msg = (
                f"turn {self.turn_index}: format_error sub-reason must be set iff "
                f"parsed is FORMAT_ERROR (got {self.parsed}, {self.format_error})"
            )
            logger.critical(msg)
            raise ValueError(msg)
        if (self.parsed is ErrorClass.PROVIDER_ERROR) != (
            self.provider_error is not None
        ):
            msg = (
                f"turn {self.turn_index}: provider_error sub-reason must be set "
                f"iff parsed is PROVIDER_ERROR (got {self.parsed}, "
                f"{self.provider_error})"
            )
            logger.critical(msg)
            raise ValueError(msg)

    @property
    def action(self) -> t.Optional[Action]:
        """Parsed action, or `None` for error turns."""
        return self.parsed if isinstance(self.parsed, Action) else None


@frozen(kw_only=True)
class RunMetrics:
    """Per-run metric map."""

    action_entropy: float
    concession_arc: bool
    parse_success: bool
    provider_error_turns: int
    format_error_turns: int
    zero_action: bool = False
    first_concession_turn: t.Optional[int] = None
    authority_subtype: t.Optional[str] = None


@frozen(kw_only=True)
class TerminalState:
    """Negotiation state kept with a run so it can be re-classified."""

    turn_count: int
    round_count: int
    authority_active: bool
    agreement: t.Optional[Outcome] = field(default=None, converter=_optional(Outcome))
    termination: Termination = field(converter=Termination)


def _validate_unit(instance, attribute, value):
    if value not in MIN_TURN_UNITS:
        msg = f"{attribute.name} must be one of {MIN_TURN_UNITS}, got {value!r}"
        logger.critical(msg)
        raise ValueError(msg)


@frozen(kw_only=True)
class ConditionSpec:
    """Reflection condition and provider settings of one matrix column."""

    condition_id: str
    reflection: Reflection = field(converter=Reflection)
    ledger_variant: LedgerVariant = field(converter=LedgerVariant)
    token_floor: int = field(validator=_positive)
    temperature: float = field(
        default=DEFAULT_TEMPERATURE,
        converter=float,
        validator=validators.ge(0.0),
    )
    reasoning_effort: ReasoningEffort = field(
        default=ReasoningEffort.OFF, converter=ReasoningEffort
    )
    timeout_floor_ms: int = field(default=DEFAULT_TIMEOUT_FLOOR_MS, validator=_positive)
    ledger_char_budget: int = field(
        default=DEFAULT_LEDGER_CHAR_BUDGET, validator=_positive
    )

    def __attrs_post_init__(self):
        ledger = self.ledger_variant
        if self.reflection is Reflection.NONE and ledger is not LedgerVariant.ABSENT:
            msg = (
                f"condition {self.condition_id}: reflection NONE requires "
                f"ledger_variant ABSENT, got {ledger.value}"
            )
            logger.critical(msg)
            raise ValueError(msg)
        if self.reflection is Reflection.NATIVE and ledger is not LedgerVariant.ABSENT:
            msg = (
                f"condition {self.condition_id}: reflection NATIVE requires "
                f"ledger_variant ABSENT, got {ledger.value}"
            )
            logger.critical(msg)
            raise ValueError(msg)
        if (
            self.reflection in (Reflection.SCAFFOLD, Reflection.SCAFFOLD_PLUS_NATIVE)
            and ledger is LedgerVariant.ABSENT
        ):
            msg = (
                f"condition {self.condition_id}: reflection "
                f"{self.reflection.value} requires a ledger variant"
            )
            logger.critical(msg)
            raise ValueError(msg)

    @property
    def uses_ledger(self) -> bool:
        """`True` if agents keep a private ledger under this condition."""
        return self.ledger_variant is not LedgerVariant.ABSENT

    @property
    def label(self) -> str:
        """Short table label, e.g. ``"none, 384"``."""
        return f"{reflection_label(self.reflection, self.ledger_variant)}, {self.token_floor}"


def reflection_label(reflection: Reflection, ledger_variant: LedgerVariant) -> str:
    """Lower-case label of a reflection/ledger combination.

    Args:
        reflection: Reflection condition.
        ledger_variant: Ledger variant.

    Returns:
        ``"none"``, ``"native"``, ``"scaffold"``, ``"scaffold-neutral"``,
        ``"scaffold-orthogonal"`` or one of the scaffold labels followed by
        ``"+native"``.
    """
    if reflection is Reflection.NONE:
        return "none"
    if reflection is Reflection.NATIVE:
        return "native"
    scaffold = {
        LedgerVariant.NEGOTIATION: "scaffold",
        LedgerVariant.NEUTRAL_LABEL: "scaffold-neutral",
        LedgerVariant.ORTHOGONAL_PROCESS: "scaffold-orthogonal",
    }[ledger_variant]
    if reflection is Reflection.SCAFFOLD_PLUS_NATIVE:
        return f"{scaffold}+native"
    return scaffold


def condition_identifier(
    reflection: Reflection, ledger_variant: LedgerVariant, token_floor: int
) -> str:
    """Canonical condition identifier, e.g. ``"scaffold_1024"``."""
    return f"{reflection_label(reflection, ledger_variant)}_{token_floor}"


@frozen(kw_only=True)
class Actor:
    """Negotiating actor of a scenario."""

    agent_id: str
    role_label: str
    is_authority: bool = False
    brief_template: str = ""


@frozen(kw_only=True)
class ScenarioSpec:
    """Negotiation scenario."""

    scenario_id: str
    actors: t.Tuple[Actor, ...] = field(converter=tuple)
    issue_bundle: t.Tuple[str, ...] = field(converter=tuple)
    turn_cap: int = field(default=DEFAULT_TURN_CAP, validator=_positive)
    authority_min_turns: int = field(
        default=DEFAULT_AUTHORITY_MIN_TURNS, validator=_positive
    )
    min_turn_unit: str = field(default=DEFAULT_MIN_TURN_UNIT, validator=_validate_unit)
    title: str = ""
    setting: str = ""
    transcript_window: int = field(
        default=DEFAULT_TRANSCRIPT_WINDOW, validator=_positive
    )
    base: t.Optional[str] = None

    def __attrs_post_init__(self):
        if not self.actors:
            msg = f"scenario {self.scenario_id}: no actors"
            logger.critical(msg)
            raise ValueError(msg)
        ids = [a.agent_id for a in self.actors]
        if len(set(ids)) != len(ids):
            msg = f"scenario {self.scenario_id}: duplicate agent ids in {ids}"
            logger.critical(msg)
            raise ValueError(msg)
        n_authorities = sum(a.is_authority for a in self.actors)
        if n_authorities != 1:
            msg = (
                f"scenario {self.scenario_id}: exactly one actor must be the "
                f"authority, got {n_authorities}"
            )
            logger.critical(msg)
            raise ValueError(msg)
        if self.turn_cap < self.authority_min_turns:
            msg = (
                f"scenario {self.scenario_id}: turn_cap ({self.turn_cap}) must be "
                f"at least authority_min_turns ({self.authority_min_turns})"
            )
            logger.critical(msg)
            raise ValueError(msg)

    @property
    def authority(self) -> Actor:
        """The designated authority."""
        return next(a for a in self.actors if a.is_authority)

    @property
    def agent_ids(self) -> t.List[str]:
        """Agent identifiers in turn order."""
        return [a.agent_id for a in self.actors]


@frozen(kw_only=True)
class RunRecord:
    """One complete negotiation episode."""

    schema_version: int = SCHEMA_VERSION
    run_id: str
    experiment_id: str
    model_family: str
    condition_id: str
    run_index: int = 0
    seed: int
    turn_cap: int = DEFAULT_TURN_CAP
    authority_min_turns: int = DEFAULT_AUTHORITY_MIN_TURNS
    min_turn_unit: str = DEFAULT_MIN_TURN_UNIT
    condition: t.Optional[ConditionSpec] = None
    turns: t.Tuple[TurnRecord, ...] = field(converter=tuple)
    outcome: Outcome = field(converter=Outcome)
    exhausted: bool
    metrics: RunMetrics
    terminal_state: t.Optional[TerminalState] = None

    @property
    def actions(self) -> t.List[Action]:
        """Parsed actions in turn order."""
        return [turn.action for turn in self.turns if turn.action is not None]

    @property
    def has_error_turns(self) -> bool:
        """`True` if any turn carries a provider or format error."""
        return any(isinstance(turn.parsed, ErrorClass) for turn in self.turns)
