"""Negotiation episodes.

An episode is a round-robin turn loop over the actors of a scenario. Every
turn is parsed into an action (or an error class) and folded into a
`NegotiationState`; the episode stops at agreement, when no non-authority
agent is left, or at the turn cap. The terminal state is then classified
into an outcome by a fixed rule.
"""
from __future__ import annotations

import logging
import typing as t

import importlib_resources
from attrs import evolve, field, frozen

from .backends.core import Backend, CompletionRequest, Gateway
from .constants import LEDGER_CLOSE, LEDGER_OPEN, PRIVATE_CLOSE, PRIVATE_OPEN
from .ledger import (
    Ledger,
    init_ledger,
    ledger_instructions,
    render_private_block,
    update_ledger,
)
from .metrics import action_entropy, authority_subtype, count_errors, first_concession_turn
from .parser import FormatError, parse_success_of_run, parse_turn, split_private_update
from .records import (
    Action,
    ConditionSpec,
    ErrorClass,
    Outcome,
    RunMetrics,
    RunRecord,
    ScenarioSpec,
    TerminalState,
    Termination,
    TurnRecord,
)
from .scenarios import render_brief

logger = logging.getLogger(__name__)

REJECTING = frozenset({Action.OPPOSE, Action.COUNTER})
ACCEPTING = frozenset({Action.CONCEDE, Action.SUPPORT})
DELIMITERS = (PRIVATE_OPEN, PRIVATE_CLOSE, LEDGER_OPEN, LEDGER_CLOSE)


@frozen(kw_only=True)
class NegotiationState:
    """Negotiation state between two turns.

    `turn_count` counts agent turns (error turns included) and
    `round_count` counts completed rounds. A round completes once every
    agent still active has taken its turn.
    """

    agent_order: t.Tuple[str, ...] = field(converter=tuple)
    authority_id: str
    turn_cap: int
    turn_count: int = 0
    round_count: int = 0
    active_agents: t.FrozenSet[str] = field(converter=frozenset)
    authority_active: bool = True
    last_stance: t.Dict[str, Action] = field(factory=dict)
    conceded_ever: t.FrozenSet[str] = field(default=frozenset(), converter=frozenset)
    moved_this_round: t.FrozenSet[str] = field(default=frozenset(), converter=frozenset)
    agreement_flag: t.Optional[Outcome] = None
    terminated: bool = False
    termination: t.Optional[Termination] = None

    @property
    def negotiators(self) -> t.List[str]:
        """Active non-authority agents, in turn order."""
        return [
            a
            for a in self.agent_order
            if a in self.active_agents and a != self.authority_id
        ]


def initial_state(spec: ScenarioSpec) -> NegotiationState:
    """Negotiation state before the first turn of an episode."""
    return NegotiationState(
        agent_order=spec.agent_ids,
        authority_id=spec.authority.agent_id,
        turn_cap=spec.turn_cap,
        active_agents=spec.agent_ids,
    )


def check_agreement(state: NegotiationState) -> t.Optional[Outcome]:
    """Agreement reached at the close of a round, if any.

    Over the active non-authority agents: CONSENSUS when every last stance
    is SUPPORT and nobody ever conceded, COMPROMISE when every last stance
    is SUPPORT or CONCEDE and someone conceded.
    """
    negotiators = state.negotiators
    if not negotiators:
        return None
    stances = [state.last_stance.get(a) for a in negotiators]
    if all(s is Action.SUPPORT for s in stances) and not state.conceded_ever:
        return Outcome.CONSENSUS
    if all(s in ACCEPTING for s in stances) and state.conceded_ever:
        return Outcome.COMPROMISE
    return None


def step(state: NegotiationState, turn: TurnRecord) -> NegotiationState:
    """Fold one turn into the negotiation state.

    Args:
        state: Current state.
        turn: Turn taken by an active agent.

    Raises:
        ValueError: If the state is terminated or the agent is not active.

    Returns:
        Updated state.
    """
    if state.terminated:
        msg = f"cannot step a terminated episode (turn {turn.turn_index})"
        logger.critical(msg)
        raise ValueError(msg)
    agent = turn.agent_id
    if agent not in state.active_agents:
        msg = f"agent {agent!r} is not active"
        logger.critical(msg)
        raise ValueError(msg)

    changes: t.Dict[str, t.Any] = {
        "turn_count": state.turn_count + 1,
        "moved_this_round": state.moved_this_round | {agent},
    }
    action = turn.action
    if action is not None:
        changes["last_stance"] = {**state.last_stance, agent: action}
        if action is Action.CONCEDE:
            changes["conceded_ever"] = state.conceded_ever | {agent}
        if action is Action.EXIT:
            changes["active_agents"] = state.active_agents - {agent}
            if agent == state.authority_id:
                changes["authority_active"] = False
    state = evolve(state, **changes)

    if state.moved_this_round >= state.active_agents:
        state = evolve(
            state,
            round_count=state.round_count + 1,
            moved_this_round=frozenset(),
            agreement_flag=check_agreement(state),
        )

    if state.agreement_flag is not None:
        termination = Termination.AGREEMENT
    elif not state.negotiators:
        termination = Termination.EXIT_COLLAPSE
    elif state.round_count >= state.turn_cap:
        termination = Termination.TURN_CAP
    else:
        return state
    logger.debug("episode terminated: %s", termination.value)
    return evolve(state, terminated=True, termination=termination)


def classify_terminal(
    state: t.Union[NegotiationState, TerminalState],
    spec: ScenarioSpec,
    min_turns: t.Optional[int] = None,
) -> Outcome:
    """Outcome of a terminated episode.

    An agreement wins; otherwise the authority decides when at least
    `min_turns` (default: the scenario's) rounds, or turns if the scenario
    counts turns, have elapsed and it is still active; otherwise the run is
    a deadlock.
    """
    threshold = spec.authority_min_turns if min_turns is None else min_turns
    return classify_state(state, threshold, spec.min_turn_unit)


def classify_state(
    state: t.Union[NegotiationState, TerminalState],
    min_turns: int,
    unit: str = "rounds",
) -> Outcome:
    """Apply the outcome rule with an explicit threshold and counting unit."""
    agreement = (
        state.agreement_flag if isinstance(state, NegotiationState) else state.agreement
    )
    if agreement is not None:
        return agreement
    count = state.round_count if unit == "rounds" else state.turn_count
    if count >= min_turns and state.authority_active:
        return Outcome.AUTHORITY_DECISION
    return Outcome.DEADLOCK


def detect_concession_arc(turns: t.Sequence[TurnRecord]) -> bool:
    """`True` if one agent rejects or counters and later concedes or supports."""
    rejected: t.Set[str] = set()
    for turn in turns:
        if turn.action in REJECTING:
            rejected.add(turn.agent_id)
        elif turn.action in ACCEPTING and turn.agent_id in rejected:
            return True
    return False


def summarize_turns(turns: t.Sequence[TurnRecord], outcome: Outcome) -> RunMetrics:
    """Per-run metrics of a sequence of turns."""
    turns = tuple(turns)
    arc = detect_concession_arc(turns)
    return RunMetrics(
        action_entropy=action_entropy(turns),
        concession_arc=arc,
        parse_success=parse_success_of_run(turns),
        provider_error_turns=count_errors(turns, ErrorClass.PROVIDER_ERROR),
        format_error_turns=count_errors(turns, ErrorClass.FORMAT_ERROR),
        zero_action=all(turn.action is None for turn in turns),
        first_concession_turn=first_concession_turn(turns),
        authority_subtype=authority_subtype(outcome, arc),
    )


# -- prompt assembly --------------------------------------------------------


def system_prompt(spec: ScenarioSpec, agent_id: str) -> str:
    actor = next(a for a in spec.actors if a.agent_id == agent_id)
    template = (
        importlib_resources.files("parley.data.templates")
        .joinpath("system.txt")
        .read_text(encoding="utf-8")
    )
    return template.format(agent_id=actor.agent_id, role_label=actor.role_label)


def transcript_window(turns: t.Sequence[TurnRecord], window: int) -> str:
    """Last `window` public turns, as shown to every agent."""
    public = [
        f"[{turn.agent_id}] ACTION: {turn.action.value}\n{turn.message}".rstrip()
        for turn in turns
        if turn.action is not None
    ]
    if not public:
        return "(no turns yet)"
    return "\n\n".join(public[-window:])


def private_block(ledger: Ledger) -> str:
    return (
        f"{ledger_instructions(ledger.variant)}\n"
        f"Your ledger:\n{LEDGER_OPEN}\n{render_private_block(ledger)}\n{LEDGER_CLOSE}"
    )


def build_prompt(
    spec: ScenarioSpec,
    agent_id: str,
    turns: t.Sequence[TurnRecord],
    ledger: t.Optional[Ledger] = None,
) -> t.Tuple[t.Tuple[str, str], ...]:
    """Labelled prompt sections of `agent_id`'s next turn.

    Raises:
        RuntimeError: If a private delimiter reaches the transcript.
    """
    transcript = transcript_window(turns, spec.transcript_window)
    if any(d in transcript for d in DELIMITERS):
        raise RuntimeError("private content reached the public transcript")
    sections = [
        ("system", system_prompt(spec, agent_id)),
        ("scenario_brief", render_brief(spec, agent_id)),
        ("transcript", transcript),
    ]
    if ledger is not None:
        sections.append(("private_block", private_block(ledger)))
    return tuple(sections)


def _public(message: str) -> str:
    for delimiter in DELIMITERS:
        message = message.replace(delimiter, "")
    return message


# -- episode loop -----------------------------------------------------------


def run_episode(
    spec: ScenarioSpec,
    agents: t.Sequence[t.Union[Backend, Gateway]],
    condition: ConditionSpec,
    seed: int,
    *,
    model_family: str = "scripted",
    experiment_id: t.Optional[str] = None,
    run_index: int = 0,
    run_id: t.Optional[str] = None,
) -> RunRecord:
    """Run one negotiation episode.

    Args:
        spec: Scenario.
        agents: One backend per actor, in actor order.
        condition: Reflection condition.
        seed: Run seed, forwarded to the backends.
        model_family: Family label stored in the record.
        experiment_id: Experiment label (default: the scenario id).
        run_index: Index of the run in its cell.
        run_id: Run identifier (default:
            ``<experiment>/<family>/<condition>/<run_index:03d>``).

    Raises:
        ValueError: If the number of agents differs from the number of
            actors.

    Returns:
        Run record.
    """
    if len(agents) != len(spec.actors):
        msg = (
            f"scenario {spec.scenario_id} has {len(spec.actors)} actors but "
            f"{len(agents)} agents were given"
        )
        logger.critical(msg)
        raise ValueError(msg)

    experiment_id = experiment_id or spec.scenario_id
    run_id = run_id or (
        f"{experiment_id}/{model_family}/{condition.condition_id}/{run_index:03d}"
    )
    gateways = {
        actor.agent_id: agent if isinstance(agent, Gateway) else Gateway(agent)
        for actor, agent in zip(spec.actors, agents)
    }
    ledgers: t.Dict[str, Ledger] = {}
    if condition.uses_ledger:
        ledgers = {
            a: init_ledger(condition.ledger_variant, condition.ledger_char_budget)
            for a in spec.agent_ids
        }
    history = {a: 0 for a in spec.agent_ids}
    turns: t.List[TurnRecord] = []
    state = initial_state(spec)

    while not state.terminated:
        for agent_id in spec.agent_ids:
            if state.terminated:
                break
            if agent_id not in state.active_agents:
                continue
            request = CompletionRequest(
                prompt_sections=build_prompt(spec, agent_id, turns, ledgers.get(agent_id)),
                max_output_tokens=condition.token_floor,
                token_floor=condition.token_floor,
                temperature=condition.temperature,
                reasoning_mode=condition.reasoning_effort,
                timeout_ms=condition.timeout_floor_ms,
                seed=seed,
                history_len=history[agent_id],
            )
            result = gateways[agent_id].complete(request)
            turn = _turn_record(len(turns), agent_id, result)
            if result.text is not None and agent_id in ledgers:
                _, update = split_private_update(result.text)
                ledgers[agent_id] = update_ledger(ledgers[agent_id], update)
            history[agent_id] += 1
            turns.append(turn)
            logger.debug("%s turn %d %s: %s", run_id, turn.turn_index, agent_id, turn.parsed.value)
            state = step(state, turn)

    outcome = classify_terminal(state, spec)
    logger.info("%s finished: %s after %d rounds", run_id, outcome.value, state.round_count)
    return RunRecord(
        run_id=run_id,
        experiment_id=experiment_id,
        model_family=model_family,
        condition_id=condition.condition_id,
        run_index=run_index,
        seed=seed,
        turn_cap=spec.turn_cap,
        authority_min_turns=spec.authority_min_turns,
        min_turn_unit=spec.min_turn_unit,
        condition=condition,
        turns=turns,
        outcome=outcome,
        exhausted=state.round_count >= spec.turn_cap,
        metrics=summarize_turns(turns, outcome),
        terminal_state=TerminalState(
            turn_count=state.turn_count,
            round_count=state.round_count,
            authority_active=state.authority_active,
            agreement=state.agreement_flag,
            termination=state.termination,
        ),
    )


def _turn_record(index: int, agent_id: str, result) -> TurnRecord:
    common = dict(
        turn_index=index,
        agent_id=agent_id,
        latency_ms=result.latency_ms,
        tokens_out=result.tokens_out,
    )
    if result.text is None:
        return TurnRecord(
            raw_text="",
            parsed=ErrorClass.PROVIDER_ERROR,
            provider_error=result.provider_error,
            **common,
        )
    public, _ = split_private_update(result.text)
    parsed = parse_turn(public)
    if isinstance(parsed, FormatError):
        return TurnRecord(
            raw_text=result.text,
            parsed=ErrorClass.FORMAT_ERROR,
            format_error=parsed.reason,
            **common,
        )
    return TurnRecord(
        raw_text=result.text,
        parsed=parsed.action,
        message=_public(parsed.message),
        **common,
    )
