"""Test helpers."""
import typing as t

from parley.backends.scripted import ScriptedBackend, ScriptedPolicy
from parley.engine import summarize_turns
from parley.records import Action, Outcome, RunRecord, TurnRecord


def make_turns(
    actions: t.Sequence[t.Optional[Action]], agents: t.Sequence[str] = ("a", "b")
) -> t.List[TurnRecord]:
    """Turns cycling over `agents`; `None` stands for a format error."""
    turns = []
    for index, action in enumerate(actions):
        agent = agents[index % len(agents)]
        if action is None:
            turns.append(
                TurnRecord(
                    turn_index=index,
                    agent_id=agent,
                    raw_text="no header",
                    parsed="FORMAT_ERROR",
                    format_error="missing_header",
                )
            )
        else:
            turns.append(
                TurnRecord(
                    turn_index=index,
                    agent_id=agent,
                    raw_text=f"ACTION: {action.value}",
                    parsed=action,
                )
            )
    return turns


def make_run(
    outcome: Outcome = Outcome.AUTHORITY_DECISION,
    actions: t.Sequence[t.Optional[Action]] = (Action.COUNTER, Action.COUNTER),
    run_index: int = 0,
    experiment_id: str = "exp",
    model_family: str = "fam",
    condition_id: str = "none_384",
    exhausted: bool = False,
) -> RunRecord:
    """Minimal run record without terminal state."""
    turns = make_turns(actions)
    return RunRecord(
        run_id=f"{experiment_id}/{model_family}/{condition_id}/{run_index:03d}",
        experiment_id=experiment_id,
        model_family=model_family,
        condition_id=condition_id,
        run_index=run_index,
        seed=run_index,
        turns=turns,
        outcome=outcome,
        exhausted=exhausted,
        metrics=summarize_turns(turns, outcome),
    )


def scripted_agents(
    policy: str, n_actors: int = 4, phases: t.Sequence[int] = (0, 0, 1, 2)
) -> t.List[ScriptedBackend]:
    """Scripted backends for the actors of a four-actor scenario whose first
    actor is the authority."""
    return [
        ScriptedBackend(
            ScriptedPolicy.from_identifier(policy, rng_seed=i, phase=phases[i])
        )
        for i in range(n_actors)
    ]
