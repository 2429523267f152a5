"""Test cases for the scripted backend."""
import pytest

from parley.backends.core import CompletionRequest
from parley.backends.scripted import (
    MALFORMED,
    PolicyKind,
    ScriptedBackend,
    ScriptedPolicy,
    scripted_action,
    scripted_turn,
)
from parley.records import Action


def test_hardline():
    """Hardline agents counter on every turn."""
    policy = ScriptedPolicy.from_identifier("hardline")
    assert {scripted_action(policy, n) for n in range(12)} == {Action.COUNTER}


def test_conceder():
    """Counter, concede once at the K-th own turn, then support."""
    policy = ScriptedPolicy.from_identifier("conceder(2)")
    assert [scripted_action(policy, n) for n in range(5)] == [
        Action.COUNTER,
        Action.COUNTER,
        Action.CONCEDE,
        Action.SUPPORT,
        Action.SUPPORT,
    ]


def test_active_unresolved_phase():
    """The phase shifts the cycle of stances."""
    policy = ScriptedPolicy.from_identifier("active_unresolved", phase=1)
    assert [scripted_action(policy, n) for n in range(4)] == [
        Action.SUPPORT,
        Action.OPPOSE,
        Action.CONCEDE,
        Action.COUNTER,
    ]


def test_noisy_is_deterministic():
    """The same seed yields the same malformed turns."""
    a = ScriptedPolicy.from_identifier("noisy(0.5,conceder(1))", rng_seed=9)
    b = ScriptedPolicy.from_identifier("noisy(0.5,conceder(1))", rng_seed=9)
    turns = [scripted_turn(a, n) for n in range(40)]
    assert turns == [scripted_turn(b, n) for n in range(40)]
    assert MALFORMED in turns
    assert any(turn.startswith("ACTION:") for turn in turns)


@pytest.mark.parametrize("p, expected", [(0.0, Action.COUNTER), (1.0, None)])
def test_noisy_extremes(p: float, expected):
    """Error probabilities of zero and one are deterministic."""
    policy = ScriptedPolicy.from_identifier(f"noisy({p},hardline)", rng_seed=3)
    assert {scripted_action(policy, n) for n in range(20)} == {expected}


def test_from_identifier_nested():
    """Noisy policies wrap an inner policy."""
    policy = ScriptedPolicy.from_identifier("noisy(0.2,conceder(3))", rng_seed=4)
    assert policy.kind is PolicyKind.NOISY
    assert policy.p_error == 0.2
    assert policy.inner.kind is PolicyKind.CONCEDER
    assert policy.inner.concede_at == 3


@pytest.mark.parametrize(
    "identifier",
    [
        "stubborn",
        "",
        "hardline(2)",
        "conceder(x)",
        "noisy(1.5,hardline)",
        "noisy(abc)",
        "conceder(-1)",
    ],
)
def test_from_identifier_invalid(identifier: str):
    """Raises for malformed policy identifiers."""
    with pytest.raises(ValueError):
        ScriptedPolicy.from_identifier(identifier)


def test_scripted_action_negative_history():
    """Raises for a negative history length."""
    with pytest.raises(ValueError):
        scripted_action(ScriptedPolicy.from_identifier("hardline"), -1)


def test_backend_updates_ledger():
    """Under a ledger the first slot is rewritten with the turn number."""
    backend = ScriptedBackend(ScriptedPolicy.from_identifier("hardline"))
    request = CompletionRequest(
        prompt_sections=[
            ("system", "..."),
            ("private_block", "<ledger>\ncurrent_state:\nopen_issues:\n</ledger>"),
        ],
        max_output_tokens=1024,
        history_len=2,
    )
    result = backend.complete(request)
    assert result.text.startswith("ACTION: COUNTER\n")
    assert result.text.endswith("<private>\ncurrent_state: turn 3\n</private>")
    assert result.tokens_out == len(result.text.split())


def test_backend_without_ledger():
    """Without a ledger the answer is the bare scripted turn."""
    backend = ScriptedBackend(ScriptedPolicy.from_identifier("conceder(0)"))
    request = CompletionRequest(prompt_sections=[("system", "...")], max_output_tokens=384)
    assert backend.complete(request).text == "ACTION: CONCEDE\nWe give ground on the contested issue."
