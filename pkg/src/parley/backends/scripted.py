"""Scripted oracle backends.

Scripted agents answer as a pure function of their policy, their seed and
the number of turns they already took; they make offline runs exactly
reproducible.
"""
from __future__ import annotations

import enum
import logging
import re
import typing as t

import numpy as np
from attrs import define, field, frozen

from .core import Backend, CompletionRequest, CompletionResult, word_count
from .factory import factory
from ..constants import LEDGER_OPEN, PRIVATE_CLOSE, PRIVATE_OPEN
from ..records import Action

logger = logging.getLogger(__name__)


class PolicyKind(enum.Enum):
    """Scripted policy kind."""

    HARDLINE = "hardline"
    CONCEDER = "conceder"
    ACTIVE_UNRESOLVED = "active_unresolved"
    NOISY = "noisy"


# cycle of the active-unresolved policy; consecutive actors are offset by one
ACTIVE_CYCLE = (Action.COUNTER, Action.SUPPORT, Action.OPPOSE, Action.CONCEDE)

LINES = {
    Action.SUPPORT: "We can support the current proposal.",
    Action.OPPOSE: "We cannot accept the proposal as it stands.",
    Action.CONCEDE: "We give ground on the contested issue.",
    Action.COUNTER: "We propose an amended package instead.",
    Action.EXIT: "We are leaving the table.",
}

MALFORMED = "I would rather not commit to a position yet."

_IDENTIFIER = re.compile(r"^(?P<name>[a-z_]+)(?:\((?P<args>.*)\))?$")


@frozen(kw_only=True)
class ScriptedPolicy:
    """Scripted policy.

    Attributes:
        kind: Policy kind.
        rng_seed: Seed of the noisy policy's generator.
        concede_at: Own-turn count at which a conceder concedes.
        p_error: Probability of a malformed answer (noisy policy).
        inner: Policy wrapped by a noisy policy.
        phase: Offset in the active-unresolved cycle.
    """

    kind: PolicyKind = field(converter=PolicyKind)
    rng_seed: int = 0
    concede_at: int = 2
    p_error: float = 0.0
    inner: t.Optional[ScriptedPolicy] = None
    phase: int = 0

    def __attrs_post_init__(self):
        if self.kind is PolicyKind.NOISY:
            if self.inner is None:
                msg = "a noisy policy needs an inner policy"
                logger.critical(msg)
                raise ValueError(msg)
            if not 0.0 <= self.p_error <= 1.0:
                msg = f"p_error must be in [0, 1], got {self.p_error}"
                logger.critical(msg)
                raise ValueError(msg)
        if self.kind is PolicyKind.CONCEDER and self.concede_at < 0:
            msg = f"concede_at must be non-negative, got {self.concede_at}"
            logger.critical(msg)
            raise ValueError(msg)

    @classmethod
    def from_identifier(
        cls, identifier: str, rng_seed: int = 0, phase: int = 0
    ) -> ScriptedPolicy:
        """Build a policy from an identifier.

        Identifiers read ``hardline``, ``conceder(K)``,
        ``active_unresolved`` or ``noisy(P,INNER)`` where ``INNER`` is itself
        an identifier, e.g. ``noisy(0.2,conceder(2))``.

        Raises:
            ValueError: If the identifier is malformed.
        """
        match = _IDENTIFIER.match(identifier.strip().lower())
        if match is None:
            msg = f"malformed scripted policy identifier {identifier!r}"
            logger.critical(msg)
            raise ValueError(msg)
        name, args = match.group("name"), match.group("args")

        try:
            kind = PolicyKind(name)
        except ValueError:
            msg = f"unknown scripted policy {name!r} in {identifier!r}"
            logger.critical(msg)
            raise ValueError(msg) from None

        try:
            if kind is PolicyKind.CONCEDER:
                return cls(
                    kind=kind,
                    rng_seed=rng_seed,
                    concede_at=int(args) if args else 2,
                    phase=phase,
                )
            if kind is PolicyKind.NOISY:
                p, _, inner = (args or "").partition(",")
                return cls(
                    kind=kind,
                    rng_seed=rng_seed,
                    p_error=float(p),
                    inner=cls.from_identifier(inner or "hardline", rng_seed, phase),
                    phase=phase,
                )
        except ValueError as e:
            msg = f"malformed scripted policy identifier {identifier!r}: {e}"
            logger.critical(msg)
            raise ValueError(msg) from e

        if args:
            msg = f"scripted policy {name!r} takes no arguments"
            logger.critical(msg)
            raise ValueError(msg)
        return cls(kind=kind, rng_seed=rng_seed, phase=phase)


def scripted_action(policy: ScriptedPolicy, history_len: int) -> t.Optional[Action]:
    """Action of `policy` at its `history_len`-th turn (`None`: malformed)."""
    if history_len < 0:
        msg = f"history_len must be non-negative, got {history_len}"
        logger.critical(msg)
        raise ValueError(msg)

    if policy.kind is PolicyKind.HARDLINE:
        return Action.COUNTER
    if policy.kind is PolicyKind.CONCEDER:
        if history_len < policy.concede_at:
            return Action.COUNTER
        if history_len == policy.concede_at:
            return Action.CONCEDE
        return Action.SUPPORT
    if policy.kind is PolicyKind.ACTIVE_UNRESOLVED:
        return ACTIVE_CYCLE[(history_len + policy.phase) % len(ACTIVE_CYCLE)]

    # noisy: one independent draw per (seed, turn)
    draw = np.random.default_rng([policy.rng_seed, history_len]).random()
    if draw < policy.p_error:
        return None
    return scripted_action(policy.inner, history_len)


def scripted_turn(policy: ScriptedPolicy, history_len: int) -> str:
    """Text answered by `policy` at its `history_len`-th turn."""
    action = scripted_action(policy, history_len)
    if action is None:
        return MALFORMED
    return f"ACTION: {action.value}\n{LINES[action]}"


@factory.register(identifier="scripted")
@define
class ScriptedBackend(Backend):
    """Backend answering with a scripted policy.

    Under ledger conditions it also rewrites the first ledger slot with its
    turn number. Temperature, reasoning mode and token settings are ignored.
    """

    policy: ScriptedPolicy

    def complete(self, request: CompletionRequest) -> CompletionResult:
        text = scripted_turn(self.policy, request.history_len)
        ledger = request.section("private_block")
        if ledger is not None:
            label = _first_label(ledger)
            if label is not None:
                text = (
                    f"{text}\n{PRIVATE_OPEN}\n{label}: turn {request.history_len + 1}"
                    f"\n{PRIVATE_CLOSE}"
                )
        return CompletionResult(text=text, tokens_out=word_count(text), latency_ms=0)


def _first_label(block: str) -> t.Optional[str]:
    _, _, rendered = block.partition(LEDGER_OPEN)
    for line in rendered.splitlines():
        label, sep, _ = line.partition(":")
        if sep and label.strip():
            return label.strip()
    return None
