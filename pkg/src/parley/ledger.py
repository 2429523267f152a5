"""Private five-slot ledgers.

A ledger is an agent's private state under the scaffold conditions. The
agent rewrites slots by answering with ``<label>: <content>`` lines inside
its private block; the rendered ledger is handed back to that agent, and
only to that agent, on its next turn.
"""
from __future__ import annotations

import logging
import typing as t

import importlib_resources
from attrs import evolve, field, frozen

from .constants import DEFAULT_LEDGER_CHAR_BUDGET
from .records import LedgerVariant

logger = logging.getLogger(__name__)

LEDGER_LABELS: t.Dict[LedgerVariant, t.Tuple[str, ...]] = {
    LedgerVariant.NEGOTIATION: (
        "own_concessions",
        "their_concessions",
        "current_state",
        "opponent_assessment",
        "open_issues",
    ),
    LedgerVariant.NEUTRAL_LABEL: (
        "slot_a",
        "slot_b",
        "slot_c",
        "slot_d",
        "slot_e",
    ),
    LedgerVariant.ORTHOGONAL_PROCESS: (
        "prior_turn_recap",
        "style_tone_target",
        "clarity_check",
        "format_check",
        "message_shape_plan",
    ),
}

TEMPLATES = {
    LedgerVariant.NEGOTIATION: "ledger_negotiation.txt",
    LedgerVariant.NEUTRAL_LABEL: "ledger_neutral_label.txt",
    LedgerVariant.ORTHOGONAL_PROCESS: "ledger_orthogonal_process.txt",
}


@frozen
class Slot:
    """Ledger slot. `updated_at` is the update count of its last write."""

    label: str
    content: str = ""
    updated_at: int = 0


@frozen
class Ledger:
    """Five-slot private ledger."""

    variant: LedgerVariant
    slots: t.Tuple[Slot, ...] = field(converter=tuple)
    char_budget: int = DEFAULT_LEDGER_CHAR_BUDGET
    updates: int = 0

    @property
    def labels(self) -> t.Tuple[str, ...]:
        return tuple(slot.label for slot in self.slots)

    def content(self, label: str) -> str:
        """Content of the slot named `label`."""
        for slot in self.slots:
            if slot.label == label:
                return slot.content
        raise KeyError(label)


def _render(slots: t.Sequence[Slot]) -> str:
    return "\n".join(
        f"{slot.label}: {slot.content}" if slot.content else f"{slot.label}:"
        for slot in slots
    )


def init_ledger(
    variant: t.Union[LedgerVariant, str],
    char_budget: int = DEFAULT_LEDGER_CHAR_BUDGET,
) -> Ledger:
    """Create an empty ledger.

    Args:
        variant: Ledger variant; ``ABSENT`` is rejected.
        char_budget: Maximum length of the rendered ledger.

    Raises:
        ValueError: If `variant` is ``ABSENT`` or `char_budget` is shorter
            than the empty rendering.

    Returns:
        Ledger with five labelled, empty slots.
    """
    variant = LedgerVariant(variant)
    if variant is LedgerVariant.ABSENT:
        msg = "cannot initialise a ledger for variant ABSENT"
        logger.critical(msg)
        raise ValueError(msg)

    slots = tuple(Slot(label) for label in LEDGER_LABELS[variant])
    minimum = len(_render(slots))
    if char_budget < minimum:
        msg = (
            f"ledger character budget ({char_budget}) is shorter than the "
            f"empty {variant.value} ledger ({minimum})"
        )
        logger.critical(msg)
        raise ValueError(msg)

    return Ledger(variant=variant, slots=slots, char_budget=char_budget)


def _truncate(slots: t.List[Slot], budget: int) -> t.List[Slot]:
    while True:
        excess = len(_render(slots)) - budget
        if excess <= 0:
            return slots
        index = min(
            (i for i, slot in enumerate(slots) if slot.content),
            key=lambda i: (slots[i].updated_at, i),
        )
        slot = slots[index]
        slots[index] = evolve(slot, content=slot.content[excess:].lstrip())
        logger.debug("trimmed ledger slot %s by %d characters", slot.label, excess)


def update_ledger(ledger: Ledger, update_text: str) -> Ledger:
    """Apply a private update to a ledger.

    Every ``<label>: <content>`` line overwrites the slot named `label`.
    Lines with unknown labels, or without a colon, are ignored. When the
    rendering exceeds the character budget, the oldest text goes first: the
    least recently updated non-empty slot is trimmed from its start.

    Args:
        ledger: Current ledger.
        update_text: Private update block of the turn.

    Returns:
        Updated ledger (`ledger` itself when nothing matched).
    """
    writes: t.Dict[str, str] = {}
    for line in update_text.splitlines():
        label, sep, content = line.partition(":")
        label = label.strip()
        if sep and label in ledger.labels:
            writes[label] = content.strip()
        elif line.strip():
            logger.debug("ignoring ledger update line %r", line)

    if not writes:
        return ledger

    stamp = ledger.updates + 1
    slots = [
        evolve(slot, content=writes[slot.label], updated_at=stamp)
        if slot.label in writes
        else slot
        for slot in ledger.slots
    ]
    return evolve(
        ledger, slots=_truncate(slots, ledger.char_budget), updates=stamp
    )


def render_private_block(ledger: Ledger) -> str:
    """Render a ledger as five ``label: content`` lines in slot order."""
    return _render(ledger.slots)


def ledger_instructions(variant: LedgerVariant) -> str:
    """Update instructions shown to agents keeping a `variant` ledger."""
    path = importlib_resources.files("parley.data.templates").joinpath(
        TEMPLATES[LedgerVariant(variant)]
    )
    return path.read_text(encoding="utf-8")
