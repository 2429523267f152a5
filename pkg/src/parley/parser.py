"""Turn parser.

An agent answers each turn with a header line followed by its public
message::

    ACTION: COUNTER
    We propose tier-2 exemptions.

Under ledger conditions the same answer may carry a private update block,
delimited by a line holding exactly ``<private>`` and a line holding exactly
``</private>``. The block is split off before parsing and never reaches the
public transcript.
"""
from __future__ import annotations

import typing as t

from attrs import frozen

from .constants import ACTION_HEADER_KEY, PRIVATE_CLOSE, PRIVATE_OPEN
from .records import Action, ErrorClass, FormatErrorReason, TurnRecord

TOKENS = {action.value: action for action in Action}


@frozen
class ParsedTurn:
    """Successfully parsed turn."""

    action: Action
    message: str
    header_span: t.Tuple[int, int]


@frozen
class FormatError:
    """Unparseable turn."""

    reason: FormatErrorReason


def split_private_update(raw: str) -> t.Tuple[str, str]:
    """Separate the private update block(s) from an agent answer.

    Args:
        raw: Complete text returned by the backend.

    Returns:
        Tuple of the public text and the private update text (joined
        contents of every private block, empty if there is none).

    Notes:
        An opening delimiter without a closing one swallows the remaining
        lines: nothing after an unterminated ``<private>`` is made public.
    """
    public: t.List[str] = []
    private: t.List[str] = []
    inside = False
    for line in raw.splitlines(keepends=True):
        marker = line.strip()
        if not inside and marker == PRIVATE_OPEN:
            inside = True
        elif inside and marker == PRIVATE_CLOSE:
            inside = False
        elif inside:
            private.append(line)
        else:
            public.append(line)
    return "".join(public), "".join(private).strip("\n")


def parse_turn(raw: str) -> t.Union[ParsedTurn, FormatError]:
    """Parse the public part of an agent answer.

    The first non-empty line must read ``ACTION: <TOKEN>``. The key is
    case-sensitive; the token is trimmed and case-folded and must be one of
    the five actions.

    Args:
        raw: Public text of one turn.

    Returns:
        The parsed turn, or a format error with its reason.
    """
    if not raw.strip():
        return FormatError(FormatErrorReason.EMPTY_OUTPUT)

    offset = 0
    for line in raw.splitlines(keepends=True):
        if line.strip():
            break
        offset += len(line)
    header = line.rstrip("\r\n")
    stripped = header.strip()
    if not stripped.startswith(ACTION_HEADER_KEY):
        return FormatError(FormatErrorReason.MISSING_HEADER)

    token = stripped[len(ACTION_HEADER_KEY) :].strip().upper()
    if token not in TOKENS:
        return FormatError(FormatErrorReason.UNKNOWN_TOKEN)

    message = raw[offset + len(line) :].strip()
    return ParsedTurn(
        action=TOKENS[token],
        message=message,
        header_span=(offset, offset + len(header)),
    )


def parse_success_of_run(turns: t.Sequence[TurnRecord]) -> bool:
    """`True` iff no turn of the run is a format error.

    Provider errors do not count against parse success.
    """
    return all(turn.parsed is not ErrorClass.FORMAT_ERROR for turn in turns)
