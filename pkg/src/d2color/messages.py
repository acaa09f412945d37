"""Wire message types shared by the engine and the protocol state machines.

Color fields hold -1 (the fictitious root color) or a non-negative integer.
Palettes enumerate non-negative integers only, so -1 can never be selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

FICTITIOUS_COLOR = -1


@dataclass(frozen=True)
class Start:
    kind = "START"


@dataclass(frozen=True)
class ColorSeq:
    kind = "COLOR_SEQ"
    dest: int
    sender: int
    sender_cl: int
    d1colors: tuple[int, ...]


@dataclass(frozen=True)
class TermSeq:
    kind = "TERM_SEQ"
    dest: int
    sender: int
    sender_cl: int
    max_d: int


@dataclass(frozen=True)
class ColorPar:
    kind = "COLOR_PAR"
    pairs: tuple[tuple[int, int], ...]  # (identity, color), ascending identity
    sender: int
    sender_cl: int
    nb_cl_parent: int


@dataclass(frozen=True)
class TermPar:
    kind = "TERM_PAR"
    dest: int
    sender: int
    max_nb_cl: int


@dataclass(frozen=True)
class End:
    kind = "END"
    parent: int
    max_cl: int


@dataclass(frozen=True)
class New:
    kind = "NEW"
    cl: int
    delta: int
    new_id: int


@dataclass(frozen=True)
class ColorArb:
    kind = "COLOR_ARB"
    dest: int
    sender: int
    sender_cl: int
    proposed_color: int
    d1colors: tuple[int, ...]


@dataclass(frozen=True)
class TermArb:
    kind = "TERM_ARB"
    dest: int
    color: int
    sender: int


@dataclass(frozen=True)
class Correct:
    kind = "CORRECT"
    dest: int
    sender: int
    color: int
    d1colors: tuple[int, ...]


@dataclass(frozen=True)
class CorrectedColor:
    kind = "CORRECTED_COLOR"
    dest1: int
    dest2: int
    sender: int
    color: int


@dataclass(frozen=True)
class ResumeColoring:
    kind = "RESUME_COLORING"
    dest: int
    sender: int


Message = (
    Start
    | ColorSeq
    | TermSeq
    | ColorPar
    | TermPar
    | End
    | New
    | ColorArb
    | TermArb
    | Correct
    | CorrectedColor
    | ResumeColoring
)


def first_free_color(excluded) -> int:
    """Smallest non-negative integer outside the excluded set."""
    taken = set(excluded)
    c = 0
    while c in taken:
        c += 1
    return c


def message_fields(msg: Message) -> list[tuple[str, object]]:
    """Stable (name, value) pairs for serialization."""
    return [(f.name, getattr(msg, f.name)) for f in fields(msg)]


def color_seq_bits(msg: ColorSeq, n: int, delta: int) -> int:
    """Accounting-model encoded size of a COLOR_SEQ broadcast.

    Two identities at ceil(log2 n) bits each, plus one color slot for the
    sender color and one per carried (non-fictitious) neighbor color at
    ceil(log2(delta+1)) bits each.
    """
    id_bits = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    color_bits = max(1, math.ceil(math.log2(delta + 1))) if delta > 0 else 1
    real = sum(1 for c in msg.d1colors if c >= 0)
    return 2 * id_bits + (1 + real) * color_bits


def color_seq_bits_bound(n: int, delta: int) -> int:
    """Accounting-model bound: 2*log2(n) identity bits + delta color slots."""
    id_bits = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    color_bits = max(1, math.ceil(math.log2(delta + 1))) if delta > 0 else 1
    return 2 * id_bits + delta * color_bits
