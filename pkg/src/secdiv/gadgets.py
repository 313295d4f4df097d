"""Code-reuse gadget extraction and pairwise gadget-overlap analysis.

A gadget is a suffix of the linear instruction stream ending at a return:
that is what an attacker who redirects control into the middle of the
code gets to execute.  Suffixes containing another control transfer are
not useful chain links and are skipped.  Overlap between two variants
(`srate`) counts gadgets of the first that appear, NOP-stripped but at
the same byte address, in the second.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .machine import Instr, MachineProgram, Opcode
from .mir import TERMINATORS

DEFAULT_MAX_LEN = 5

_NOP_WORD = Instr(Opcode.NOP).word()


@dataclass(frozen=True)
class Gadget:
    start: int  # byte address of the first instruction
    words: tuple[int, ...]
    normalized: tuple[int, ...]  # words with NOPs removed

    @property
    def length(self) -> int:
        return len(self.words)


def extract_gadgets(program: MachineProgram, k: int = DEFAULT_MAX_LEN) -> set[Gadget]:
    """All suffixes of length 1..k ending at a return instruction."""
    flat = program.flat()
    gadgets: set[Gadget] = set()
    for end, ins in enumerate(flat):
        if ins.opcode is not Opcode.RET:
            continue
        for length in range(1, k + 1):
            start = end - length + 1
            if start < 0:
                break
            seq = flat[start : end + 1]
            if any(w.opcode in TERMINATORS for w in seq[:-1]):
                break  # a longer suffix would contain it too
            words = tuple(w.word() for w in seq)
            normalized = tuple(w for w in words if w != _NOP_WORD)
            gadgets.add(Gadget(start=4 * start, words=words, normalized=normalized))
    return gadgets


def srate(a: MachineProgram, b: MachineProgram, k: int = DEFAULT_MAX_LEN) -> Fraction:
    """Fraction of a's gadgets found identically at the same address in b.

    Comparison is on NOP-stripped word sequences; a program without any
    gadget has srate 0 by definition.
    """
    ga = extract_gadgets(a, k)
    if not ga:
        return Fraction(0)
    gb = extract_gadgets(b, k)
    index: dict[int, set[tuple[int, ...]]] = {}
    for g in gb:
        index.setdefault(g.start, set()).add(g.normalized)
    shared = sum(1 for g in ga if g.normalized in index.get(g.start, ()))
    return Fraction(shared, len(ga))


@dataclass
class SrateHistogram:
    """Ordered-pair counts bucketed as {0}, (0, 0.2], (0.2, 1]."""

    zero: int = 0
    low: int = 0
    high: int = 0

    @property
    def total(self) -> int:
        return self.zero + self.low + self.high

    def percentages(self) -> tuple[Fraction, Fraction, Fraction]:
        if self.total == 0:
            return (Fraction(0), Fraction(0), Fraction(0))
        return (
            Fraction(self.zero, self.total),
            Fraction(self.low, self.total),
            Fraction(self.high, self.total),
        )

    def add(self, rate: Fraction) -> None:
        if rate == 0:
            self.zero += 1
        elif rate <= Fraction(1, 5):
            self.low += 1
        else:
            self.high += 1


def pool_histogram(
    programs: Sequence[MachineProgram], k: int = DEFAULT_MAX_LEN
) -> SrateHistogram:
    """Bucketed srate over all ordered pairs of a variant pool."""
    if len(programs) < 2:
        raise ValueError("histogram needs at least two variants")
    cache = [extract_gadgets(p, k) for p in programs]
    indexes = []
    for gset in cache:
        index: dict[int, set[tuple[int, ...]]] = {}
        for g in gset:
            index.setdefault(g.start, set()).add(g.normalized)
        indexes.append(index)
    hist = SrateHistogram()
    for i, gset in enumerate(cache):
        for j, index in enumerate(indexes):
            if i == j:
                continue
            if not gset:
                hist.add(Fraction(0))
                continue
            shared = sum(1 for g in gset if g.normalized in index.get(g.start, ()))
            hist.add(Fraction(shared, len(gset)))
    return hist


def mean_srate(programs: Sequence[MachineProgram], k: int = DEFAULT_MAX_LEN) -> Fraction:
    """Mean srate over all ordered pairs."""
    if len(programs) < 2:
        raise ValueError("mean srate needs at least two variants")
    total = Fraction(0)
    pairs = 0
    cache = [extract_gadgets(p, k) for p in programs]
    indexes = []
    for gset in cache:
        index: dict[int, set[tuple[int, ...]]] = {}
        for g in gset:
            index.setdefault(g.start, set()).add(g.normalized)
        indexes.append(index)
    for i, gset in enumerate(cache):
        for j, index in enumerate(indexes):
            if i == j:
                continue
            pairs += 1
            if gset:
                shared = sum(1 for g in gset if g.normalized in index.get(g.start, ()))
                total += Fraction(shared, len(gset))
    return total / pairs
