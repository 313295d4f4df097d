"""Low-level IR with security-policy annotations.

A function is a list of basic blocks over 8-bit temps in SSA-like form
(every temp has exactly one definition).  Inputs carry a security label
(secret, public, or random); all other labels are inferred later.  The
block list is required to be a topological order of the CFG, which rules
out loops by construction.

Text format (one function per file, ``#`` comments, LF line endings):

    func <name> ( <temp>:<secret|public|random> , ... )
    block <n> [weight <w>]
      [opt] <def> = <opcode> <use> [, <use>]
      ...
      <beq|bne> <use>, <use>, <blockid>  |  b <blockid>  |  ret <use>

``st`` lines have no def (``st <slot>, <use>``) and ``ld`` reads a named
slot (``<def> = ld <slot>``).  Blocks without a terminator fall through
to the next block.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Union

TEMP_WIDTH = 8
VALUE_MASK = (1 << TEMP_WIDTH) - 1


class SecurityLabel(Enum):
    SECRET = "secret"
    PUBLIC = "public"
    RANDOM = "random"


class Opcode(Enum):
    ADD = "add"
    SUB = "sub"
    XOR = "xor"
    AND = "and"
    OR = "or"
    MOV = "mov"
    LI = "li"
    LD = "ld"
    ST = "st"
    BEQ = "beq"
    BNE = "bne"
    B = "b"
    RET = "ret"
    NOP = "nop"
    COPY = "copy"


ALU_OPCODES = frozenset({Opcode.ADD, Opcode.SUB, Opcode.XOR, Opcode.AND, Opcode.OR})
TERMINATORS = frozenset({Opcode.BEQ, Opcode.BNE, Opcode.B, Opcode.RET})
COMMUTATIVE = frozenset({Opcode.ADD, Opcode.XOR, Opcode.AND, Opcode.OR, Opcode.BEQ, Opcode.BNE})
# Operations that may be inactive in a solution: copies (and spill
# reloads, which are copies too) plus balancing NOPs.
OPTIONAL_ALLOWED = frozenset({Opcode.COPY, Opcode.NOP})

# A use is a temp name, a named memory slot, or an 8-bit immediate.
Operand = Union[str, int]


class IRError(Exception):
    """Base class for parse and validation failures."""


class IRSyntaxError(IRError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}:{column}: {message}")
        self.line = line
        self.column = column


class IRValidationError(IRError):
    pass


@dataclass(frozen=True)
class Temp:
    """A single-assignment 8-bit value; inputs carry their policy label."""

    name: str
    width: int = TEMP_WIDTH
    label: Optional[SecurityLabel] = None


@dataclass(frozen=True)
class Operation:
    index: int
    opcode: Opcode
    defs: tuple[str, ...]
    uses: tuple[Operand, ...]
    optional: bool = False

    @property
    def commutative(self) -> bool:
        return self.opcode in COMMUTATIVE

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def slot(self) -> Optional[str]:
        """Named memory slot for LD/ST, else None."""
        if self.opcode is Opcode.LD:
            return self.uses[0]  # type: ignore[return-value]
        if self.opcode is Opcode.ST:
            return self.uses[0]  # type: ignore[return-value]
        return None

    def temp_uses(self) -> tuple[str, ...]:
        """Temp-name operands only (immediates and slot names excluded)."""
        if self.opcode is Opcode.LD:
            return ()
        if self.opcode is Opcode.ST:
            return (self.uses[1],)  # type: ignore[return-value]
        return tuple(u for u in self.uses if isinstance(u, str))


@dataclass
class Block:
    index: int
    weight: Fraction
    ops: list[Operation] = field(default_factory=list)

    @property
    def terminator(self) -> Optional[Operation]:
        if self.ops and self.ops[-1].is_terminator:
            return self.ops[-1]
        return None

    @property
    def body(self) -> list[Operation]:
        term = self.terminator
        return self.ops[:-1] if term is not None else list(self.ops)


@dataclass(frozen=True)
class BlockGraph:
    """Adjacency over block ids; entry is block 0, exits end in RET."""

    succ: tuple[tuple[int, ...], ...]
    exits: tuple[int, ...]

    @property
    def entry(self) -> int:
        return 0

    def successors(self, block: int) -> tuple[int, ...]:
        return self.succ[block]


@dataclass
class FunctionIR:
    name: str
    inputs: list[tuple[str, SecurityLabel]]
    blocks: list[Block]
    temps: dict[str, Temp] = field(default_factory=dict)
    slots: tuple[str, ...] = ()

    def input_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.inputs)

    def all_ops(self) -> Iterable[Operation]:
        for block in self.blocks:
            yield from block.ops

    def op(self, index: int) -> Operation:
        for o in self.all_ops():
            if o.index == index:
                return o
        raise KeyError(index)

    def block_of_op(self, index: int) -> int:
        for block in self.blocks:
            for o in block.ops:
                if o.index == index:
                    return block.index
        raise KeyError(index)

    def def_site(self, temp: str) -> Optional[int]:
        """Operation index defining `temp`, or None for inputs."""
        for o in self.all_ops():
            if temp in o.defs:
                return o.index
        return None

    def successors(self, block_index: int) -> tuple[int, ...]:
        block = self.blocks[block_index]
        term = block.terminator
        if term is None:
            return (block_index + 1,)
        if term.opcode is Opcode.RET:
            return ()
        if term.opcode is Opcode.B:
            return (term.uses[0],)  # type: ignore[return-value]
        # beq/bne: fall-through first, then the taken target
        return (block_index + 1, term.uses[2])  # type: ignore[return-value]

    def taken_successor(self, block_index: int) -> Optional[int]:
        term = self.blocks[block_index].terminator
        if term is not None and term.opcode in (Opcode.BEQ, Opcode.BNE):
            return term.uses[2]  # type: ignore[return-value]
        return None

    def renumber_ops(self) -> None:
        """Reassign op indices to a dense program order."""
        fresh = 0
        for block in self.blocks:
            new_ops = []
            for op in block.ops:
                new_ops.append(replace(op, index=fresh))
                fresh += 1
            block.ops = new_ops


# ----------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------

_LABELS = {lab.value: lab for lab in SecurityLabel}
_OPCODES = {op.value: op for op in Opcode}


def _strip(line: str) -> str:
    if "#" in line:
        line = line[: line.index("#")]
    return line.strip()


def parse_function(text: str) -> FunctionIR:
    """Parse and validate one function in the textual IR grammar."""
    lines = text.split("\n")
    func: Optional[FunctionIR] = None
    current: Optional[Block] = None
    op_index = 0
    slots: list[str] = []

    for lineno, raw in enumerate(lines, start=1):
        line = _strip(raw)
        if not line:
            continue
        words = line.split()
        if words[0] == "func":
            if func is not None:
                raise IRSyntaxError("duplicate func header", lineno)
            func = _parse_header(line, lineno)
        elif func is None:
            raise IRSyntaxError("expected 'func' header", lineno)
        elif words[0] == "block":
            current = _parse_block_header(words, lineno, len(func.blocks))
            func.blocks.append(current)
        elif current is None:
            raise IRSyntaxError("operation outside of a block", lineno)
        else:
            if current.terminator is not None:
                raise IRSyntaxError("operation after block terminator", lineno)
            op = _parse_op(line, lineno, op_index)
            op_index += 1
            current.ops.append(op)
            if op.opcode in (Opcode.LD, Opcode.ST):
                slot = op.slot
                if slot not in slots:
                    slots.append(slot)

    if func is None:
        raise IRSyntaxError("no function found", len(lines))
    func.slots = tuple(slots)
    _collect_temps(func)
    validate_function(func)
    return func


def _parse_header(line: str, lineno: int) -> FunctionIR:
    open_paren = line.find("(")
    close_paren = line.rfind(")")
    if open_paren < 0 or close_paren < open_paren:
        raise IRSyntaxError("malformed func header", lineno)
    name = line[4:open_paren].strip()
    if not name.isidentifier():
        raise IRSyntaxError(f"bad function name {name!r}", lineno)
    inputs: list[tuple[str, SecurityLabel]] = []
    args = line[open_paren + 1 : close_paren].strip()
    if args:
        for part in args.split(","):
            if ":" not in part:
                raise IRSyntaxError(f"input {part.strip()!r} missing label", lineno)
            tname, lab = (s.strip() for s in part.split(":", 1))
            if lab not in _LABELS:
                raise IRSyntaxError(f"unknown label {lab!r}", lineno)
            if not tname.isidentifier():
                raise IRSyntaxError(f"bad temp name {tname!r}", lineno)
            inputs.append((tname, _LABELS[lab]))
    return FunctionIR(name=name, inputs=inputs, blocks=[])


def _parse_block_header(words: list[str], lineno: int, expected: int) -> Block:
    if len(words) not in (2, 4):
        raise IRSyntaxError("malformed block header", lineno)
    try:
        index = int(words[1])
    except ValueError:
        raise IRSyntaxError(f"bad block id {words[1]!r}", lineno) from None
    if index != expected:
        raise IRSyntaxError(f"block {index} out of order (expected {expected})", lineno)
    weight = Fraction(1)
    if len(words) == 4:
        if words[2] != "weight":
            raise IRSyntaxError("expected 'weight'", lineno)
        try:
            weight = Fraction(words[3])
        except (ValueError, ZeroDivisionError):
            raise IRSyntaxError(f"bad weight {words[3]!r}", lineno) from None
        if weight <= 0:
            raise IRSyntaxError("weight must be positive", lineno)
    return Block(index=index, weight=weight)


def _parse_operand(tok: str, lineno: int) -> Operand:
    tok = tok.strip()
    if not tok:
        raise IRSyntaxError("empty operand", lineno)
    if tok.lstrip("-").isdigit():
        value = int(tok)
        if not 0 <= value <= VALUE_MASK:
            raise IRSyntaxError(f"immediate {value} out of range", lineno)
        return value
    if not tok.isidentifier():
        raise IRSyntaxError(f"bad operand {tok!r}", lineno)
    return tok


def _parse_op(line: str, lineno: int, index: int) -> Operation:
    optional = False
    if line.startswith("opt "):
        optional = True
        line = line[4:].strip()

    if "=" in line:
        dest, rhs = (s.strip() for s in line.split("=", 1))
        if not dest.isidentifier():
            raise IRSyntaxError(f"bad def {dest!r}", lineno)
        parts = rhs.split(None, 1)
        opname = parts[0]
        if opname not in _OPCODES:
            raise IRSyntaxError(f"unknown opcode {opname!r}", lineno)
        opcode = _OPCODES[opname]
        raw_uses = parts[1] if len(parts) > 1 else ""
        uses = tuple(_parse_operand(t, lineno) for t in raw_uses.split(",")) if raw_uses else ()
        op = Operation(index=index, opcode=opcode, defs=(dest,), uses=uses, optional=optional)
        _check_shape(op, lineno)
        return op

    parts = line.split(None, 1)
    opname = parts[0]
    if opname not in _OPCODES:
        raise IRSyntaxError(f"unknown opcode {opname!r}", lineno)
    opcode = _OPCODES[opname]
    raw_uses = parts[1] if len(parts) > 1 else ""
    uses = tuple(_parse_operand(t, lineno) for t in raw_uses.split(",")) if raw_uses else ()
    op = Operation(index=index, opcode=opcode, defs=(), uses=uses, optional=optional)
    _check_shape(op, lineno)
    return op


_SHAPES: dict[Opcode, tuple[int, int]] = {
    # opcode -> (number of defs, number of uses)
    Opcode.ADD: (1, 2),
    Opcode.SUB: (1, 2),
    Opcode.XOR: (1, 2),
    Opcode.AND: (1, 2),
    Opcode.OR: (1, 2),
    Opcode.MOV: (1, 1),
    Opcode.LI: (1, 1),
    Opcode.LD: (1, 1),
    Opcode.ST: (0, 2),
    Opcode.BEQ: (0, 3),
    Opcode.BNE: (0, 3),
    Opcode.B: (0, 1),
    Opcode.RET: (0, 1),
    Opcode.NOP: (0, 0),
    Opcode.COPY: (1, 1),
}


def _check_shape(op: Operation, lineno: int) -> None:
    ndefs, nuses = _SHAPES[op.opcode]
    if len(op.defs) != ndefs or len(op.uses) != nuses:
        raise IRSyntaxError(f"{op.opcode.value} expects {ndefs} def(s), {nuses} use(s)", lineno)
    if op.optional and op.opcode not in OPTIONAL_ALLOWED:
        raise IRSyntaxError(f"{op.opcode.value} cannot be optional", lineno)
    if op.opcode is Opcode.LI and not isinstance(op.uses[0], int):
        raise IRSyntaxError("li takes an immediate", lineno)
    if op.opcode in (Opcode.LD, Opcode.ST) and not isinstance(op.uses[0], str):
        raise IRSyntaxError(f"{op.opcode.value} needs a slot name", lineno)
    if op.opcode is Opcode.ST and not isinstance(op.uses[1], str):
        raise IRSyntaxError("st stores a temp", lineno)
    if op.opcode in (Opcode.BEQ, Opcode.BNE):
        if not (isinstance(op.uses[0], str) and isinstance(op.uses[1], str)):
            raise IRSyntaxError("branch compares temps", lineno)
        if not isinstance(op.uses[2], int):
            raise IRSyntaxError("branch target must be a block id", lineno)
    if op.opcode is Opcode.B and not isinstance(op.uses[0], int):
        raise IRSyntaxError("b target must be a block id", lineno)
    if op.opcode is Opcode.RET and not isinstance(op.uses[0], str):
        raise IRSyntaxError("ret returns a temp", lineno)
    if op.opcode not in (Opcode.LI, Opcode.LD, Opcode.ST, Opcode.B, Opcode.BEQ, Opcode.BNE):
        for use in op.uses:
            if isinstance(use, int):
                raise IRSyntaxError("immediates are only allowed in li", lineno)


def _collect_temps(func: FunctionIR) -> None:
    temps: dict[str, Temp] = {}
    for name, label in func.inputs:
        if name in temps:
            raise IRValidationError(f"duplicate input {name!r}")
        temps[name] = Temp(name=name, label=label)
    for op in func.all_ops():
        for d in op.defs:
            if d in temps:
                raise IRValidationError(f"temp {d!r} defined more than once")
            temps[d] = Temp(name=d)
    func.temps = temps


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------


def validate_function(func: FunctionIR) -> None:
    """Check every structural invariant; raises IRValidationError."""
    if not func.blocks:
        raise IRValidationError("function has no blocks")
    nblocks = len(func.blocks)

    slot_names = set(func.slots)
    clash = slot_names & set(func.temps)
    if clash:
        raise IRValidationError(f"slot names collide with temps: {sorted(clash)}")

    rets = 0
    for block in func.blocks:
        term = block.terminator
        for op in block.body:
            if op.is_terminator:
                raise IRValidationError(
                    f"terminator {op.opcode.value} not at end of block {block.index}"
                )
        if term is not None:
            if term.opcode is Opcode.RET:
                rets += 1
            else:
                targets = [u for u in term.uses if isinstance(u, int)]
                for target in targets:
                    if not 0 <= target < nblocks:
                        raise IRValidationError(
                            f"block {block.index} branches to unknown block {target}"
                        )
                    if target <= block.index:
                        raise IRValidationError(
                            f"back edge {block.index} -> {target} (loops are unsupported)"
                        )
                if term.opcode in (Opcode.BEQ, Opcode.BNE) and term.uses[2] == block.index + 1:
                    raise IRValidationError(
                        f"block {block.index}: conditional branch target equals fall-through"
                    )
        else:
            if block.index + 1 >= nblocks:
                raise IRValidationError(f"block {block.index} falls off the end of the function")
    if rets == 0:
        raise IRValidationError("function has no ret")

    # def-before-use in the block order
    defined: set[str] = {name for name, _ in func.inputs}
    for block in func.blocks:
        for op in block.ops:
            for use in op.temp_uses():
                if use not in defined:
                    raise IRValidationError(f"use of undefined temp {use!r} in op {op.index}")
            for d in op.defs:
                defined.add(d)

    # the defining block must dominate every using block, otherwise some
    # execution path would read an undefined register
    dom = _dominators(func)
    def_block: dict[str, int] = {name: 0 for name, _ in func.inputs}
    for block in func.blocks:
        for op in block.ops:
            for d in op.defs:
                def_block[d] = block.index
    for block in func.blocks:
        for op in block.ops:
            for use in op.temp_uses():
                db = def_block[use]
                if db != block.index and db not in dom[block.index]:
                    raise IRValidationError(
                        f"def of {use!r} (block {db}) does not dominate its use "
                        f"in block {block.index}"
                    )

    # reachability: every non-entry block needs an incoming edge
    incoming = {b.index: 0 for b in func.blocks}
    for block in func.blocks:
        for s in func.successors(block.index):
            incoming[s] += 1
    for block in func.blocks[1:]:
        if incoming[block.index] == 0:
            raise IRValidationError(f"block {block.index} is unreachable")


def _dominators(func: FunctionIR) -> dict[int, set[int]]:
    """Dominator sets; forward-only edges let one in-order pass converge."""
    preds: dict[int, list[int]] = {b.index: [] for b in func.blocks}
    for block in func.blocks:
        for s in func.successors(block.index):
            preds[s].append(block.index)
    every = set(range(len(func.blocks)))
    dom: dict[int, set[int]] = {0: {0}}
    for block in func.blocks[1:]:
        b = block.index
        sets = [dom[p] for p in preds[b] if p in dom]
        merged = set.intersection(*sets) if sets else set(every)
        dom[b] = merged | {b}
    return dom


def build_cfg(func: FunctionIR) -> BlockGraph:
    succ = tuple(func.successors(b.index) for b in func.blocks)
    exits = tuple(b.index for b in func.blocks if not succ[b.index])
    return BlockGraph(succ=succ, exits=exits)


def topological_check(graph: BlockGraph) -> bool:
    """True when node ids already form a topological order (acyclic)."""
    return all(s > b for b, succs in enumerate(graph.succ) for s in succs)


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------


def _operand_str(use: Operand) -> str:
    return str(use)


def serialize_function(func: FunctionIR) -> str:
    """Canonical printer; parse(serialize(f)) is structurally equal to f."""
    out: list[str] = []
    args = ", ".join(f"{name}:{label.value}" for name, label in func.inputs)
    out.append(f"func {func.name} ({args})")
    for block in func.blocks:
        if block.weight == 1:
            out.append(f"block {block.index}")
        else:
            out.append(f"block {block.index} weight {block.weight}")
        for op in block.ops:
            prefix = "  opt " if op.optional else "  "
            uses = ", ".join(_operand_str(u) for u in op.uses)
            if op.defs:
                rhs = f"{op.opcode.value} {uses}" if uses else op.opcode.value
                out.append(f"{prefix}{op.defs[0]} = {rhs}")
            elif uses:
                out.append(f"{prefix}{op.opcode.value} {uses}")
            else:
                out.append(f"{prefix}{op.opcode.value}")
    return "\n".join(out) + "\n"


def structurally_equal(a: FunctionIR, b: FunctionIR) -> bool:
    if a.name != b.name or a.inputs != b.inputs or a.slots != b.slots:
        return False
    if len(a.blocks) != len(b.blocks):
        return False
    for ba, bb in zip(a.blocks, b.blocks):
        if ba.weight != bb.weight or ba.ops != bb.ops:
            return False
    return True
