"""MiniRISC machine model: profiles, encoding, and cycle-accurate execution.

Instructions are fixed 4-byte words (opcode byte plus three operand
bytes) laid out from address 0, so the address of the i-th word of the
program is 4*i.  The interpreter is the ground truth for every oracle:
functional results, cycle counts, and the register/memory-bus value
transitions that the Hamming-distance leakage model observes.

Cost model: ALU/MOV/LI/NOP take 1 cycle, LD/ST take 2, the unconditional
branch takes 3, a conditional branch takes 1 plus a 2-cycle overhead when
taken, RET takes 1.  The LD/ST latency of 2 is a model choice for a
predictable microcontroller and is flagged in emitted reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mir import VALUE_MASK, FunctionIR, Opcode

MAGIC = b"MRSC"

_OPCODE_BYTES = {op: i for i, op in enumerate(Opcode)}
_BYTE_OPCODES = {i: op for op, i in _OPCODE_BYTES.items()}


@dataclass(frozen=True)
class MachineProfile:
    name: str
    num_registers: int
    latency: dict[Opcode, int]
    taken_branch_overhead: int = 2
    not_taken_cost: int = 1
    mem_slots: int = 8

    def lat(self, opcode: Opcode) -> int:
        return self.latency[opcode]


def _base_latency() -> dict[Opcode, int]:
    lat = {op: 1 for op in Opcode}
    lat[Opcode.LD] = 2
    lat[Opcode.ST] = 2
    lat[Opcode.B] = 3
    return lat


TIGHT8 = MachineProfile(name="tight8", num_registers=8, latency=_base_latency())
WIDE32 = MachineProfile(name="wide32", num_registers=32, latency=_base_latency())
PROFILES = {p.name: p for p in (TIGHT8, WIDE32)}


class MachineError(Exception):
    pass


@dataclass(frozen=True)
class Instr:
    opcode: Opcode
    a: int = 0
    b: int = 0
    c: int = 0

    def word(self) -> int:
        return (
            _OPCODE_BYTES[self.opcode]
            | (self.a & 0xFF) << 8
            | (self.b & 0xFF) << 16
            | (self.c & 0xFF) << 24
        )

    @staticmethod
    def from_word(word: int) -> "Instr":
        op = word & 0xFF
        if op not in _BYTE_OPCODES:
            raise MachineError(f"undecodable opcode byte {op}")
        return Instr(
            opcode=_BYTE_OPCODES[op],
            a=(word >> 8) & 0xFF,
            b=(word >> 16) & 0xFF,
            c=(word >> 24) & 0xFF,
        )


@dataclass
class MachineProgram:
    """Encoded program: one instruction list per block, base address 0."""

    profile_name: str
    num_inputs: int
    blocks: list[list[Instr]]

    def block_starts(self) -> list[int]:
        starts, offset = [], 0
        for block in self.blocks:
            starts.append(offset)
            offset += len(block)
        return starts

    def flat(self) -> list[Instr]:
        return [ins for block in self.blocks for ins in block]

    def address_of(self, block: int, pos: int) -> int:
        return 4 * (self.block_starts()[block] + pos)

    def to_bytes(self) -> bytes:
        name = self.profile_name.encode("ascii")
        out = bytearray(MAGIC)
        out.append(len(name))
        out += name
        out.append(self.num_inputs)
        out += len(self.blocks).to_bytes(2, "little")
        for block in self.blocks:
            out += len(block).to_bytes(2, "little")
        for block in self.blocks:
            for ins in block:
                out += ins.word().to_bytes(4, "little")
        return bytes(out)

    @staticmethod
    def from_bytes(data: bytes) -> "MachineProgram":
        if data[:4] != MAGIC:
            raise MachineError("bad magic")
        pos = 4
        name_len = data[pos]
        pos += 1
        profile_name = data[pos : pos + name_len].decode("ascii")
        pos += name_len
        num_inputs = data[pos]
        pos += 1
        nblocks = int.from_bytes(data[pos : pos + 2], "little")
        pos += 2
        counts = []
        for _ in range(nblocks):
            counts.append(int.from_bytes(data[pos : pos + 2], "little"))
            pos += 2
        blocks = []
        for count in counts:
            block = []
            for _ in range(count):
                word = int.from_bytes(data[pos : pos + 4], "little")
                pos += 4
                block.append(Instr.from_word(word))
            blocks.append(block)
        return MachineProgram(profile_name=profile_name, num_inputs=num_inputs, blocks=blocks)


# ----------------------------------------------------------------------
# encoding
# ----------------------------------------------------------------------


@dataclass
class Schedule:
    """Fully decided code layout handed to the encoder.

    `loc` maps every temp to a unified location index: values below the
    register count are registers, values at or above it are memory slots.
    Temps aliased to another temp must already be resolved to the same
    location.  `impl` gives the concrete opcode chosen for ops with
    instruction alternatives (copies and moves); absent entries keep the
    op's own opcode.
    """

    active: set[int]
    cycle: dict[int, int]
    loc: dict[str, int]
    impl: dict[int, Opcode] = field(default_factory=dict)
    swapped: set[int] = field(default_factory=set)


def slot_index(func: FunctionIR, slot: str) -> int:
    return func.slots.index(slot)


def encode(func: FunctionIR, schedule: Schedule, profile: MachineProfile) -> MachineProgram:
    """Emit instructions in issue-cycle order, filling idle cycles with NOPs."""
    nregs = profile.num_registers

    def reg_of(temp: str) -> int:
        if temp not in schedule.loc:
            raise MachineError(f"unmapped temp {temp!r}")
        loc = schedule.loc[temp]
        if loc >= nregs:
            raise MachineError(f"temp {temp!r} used from memory slot {loc - nregs}")
        return loc

    blocks: list[list[Instr]] = []
    for block in func.blocks:
        chosen = [op for op in block.ops if op.index in schedule.active]
        chosen.sort(key=lambda op: schedule.cycle[op.index])
        words: list[Instr] = []
        clock = 0
        for op in chosen:
            start = schedule.cycle[op.index]
            if start < clock:
                raise MachineError(
                    f"cycle collision at op {op.index} in block {block.index}"
                )
            while clock < start:
                words.append(Instr(Opcode.NOP))
                clock += 1
            ins = _lower(func, schedule, op, reg_of, nregs)
            words.append(ins)
            clock = start + profile.lat(ins.opcode)
        blocks.append(words)
    return MachineProgram(
        profile_name=profile.name, num_inputs=len(func.inputs), blocks=blocks
    )


def remat_constant(func: FunctionIR, temp: str) -> Optional[int]:
    """Immediate value when `temp` is defined by LI, else None."""
    site = func.def_site(temp)
    if site is None:
        return None
    op = func.op(site)
    if op.opcode is Opcode.LI:
        return op.uses[0]
    return None


def _lower(func: FunctionIR, schedule: Schedule, op, reg_of, nregs: int) -> Instr:
    opcode = schedule.impl.get(op.index, op.opcode)
    if op.opcode is Opcode.COPY:
        return _lower_copy(func, schedule, op, reg_of, opcode, nregs)
    if opcode in (Opcode.ADD, Opcode.SUB, Opcode.XOR, Opcode.AND, Opcode.OR):
        if op.opcode is Opcode.MOV:
            # self-move alternative: or/and of the source with itself
            src = reg_of(op.uses[0])
            return Instr(opcode, reg_of(op.defs[0]), src, src)
        u0, u1 = op.uses
        if op.index in schedule.swapped:
            u0, u1 = u1, u0
        return Instr(opcode, reg_of(op.defs[0]), reg_of(u0), reg_of(u1))
    if opcode is Opcode.MOV:
        return Instr(Opcode.MOV, reg_of(op.defs[0]), reg_of(op.uses[0]))
    if opcode is Opcode.LI:
        return Instr(Opcode.LI, reg_of(op.defs[0]), op.uses[0])
    if opcode is Opcode.LD:
        return Instr(Opcode.LD, reg_of(op.defs[0]), slot_index(func, op.uses[0]))
    if opcode is Opcode.ST:
        return Instr(Opcode.ST, slot_index(func, op.uses[0]), reg_of(op.uses[1]))
    if opcode in (Opcode.BEQ, Opcode.BNE):
        u0, u1 = op.uses[0], op.uses[1]
        if op.index in schedule.swapped:
            u0, u1 = u1, u0
        return Instr(opcode, reg_of(u0), reg_of(u1), op.uses[2])
    if opcode is Opcode.B:
        return Instr(Opcode.B, op.uses[0])
    if opcode is Opcode.RET:
        return Instr(Opcode.RET, reg_of(op.uses[0]))
    if opcode is Opcode.NOP:
        return Instr(Opcode.NOP)
    raise MachineError(f"cannot lower opcode {opcode}")


def _lower_copy(func: FunctionIR, schedule: Schedule, op, reg_of, impl: Opcode, nregs: int) -> Instr:
    src, dst = op.uses[0], op.defs[0]
    src_loc = schedule.loc[src]
    dst_loc = schedule.loc[dst]
    if src_loc >= nregs and dst_loc >= nregs:
        raise MachineError(f"copy op {op.index} moves memory to memory")
    if dst_loc >= nregs:
        # spill: store the source register into the chosen slot
        return Instr(Opcode.ST, dst_loc - nregs, reg_of(src))
    if impl is Opcode.LI:
        imm = remat_constant(func, src)
        if imm is None:
            raise MachineError(f"copy of {src!r} is not rematerializable")
        return Instr(Opcode.LI, dst_loc, imm)
    if src_loc >= nregs:
        # reload from the spill slot
        return Instr(Opcode.LD, dst_loc, src_loc - nregs)
    if impl in (Opcode.OR, Opcode.AND):
        return Instr(impl, dst_loc, src_loc, src_loc)
    return Instr(Opcode.MOV, dst_loc, src_loc)


# ----------------------------------------------------------------------
# execution
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    address: int
    opcode: Opcode
    cycles: int
    registers: tuple[int, ...]
    bus: int
    reg_write: Optional[tuple[int, int, int]]  # (reg, old, new)
    bus_write: Optional[tuple[int, int]]  # (old, new)


@dataclass
class ExecTrace:
    steps: list[Step]
    total_cycles: int
    return_value: int
    path: list[int]

    def recomputed_cycles(self) -> int:
        return sum(step.cycles for step in self.steps)


def run(
    program: MachineProgram,
    inputs: Sequence[int],
    profile: Optional[MachineProfile] = None,
) -> ExecTrace:
    """Execute to RET; deterministic for identical (program, inputs, profile)."""
    if profile is None:
        profile = PROFILES[program.profile_name]
    if len(inputs) != program.num_inputs:
        raise MachineError(f"expected {program.num_inputs} inputs, got {len(inputs)}")

    regs = [0] * profile.num_registers
    for i, value in enumerate(inputs):
        regs[i] = value & VALUE_MASK
    slots = [0] * profile.mem_slots
    bus = 0

    starts = program.block_starts()
    steps: list[Step] = []
    path: list[int] = []
    total = 0
    block = 0
    while True:
        if block >= len(program.blocks):
            raise MachineError("fell off program end")
        path.append(block)
        pos = 0
        words = program.blocks[block]
        next_block = block + 1
        returned = None
        while pos < len(words):
            ins = words[pos]
            address = 4 * (starts[block] + pos)
            cycles = profile.lat(ins.opcode)
            reg_write = None
            bus_write = None
            op = ins.opcode
            if op in (Opcode.ADD, Opcode.SUB, Opcode.XOR, Opcode.AND, Opcode.OR):
                x, y = regs[ins.b], regs[ins.c]
                if op is Opcode.ADD:
                    value = (x + y) & VALUE_MASK
                elif op is Opcode.SUB:
                    value = (x - y) & VALUE_MASK
                elif op is Opcode.XOR:
                    value = x ^ y
                elif op is Opcode.AND:
                    value = x & y
                else:
                    value = x | y
                reg_write = (ins.a, regs[ins.a], value)
                regs[ins.a] = value
            elif op is Opcode.MOV:
                value = regs[ins.b]
                reg_write = (ins.a, regs[ins.a], value)
                regs[ins.a] = value
            elif op is Opcode.LI:
                reg_write = (ins.a, regs[ins.a], ins.b)
                regs[ins.a] = ins.b
            elif op is Opcode.LD:
                value = slots[ins.b]
                bus_write = (bus, value)
                bus = value
                reg_write = (ins.a, regs[ins.a], value)
                regs[ins.a] = value
            elif op is Opcode.ST:
                value = regs[ins.b]
                bus_write = (bus, value)
                bus = value
                slots[ins.a] = value
            elif op is Opcode.NOP:
                pass
            elif op is Opcode.B:
                next_block = ins.a
            elif op in (Opcode.BEQ, Opcode.BNE):
                taken = (regs[ins.a] == regs[ins.b]) == (op is Opcode.BEQ)
                if taken:
                    cycles += profile.taken_branch_overhead
                    next_block = ins.c
            elif op is Opcode.RET:
                returned = regs[ins.a]
            else:
                raise MachineError(f"invalid opcode {op}")
            total += cycles
            steps.append(
                Step(
                    address=address,
                    opcode=op,
                    cycles=cycles,
                    registers=tuple(regs),
                    bus=bus,
                    reg_write=reg_write,
                    bus_write=bus_write,
                )
            )
            if returned is not None:
                return ExecTrace(
                    steps=steps, total_cycles=total, return_value=returned, path=path
                )
            pos += 1
        block = next_block


LeakPoint = tuple[tuple[int, str, int], int]


def hd_leak_points(trace: ExecTrace) -> list[LeakPoint]:
    """(site, old^new) for every register write and memory-bus update.

    Sites are (instruction address, kind, index) with kind "reg" for
    register-overwrite transitions and "bus" for memory-remnant ones.
    """
    points: list[LeakPoint] = []
    for step in trace.steps:
        if step.reg_write is not None:
            reg, old, new = step.reg_write
            points.append(((step.address, "reg", reg), old ^ new))
        if step.bus_write is not None:
            old, new = step.bus_write
            points.append(((step.address, "bus", 0), old ^ new))
    return points


# ----------------------------------------------------------------------
# vectorized execution (used by the exhaustive-enumeration oracles)
# ----------------------------------------------------------------------


@dataclass
class BatchResult:
    returns: np.ndarray
    cycles: np.ndarray
    # site -> (number of lanes that executed it, value histogram over 0..255)
    transitions: dict[tuple[int, str, int], tuple[int, np.ndarray]]


def run_batch(
    program: MachineProgram,
    inputs: np.ndarray,
    profile: Optional[MachineProfile] = None,
    collect_transitions: bool = True,
) -> BatchResult:
    """Run the program over many input lanes at once.

    `inputs` has shape (num_inputs, n); lane j corresponds to the scalar
    call run(program, inputs[:, j]).  Branching partitions the lanes, so
    the cost is proportional to the number of executed paths, not lanes.
    """
    if profile is None:
        profile = PROFILES[program.profile_name]
    if inputs.shape[0] != program.num_inputs:
        raise MachineError(f"expected {program.num_inputs} input rows")
    n = inputs.shape[1]

    regs0 = np.zeros((profile.num_registers, n), dtype=np.uint8)
    regs0[: program.num_inputs] = inputs.astype(np.uint8)
    slots0 = np.zeros((profile.mem_slots, n), dtype=np.uint8)
    bus0 = np.zeros(n, dtype=np.uint8)

    returns = np.zeros(n, dtype=np.uint8)
    cycles = np.zeros(n, dtype=np.int64)
    transitions: dict[tuple[int, str, int], tuple[int, np.ndarray]] = {}
    starts = program.block_starts()

    def record(site: tuple[int, str, int], values: np.ndarray) -> None:
        if not collect_transitions:
            return
        hist = np.bincount(values, minlength=256)
        if site in transitions:
            count, acc = transitions[site]
            transitions[site] = (count + values.size, acc + hist)
        else:
            transitions[site] = (values.size, hist)

    # worklist of (block, lane indices, registers, slots, bus)
    work = [(0, np.arange(n), regs0, slots0, bus0)]
    while work:
        block, lanes, regs, slots, bus = work.pop()
        if lanes.size == 0:
            continue
        if block >= len(program.blocks):
            raise MachineError("fell off program end")
        next_block = block + 1
        done = False
        for pos, ins in enumerate(program.blocks[block]):
            address = 4 * (starts[block] + pos)
            op = ins.opcode
            lat = profile.lat(op)
            if op in (Opcode.ADD, Opcode.SUB, Opcode.XOR, Opcode.AND, Opcode.OR, Opcode.MOV):
                x = regs[ins.b]
                if op is Opcode.ADD:
                    value = x + regs[ins.c]
                elif op is Opcode.SUB:
                    value = x - regs[ins.c]
                elif op is Opcode.XOR:
                    value = x ^ regs[ins.c]
                elif op is Opcode.AND:
                    value = x & regs[ins.c]
                elif op is Opcode.OR:
                    value = x | regs[ins.c]
                else:
                    value = x.copy()
                record((address, "reg", ins.a), regs[ins.a] ^ value)
                regs[ins.a] = value
            elif op is Opcode.LI:
                value = np.full(lanes.size, ins.b, dtype=np.uint8)
                record((address, "reg", ins.a), regs[ins.a] ^ value)
                regs[ins.a] = value
            elif op is Opcode.LD:
                value = slots[ins.b]
                record((address, "bus", 0), bus ^ value)
                bus = value.copy()
                record((address, "reg", ins.a), regs[ins.a] ^ value)
                regs[ins.a] = value.copy()
            elif op is Opcode.ST:
                value = regs[ins.b]
                record((address, "bus", 0), bus ^ value)
                bus = value.copy()
                slots[ins.a] = value.copy()
            elif op is Opcode.NOP:
                pass
            elif op is Opcode.B:
                next_block = ins.a
            elif op in (Opcode.BEQ, Opcode.BNE):
                cycles[lanes] += lat
                eq = regs[ins.a] == regs[ins.b]
                taken_mask = eq if op is Opcode.BEQ else ~eq
                if taken_mask.any():
                    idx = np.nonzero(taken_mask)[0]
                    cycles[lanes[idx]] += profile.taken_branch_overhead
                    work.append(
                        (ins.c, lanes[idx], regs[:, idx].copy(), slots[:, idx].copy(), bus[idx].copy())
                    )
                if not taken_mask.all():
                    idx = np.nonzero(~taken_mask)[0]
                    work.append(
                        (
                            block + 1,
                            lanes[idx],
                            regs[:, idx].copy(),
                            slots[:, idx].copy(),
                            bus[idx].copy(),
                        )
                    )
                done = True
                break
            elif op is Opcode.RET:
                cycles[lanes] += lat
                returns[lanes] = regs[ins.a]
                done = True
                break
            else:
                raise MachineError(f"invalid opcode {op}")
            cycles[lanes] += lat
        if not done:
            work.append((next_block, lanes, regs, slots, bus))

    return BatchResult(returns=returns, cycles=cycles, transitions=transitions)
