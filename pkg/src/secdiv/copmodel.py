"""Combinatorial backend model: scheduling plus register allocation under
security constraints.

A problem instance is built from an analyzed function and exposes

  * decision variables: per-op activation, issue cycle, instruction
    alternative and operand swap, and a unified location index per temp
    (registers first, then memory slots),
  * base constraints: data dependencies, single-issue blocks, live-range
    interference, copy aliasing semantics,
  * security constraint families: path balancing for the timing model,
    register-transition and memory-order conflicts for the power model,
  * an optional optimality-gap bound on the block-weighted objective.

`check_solution` re-evaluates every constraint from scratch on a full
assignment; it shares no code with the solver's propagation and is the
final word on feasibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .machine import MachineProfile, Opcode, Schedule
from .mir import FunctionIR, Operation
from .secanalysis import LeakPairSets, SecretPathSet

VarKey = tuple[str, object]


class Mode(Enum):
    NONE = "none"
    TSC = "tsc"
    PSC = "psc"


class ModelError(Exception):
    pass


class ModelInfeasibleError(ModelError):
    """Raised when the problem is infeasible by construction."""


@dataclass(frozen=True)
class Violation:
    family: str
    message: str

    def __str__(self) -> str:
        return f"[{self.family}] {self.message}"


@dataclass(frozen=True)
class Solution:
    """Full assignment of the decision variables, in canonical form."""

    assignment: tuple[tuple[VarKey, object], ...]
    objective: Fraction
    seed: int = 0

    def value(self, key: VarKey):
        return dict(self.assignment)[key]

    def as_dict(self) -> dict[VarKey, object]:
        return dict(self.assignment)


def make_solution(prob: "CopProblem", values: Mapping[VarKey, object], seed: int = 0) -> Solution:
    canon = canonicalize(prob, dict(values))
    assignment = tuple((k, canon[k]) for k in prob.var_order)
    objective = objective_value_from(prob, canon)
    return Solution(assignment=assignment, objective=objective, seed=seed)


@dataclass
class CopProblem:
    function: FunctionIR
    profile: MachineProfile
    mode: Mode
    pairs: LeakPairSets
    psets: list[SecretPathSet]
    gap: Fraction = Fraction(0)
    opt_bound: Optional[int] = None
    nop_budget: int = 3

    # derived structure (filled by build_problem)
    ops: list[Operation] = field(default_factory=list)
    op_block: dict[int, int] = field(default_factory=dict)
    optional_ops: tuple[int, ...] = ()
    copy_ops: dict[int, tuple[str, str]] = field(default_factory=dict)
    alternatives: dict[int, tuple[Opcode, ...]] = field(default_factory=dict)
    swap_ops: tuple[int, ...] = ()
    nop_blocks: dict[int, tuple[int, ...]] = field(default_factory=dict)
    horizon: dict[int, int] = field(default_factory=dict)
    cycle_domain: dict[int, tuple[int, ...]] = field(default_factory=dict)
    reg_domain: dict[str, tuple[int, ...]] = field(default_factory=dict)
    var_order: list[VarKey] = field(default_factory=list)
    entry_paths: tuple[tuple[int, ...], ...] = ()
    balance_paths: tuple[tuple[tuple[int, ...], ...], ...] = ()
    # same-slot memory accesses keep their program order (no aliasing
    # analysis: one name is one location)
    mem_deps: tuple[tuple[int, int], ...] = ()

    @property
    def num_registers(self) -> int:
        return self.profile.num_registers

    def op_lat(self, op: Operation) -> int:
        # Copies occupy a uniform 2-cycle slot whatever they lower to
        # (mov, self-or/and, li, or a spill store/reload); a register move
        # gets a padding NOP after it.  Keeping the latency independent of
        # the register choice keeps scheduling and allocation separable.
        if op.opcode is Opcode.COPY:
            return 2
        return self.profile.lat(op.opcode)


def build_problem(
    func: FunctionIR,
    pairs: LeakPairSets,
    psets: Sequence[SecretPathSet],
    profile: MachineProfile,
    mode: Mode = Mode.NONE,
    gap: Fraction = Fraction(0),
    best_cost: Optional[Fraction] = None,
    nop_budget: int = 3,
) -> CopProblem:
    """Assemble the constraint problem for one function."""
    if len(func.inputs) > profile.num_registers:
        raise ModelInfeasibleError(
            f"{len(func.inputs)} inputs exceed {profile.num_registers} registers"
        )
    if len(func.slots) > profile.mem_slots:
        raise ModelInfeasibleError(
            f"{len(func.slots)} named slots exceed {profile.mem_slots} memory slots"
        )

    prob = CopProblem(
        function=func,
        profile=profile,
        mode=mode,
        pairs=pairs,
        psets=list(psets) if mode is Mode.TSC else [],
        gap=gap,
        nop_budget=nop_budget,
    )
    if mode is not Mode.PSC:
        prob = replace(prob, pairs=LeakPairSets(frozenset(), frozenset(), frozenset()))

    prob.ops = sorted(func.all_ops(), key=lambda o: o.index)
    prob.op_block = {op.index: func.block_of_op(op.index) for op in prob.ops}
    prob.optional_ops = tuple(op.index for op in prob.ops if op.optional)
    prob.copy_ops = {
        op.index: (op.uses[0], op.defs[0]) for op in prob.ops if op.opcode is Opcode.COPY
    }

    for op in prob.ops:
        if op.opcode is Opcode.MOV:
            prob.alternatives[op.index] = (Opcode.MOV, Opcode.OR, Opcode.AND)
        elif op.opcode is Opcode.COPY:
            alts = [Opcode.MOV, Opcode.OR, Opcode.AND]
            from .machine import remat_constant

            if remat_constant(func, op.uses[0]) is not None:
                alts.append(Opcode.LI)
            prob.alternatives[op.index] = tuple(alts)
        else:
            prob.alternatives[op.index] = (op.opcode,)

    prob.swap_ops = tuple(
        op.index
        for op in prob.ops
        if op.commutative and len(op.temp_uses()) == 2 and op.temp_uses()[0] != op.temp_uses()[1]
    )

    # blocks made only of optional NOPs (balancing blocks) are canonical:
    # the i-th NOP is pinned to cycle i and active NOPs form a prefix
    for block in func.blocks:
        if block.ops and all(o.opcode is Opcode.NOP and o.optional for o in block.ops):
            prob.nop_blocks[block.index] = tuple(o.index for o in block.ops)

    for block in func.blocks:
        total = sum(prob.op_lat(op) for op in block.ops)
        prob.horizon[block.index] = total + (0 if block.index in prob.nop_blocks else nop_budget)

    for op in prob.ops:
        b = prob.op_block[op.index]
        if b in prob.nop_blocks:
            pos = prob.nop_blocks[b].index(op.index)
            prob.cycle_domain[op.index] = (pos,)
        else:
            hi = prob.horizon[b] - prob.op_lat(op)
            prob.cycle_domain[op.index] = tuple(range(0, hi + 1))

    nregs = profile.num_registers
    named = len(func.slots)
    spill_locs = tuple(range(nregs + named, nregs + profile.mem_slots))
    input_names = func.input_names()
    for name in sorted(func.temps):
        if name in input_names:
            prob.reg_domain[name] = (input_names.index(name),)
        elif any(name == dst for _, dst in prob.copy_ops.values()):
            prob.reg_domain[name] = tuple(range(nregs)) + spill_locs
        else:
            prob.reg_domain[name] = tuple(range(nregs))

    order: list[VarKey] = []
    for op in prob.ops:
        if op.optional:
            order.append(("active", op.index))
        order.append(("cycle", op.index))
        if len(prob.alternatives[op.index]) > 1:
            order.append(("instr", op.index))
        if op.index in prob.swap_ops:
            order.append(("swap", op.index))
    for name in sorted(func.temps):
        order.append(("reg", name))
    prob.var_order = order

    prob.entry_paths = _all_entry_paths(func)
    prob.balance_paths = tuple(tuple(sorted(s.paths)) for s in prob.psets)

    mem_deps = []
    for block in func.blocks:
        accesses = [op for op in block.ops if op.opcode in (Opcode.LD, Opcode.ST)]
        for i, o1 in enumerate(accesses):
            for o2 in accesses[i + 1 :]:
                if o1.slot == o2.slot and (
                    o1.opcode is Opcode.ST or o2.opcode is Opcode.ST
                ):
                    mem_deps.append((o1.index, o2.index))
    prob.mem_deps = tuple(mem_deps)

    _detect_obvious_infeasibility(prob)

    if best_cost is not None:
        prob.opt_bound = math.floor((1 + gap) * best_cost)
    return prob


def _all_entry_paths(func: FunctionIR) -> tuple[tuple[int, ...], ...]:
    paths: list[tuple[int, ...]] = []

    def walk(block: int, acc: list[int]) -> None:
        acc = acc + [block]
        succ = func.successors(block)
        if not succ:
            paths.append(tuple(acc))
            return
        for s in succ:
            walk(s, acc)

    walk(0, [])
    return tuple(sorted(paths))


def _detect_obvious_infeasibility(prob: CopProblem) -> None:
    """Cheap static check on the mandatory configuration: the peak number
    of simultaneously live values must fit in registers plus spill slots."""
    active = {op.index for op in prob.ops if not op.optional}
    cycle = _compact_cycles(prob, active)
    model = build_value_model(prob, active, cycle, resolve_roots(prob, active))
    capacity = prob.num_registers + (prob.profile.mem_slots - len(prob.function.slots))
    for block in prob.function.blocks:
        ivs = [
            (lo, hi)
            for lst in model.intervals.values()
            for b, lo, hi in lst
            if b == block.index
        ]
        for lo, _ in ivs:
            live = sum(1 for lo2, hi2 in ivs if lo2 <= lo <= hi2)
            if live > capacity:
                raise ModelInfeasibleError(
                    f"block {block.index}: {live} simultaneously live values exceed "
                    f"capacity {capacity}"
                )


def _compact_cycles(prob: CopProblem, active: set[int]) -> dict[int, int]:
    cycle: dict[int, int] = {}
    for block in prob.function.blocks:
        clock = 0
        for op in block.ops:
            cycle[op.index] = clock if op.index in active else 0
            if op.index in active:
                clock += prob.op_lat(op)
    return cycle


# ----------------------------------------------------------------------
# assignment views
# ----------------------------------------------------------------------


def resolve_roots(prob: CopProblem, active: set[int]) -> dict[str, str]:
    """Map each temp to the value it denotes once inactive copies alias."""
    src_of = {dst: src for idx, (src, dst) in prob.copy_ops.items() if idx not in active}
    roots: dict[str, str] = {}
    for name in prob.function.temps:
        cur = name
        while cur in src_of:
            cur = src_of[cur]
        roots[name] = cur
    return roots


@dataclass
class ValueModel:
    values: list[str]
    def_point: dict[str, tuple[int, int]]  # value -> (block, ready time)
    uses: dict[str, list[tuple[int, int, int]]]  # value -> [(block, cycle, op)]
    live_in: dict[int, set[str]]
    live_out: dict[int, set[str]]
    # value -> [(block, start, end)] closed intervals; end may be INF
    intervals: dict[str, list[tuple[int, int, int]]]


_INF = 1 << 30


def build_value_model(
    prob: CopProblem,
    active: set[int],
    cycle: Mapping[int, int],
    roots: Mapping[str, str],
) -> ValueModel:
    func = prob.function
    input_names = set(func.input_names())

    values = list(func.input_names())
    def_point: dict[str, tuple[int, int]] = {n: (0, 0) for n in values}
    for op in prob.ops:
        if op.index in active and op.defs:
            root = roots[op.defs[0]]
            if root == op.defs[0]:
                values.append(root)
                def_point[root] = (prob.op_block[op.index], cycle[op.index] + prob.op_lat(op))

    uses: dict[str, list[tuple[int, int, int]]] = {v: [] for v in values}
    for op in prob.ops:
        if op.index not in active:
            continue
        for temp in op.temp_uses():
            root = roots[temp]
            if root in uses:
                uses[root].append((prob.op_block[op.index], cycle[op.index], op.index))

    nblocks = len(func.blocks)
    use_blocks: dict[int, set[str]] = {b: set() for b in range(nblocks)}
    def_blocks: dict[int, set[str]] = {b: set() for b in range(nblocks)}
    for v in values:
        b, _ = def_point[v]
        if v not in input_names:
            def_blocks[b].add(v)
        for ub, _, _ in uses[v]:
            use_blocks[ub].add(v)
    for n in func.input_names():
        def_blocks[0].add(n)

    live_in: dict[int, set[str]] = {b: set() for b in range(nblocks)}
    live_out: dict[int, set[str]] = {b: set() for b in range(nblocks)}
    for b in range(nblocks - 1, -1, -1):
        out: set[str] = set()
        for s in func.successors(b):
            out |= live_in[s]
        live_out[b] = out
        # upward-exposed: used in b and not defined in b (defs precede uses
        # inside a block by the def-before-use rule)
        live_in[b] = (out - def_blocks[b]) | {
            v for v in use_blocks[b] if v not in def_blocks[b]
        }

    intervals: dict[str, list[tuple[int, int, int]]] = {v: [] for v in values}
    for v in values:
        db, ready = def_point[v]
        blocks_alive = {db}
        for b in range(nblocks):
            if v in live_in[b] or v in live_out[b] or v in use_blocks[b]:
                blocks_alive.add(b)
        for b in sorted(blocks_alive):
            last_use = max((c for ub, c, _ in uses[v] if ub == b), default=None)
            starts = ready if b == db else 0
            if b != db and v not in live_in[b]:
                continue
            if v in live_out[b]:
                end = _INF
            elif last_use is not None:
                end = last_use
            elif b == db:
                end = starts
            else:
                continue
            if end >= starts:
                intervals[v].append((b, starts, end))
    return ValueModel(
        values=values,
        def_point=def_point,
        uses=uses,
        live_in=live_in,
        live_out=live_out,
        intervals=intervals,
    )


# ----------------------------------------------------------------------
# objective
# ----------------------------------------------------------------------


def block_makespans(
    prob: CopProblem, active: set[int], cycle: Mapping[int, int]
) -> dict[int, int]:
    spans: dict[int, int] = {}
    for block in prob.function.blocks:
        span = 0
        for op in block.ops:
            if op.index in active:
                span = max(span, cycle[op.index] + prob.op_lat(op))
        spans[block.index] = span
    return spans


def worst_edge_overhead(prob: CopProblem, block_index: int) -> int:
    term = prob.function.blocks[block_index].terminator
    if term is not None and term.opcode in (Opcode.BEQ, Opcode.BNE):
        return prob.profile.taken_branch_overhead
    return 0


def objective_value_from(prob: CopProblem, values: Mapping[VarKey, object]) -> Fraction:
    active = active_set(prob, values)
    cycle = {op.index: values[("cycle", op.index)] for op in prob.ops}
    spans = block_makespans(prob, active, cycle)
    total = Fraction(0)
    for block in prob.function.blocks:
        total += block.weight * (spans[block.index] + worst_edge_overhead(prob, block.index))
    return total


def objective_value(sol: Solution, prob: Optional[CopProblem] = None) -> Fraction:
    """Block-weighted makespan, with the worst-case taken-branch overhead
    amortized into each conditional block's cost."""
    if prob is None:
        return sol.objective
    values = sol.as_dict()
    if any(("cycle", op.index) not in values for op in prob.ops):
        raise ModelError("partial assignment")
    return objective_value_from(prob, values)


def path_cost(
    prob: CopProblem, path: Sequence[int], spans: Mapping[int, int]
) -> int:
    """Cycle count along a path: block makespans plus taken-edge overheads."""
    total = 0
    for i, b in enumerate(path):
        total += spans[b]
        if i + 1 < len(path):
            taken = prob.function.taken_successor(b)
            if taken is not None and path[i + 1] == taken:
                total += prob.profile.taken_branch_overhead
    return total


def active_set(prob: CopProblem, values: Mapping[VarKey, object]) -> set[int]:
    active = set()
    for op in prob.ops:
        if op.optional:
            if values.get(("active", op.index)):
                active.add(op.index)
        else:
            active.add(op.index)
    return active


# ----------------------------------------------------------------------
# canonical form
# ----------------------------------------------------------------------


def canonicalize(prob: CopProblem, values: dict[VarKey, object]) -> dict[VarKey, object]:
    """Normalize the meaningless parts of an assignment so that distinct
    canonical assignments correspond to genuinely different code."""
    out = dict(values)
    active = active_set(prob, out)
    roots = resolve_roots(prob, active)
    for op in prob.ops:
        if op.index not in active:
            out[("cycle", op.index)] = prob.cycle_domain[op.index][0]
            if ("instr", op.index) in out or len(prob.alternatives[op.index]) > 1:
                out[("instr", op.index)] = 0
            if op.index in prob.swap_ops:
                out[("swap", op.index)] = False
        elif op.index in prob.copy_ops and len(prob.alternatives[op.index]) > 1:
            src, dst = prob.copy_ops[op.index]
            nregs = prob.num_registers
            src_loc = out[("reg", roots[src])]
            if out[("reg", dst)] >= nregs or src_loc >= nregs:
                out[("instr", op.index)] = 0  # impl forced to a store or load
    for name in prob.function.temps:
        root = roots[name]
        if root != name:
            out[("reg", name)] = out[("reg", root)]
    for op in prob.ops:
        if ("instr", op.index) not in out and len(prob.alternatives[op.index]) > 1:
            out[("instr", op.index)] = 0
        if op.index in prob.swap_ops and ("swap", op.index) not in out:
            out[("swap", op.index)] = False
    return out


# ----------------------------------------------------------------------
# independent constraint checker
# ----------------------------------------------------------------------


def check_solution(sol: Solution | Mapping[VarKey, object], prob: CopProblem) -> list[Violation]:
    """Re-evaluate every constraint from scratch; empty list means feasible.

    This is a from-first-principles evaluation, deliberately disjoint from
    the solver's propagation machinery.
    """
    values = sol.as_dict() if isinstance(sol, Solution) else dict(sol)
    out: list[Violation] = []
    func = prob.function
    nregs = prob.num_registers

    for key in prob.var_order:
        if key not in values:
            out.append(Violation("domain", f"missing variable {key}"))
            return out
    for op in prob.ops:
        c = values[("cycle", op.index)]
        if c not in prob.cycle_domain[op.index]:
            out.append(Violation("domain", f"cycle of op {op.index} = {c} outside domain"))
    for name in func.temps:
        r = values[("reg", name)]
        if r not in prob.reg_domain[name]:
            out.append(Violation("domain", f"reg of {name} = {r} outside domain"))
    if out:
        return out

    active = active_set(prob, values)
    roots = resolve_roots(prob, active)
    cycle = {op.index: values[("cycle", op.index)] for op in prob.ops}
    loc = {name: values[("reg", name)] for name in func.temps}

    # copy aliasing: an inactive copy's def shares its source's location
    for idx, (src, dst) in prob.copy_ops.items():
        if idx not in active and loc[dst] != loc[roots[src]]:
            out.append(
                Violation(
                    "copy-semantics",
                    f"inactive copy {idx}: {dst} must alias {roots[src]}",
                )
            )

    # canonical-form constraints (symmetry breaking)
    canon = canonicalize(prob, values)
    for key in prob.var_order:
        if values[key] != canon[key]:
            out.append(Violation("symmetry", f"non-canonical value for {key}"))
    for b, nops in prob.nop_blocks.items():
        actives = [i for i in nops if i in active]
        if actives != list(nops[: len(actives)]):
            out.append(Violation("symmetry", f"NOP activation in block {b} is not a prefix"))

    # operand locations
    for op in prob.ops:
        if op.index not in active:
            continue
        if op.opcode is Opcode.COPY:
            src, dst = prob.copy_ops[op.index]
            src_loc = loc[roots[src]]
            dst_loc = loc[dst]
            if src_loc >= nregs and dst_loc >= nregs:
                out.append(
                    Violation("operand-location", f"copy {op.index} moves memory to memory")
                )
            impl = prob.alternatives[op.index][values.get(("instr", op.index), 0)]
            if impl is Opcode.LI and dst_loc >= nregs:
                out.append(
                    Violation("operand-location", f"copy {op.index} rematerializes into memory")
                )
        else:
            for temp in op.temp_uses():
                if loc[roots[temp]] >= nregs:
                    out.append(
                        Violation(
                            "operand-location",
                            f"op {op.index} reads {temp} from memory slot",
                        )
                    )
            for d in op.defs:
                if loc[roots[d]] >= nregs:
                    out.append(
                        Violation("operand-location", f"op {op.index} defines {d} in memory")
                    )

    # dependencies
    for op in prob.ops:
        if op.index not in active:
            continue
        for temp in op.temp_uses():
            root = roots[temp]
            site = func.def_site(root)
            if site is None:
                continue  # input
            if site not in active:
                out.append(
                    Violation("dependency", f"op {op.index} uses {root} whose def is inactive")
                )
                continue
            db, ub = prob.op_block[site], prob.op_block[op.index]
            if db == ub:
                ready = cycle[site] + prob.op_lat(func.op(site))
                if cycle[op.index] < ready:
                    out.append(
                        Violation(
                            "dependency",
                            f"op {op.index} at cycle {cycle[op.index]} uses {root} "
                            f"ready at {ready}",
                        )
                    )
            elif db > ub:
                out.append(Violation("dependency", f"def of {root} in later block than use"))

    for a, b in prob.mem_deps:
        if a in active and b in active:
            ready = cycle[a] + prob.op_lat(func.op(a))
            if cycle[b] < ready:
                out.append(
                    Violation(
                        "dependency",
                        f"memory op {b} reordered before same-slot op {a}",
                    )
                )

    # single-issue, horizon, terminator position
    for block in func.blocks:
        ops_here = [op for op in block.ops if op.index in active]
        spans_here = sorted(
            (cycle[o.index], cycle[o.index] + prob.op_lat(o), o.index) for o in ops_here
        )
        for (s1, e1, i1), (s2, e2, i2) in zip(spans_here, spans_here[1:]):
            if s2 < e1:
                out.append(
                    Violation("issue", f"ops {i1} and {i2} overlap in block {block.index}")
                )
        for s, e, i in spans_here:
            if e > prob.horizon[block.index]:
                out.append(Violation("issue", f"op {i} exceeds horizon of block {block.index}"))
        term = block.terminator
        if term is not None and term.index in active:
            for o in ops_here:
                if o.index != term.index and cycle[o.index] >= cycle[term.index]:
                    out.append(
                        Violation("issue", f"op {o.index} issues at or after the terminator")
                    )

    if out:
        return out

    # live-range interference
    model = build_value_model(prob, active, cycle, roots)
    vals = model.values
    for i, v1 in enumerate(vals):
        for v2 in vals[i + 1 :]:
            if loc[v1] != loc[v2]:
                continue
            for b1, s1, e1 in model.intervals[v1]:
                for b2, s2, e2 in model.intervals[v2]:
                    if b1 == b2 and s1 <= e2 and s2 <= e1:
                        out.append(
                            Violation(
                                "interference",
                                f"{v1} and {v2} overlap in location {loc[v1]} "
                                f"(block {b1})",
                            )
                        )
                        break
                else:
                    continue
                break

    # timing-balance constraints
    spans = block_makespans(prob, active, cycle)
    for pset_paths in prob.balance_paths:
        costs = {path: path_cost(prob, path, spans) for path in pset_paths}
        if len(set(costs.values())) > 1:
            detail = ", ".join(
                "->".join(map(str, p)) + f"={c}" for p, c in sorted(costs.items())
            )
            out.append(Violation("balance", f"unbalanced secret paths: {detail}"))

    # power constraints: register-overwrite and memory-bus transitions
    if prob.pairs.rpairs or prob.pairs.hazard_temps or prob.pairs.mpairs:
        out.extend(_check_transitions(prob, active, cycle, loc, roots))

    if prob.opt_bound is not None:
        obj = objective_value_from(prob, values)
        if obj > prob.opt_bound:
            out.append(
                Violation(
                    "optimality-gap", f"objective {obj} exceeds bound {prob.opt_bound}"
                )
            )
    return out


_ZERO = "<zero>"


def _hazard(prob: CopProblem, a: str, b: str) -> bool:
    if a == _ZERO and b == _ZERO:
        return False
    if a == _ZERO:
        return b in prob.pairs.hazard_temps
    if b == _ZERO:
        return a in prob.pairs.hazard_temps
    if a == b:
        return False
    pair = (a, b) if a < b else (b, a)
    return pair in prob.pairs.rpairs


def _check_transitions(prob, active, cycle, loc, roots) -> list[Violation]:
    """Walk every execution path and flag forbidden adjacent values in any
    register and on the memory bus."""
    out: list[Violation] = []
    func = prob.function
    nregs = prob.num_registers
    seen: set[tuple[str, str, str]] = set()

    for path in prob.entry_paths:
        regs: dict[int, str] = {i: _ZERO for i in range(nregs)}
        for i, name in enumerate(func.input_names()):
            regs[i] = name
        bus = _ZERO
        for b in path:
            ops_here = sorted(
                (op for op in func.blocks[b].ops if op.index in active),
                key=lambda o: cycle[o.index],
            )
            for op in ops_here:
                data: Optional[str] = None
                if op.opcode is Opcode.ST:
                    data = roots[op.uses[1]]
                elif op.opcode is Opcode.LD:
                    data = roots[op.defs[0]]
                elif op.opcode is Opcode.COPY:
                    src, dst = prob.copy_ops[op.index]
                    if loc[dst] >= nregs:
                        data = roots[src]  # spill store
                    elif loc[roots[src]] >= nregs:
                        data = roots[dst]  # reload
                if data is not None:
                    if _hazard(prob, bus, data) and ("bus", bus, data) not in seen:
                        seen.add(("bus", bus, data))
                        out.append(
                            Violation(
                                "mre-conflict",
                                f"memory bus transition {bus} -> {data} at op {op.index}",
                            )
                        )
                    bus = data
                if op.defs:
                    value = roots[op.defs[0]]
                    if value != op.defs[0]:
                        continue  # aliased def, not a real write
                    r = loc[value]
                    if r < nregs:
                        prev = regs[r]
                        if _hazard(prob, prev, value) and (f"r{r}", prev, value) not in seen:
                            seen.add((f"r{r}", prev, value))
                            out.append(
                                Violation(
                                    "rot-conflict",
                                    f"register r{r} transition {prev} -> {value} "
                                    f"at op {op.index}",
                                )
                            )
                        regs[r] = value
    return out


# ----------------------------------------------------------------------
# lowering to the machine encoder
# ----------------------------------------------------------------------


def to_schedule(prob: CopProblem, sol: Solution) -> Schedule:
    values = sol.as_dict()
    active = active_set(prob, values)
    roots = resolve_roots(prob, active)
    loc = {name: values[("reg", roots[name])] for name in prob.function.temps}
    impl: dict[int, Opcode] = {}
    for op in prob.ops:
        if op.index in active and len(prob.alternatives[op.index]) > 1:
            impl[op.index] = prob.alternatives[op.index][values.get(("instr", op.index), 0)]
    swapped = {
        idx for idx in prob.swap_ops if values.get(("swap", idx)) and idx in active
    }
    cycle = {op.index: values[("cycle", op.index)] for op in prob.ops if op.index in active}
    return Schedule(active=active, cycle=cycle, loc=loc, impl=impl, swapped=swapped)


# ----------------------------------------------------------------------
# model dump
# ----------------------------------------------------------------------


def emit_model(prob: CopProblem) -> str:
    """Deterministic s-expression dump of the built problem."""
    lines = [f"(problem {prob.function.name} {prob.profile.name} {prob.mode.value}"]
    lines.append(f"  (nop-budget {prob.nop_budget})")
    for op in prob.ops:
        parts = [f"op {op.index} {op.opcode.value}"]
        if op.optional:
            parts.append("optional")
        dom = prob.cycle_domain[op.index]
        parts.append(f"cycles {dom[0]}..{dom[-1]}")
        if len(prob.alternatives[op.index]) > 1:
            parts.append("alts " + "/".join(a.value for a in prob.alternatives[op.index]))
        if op.index in prob.swap_ops:
            parts.append("swap")
        lines.append("  (" + " ".join(parts) + ")")
    for name in sorted(prob.function.temps):
        dom = prob.reg_domain[name]
        lines.append(f"  (reg {name} {{{','.join(map(str, dom))}}})")
    for pset_paths in prob.balance_paths:
        rendered = " ".join("->".join(map(str, p)) for p in pset_paths)
        lines.append(f"  (balance {rendered})")
    for t1, t2 in sorted(prob.pairs.rpairs):
        lines.append(f"  (rot-conflict {t1} {t2})")
    for o1, o2 in sorted(prob.pairs.mpairs):
        lines.append(f"  (mre-conflict {o1} {o2})")
    for t in sorted(prob.pairs.hazard_temps):
        lines.append(f"  (secret-valued {t})")
    if prob.opt_bound is not None:
        lines.append(f"  (objective-bound {prob.opt_bound})")
    lines.append(")")
    return "\n".join(lines) + "\n"
