"""Branch-and-bound search over the backend model, plus the pool driver
that produces diverse secure variants.

The search runs in three phases per branch: structural decisions first
(op activation, instruction alternative, operand swap), then issue cycles
block by block, then a location for every live value.  The objective is
fully determined once cycles are placed, so incumbent bounding happens
before allocation and the allocation phase is a pure feasibility search.
Every accepted leaf is re-validated by the independent constraint checker
before it may become an incumbent or a pool member.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Optional

from .copmodel import (
    CopProblem,
    Mode,
    Solution,
    VarKey,
    build_problem,
    build_value_model,
    check_solution,
    make_solution,
    path_cost,
    resolve_roots,
    worst_edge_overhead,
)
from .machine import MachineProfile, Opcode
from .mir import FunctionIR
from .secanalysis import analyze, extract_secret_path_sets, infer_types
from .mir import SecurityLabel


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    SAT = "sat"
    UNSAT = "unsat"
    TIMEOUT = "timeout"


class PoolReason(Enum):
    COMPLETE = "complete"
    EXHAUSTED = "exhausted"
    TIMEOUT = "timeout"


@dataclass
class SolveResult:
    status: SolveStatus
    solution: Optional[Solution] = None
    failing_family: Optional[str] = None
    nodes: int = 0


@dataclass
class VariantPool:
    solutions: list[Solution]
    gap: Optional[Fraction]
    distance_threshold: int
    reason: PoolReason
    problem: CopProblem


class _Timeout(Exception):
    pass


class _AllocDone(Exception):
    pass


class _Found(Exception):
    def __init__(self, solution: Solution):
        self.solution = solution


class _Search:
    def __init__(
        self,
        prob: CopProblem,
        seed: int = 0,
        minimize: bool = True,
        shuffle: bool = False,
        blocking: Optional[list[Solution]] = None,
        dthresh: int = 1,
        deadline: Optional[float] = None,
        compact: bool = False,
    ):
        self.prob = prob
        self.seed = seed
        self.minimize = minimize
        self.shuffle = shuffle
        self.compact = compact
        self.blocking = blocking or []
        self.dthresh = dthresh
        self.deadline = deadline
        self.rng = random.Random(f"secdiv:{seed}")
        self.nodes = 0
        self.best: Optional[Solution] = None
        self.fail_counts: dict[str, int] = {}

        func = prob.function
        self.ops_by_block = [list(b.ops) for b in func.blocks]
        self.lat = {op.index: prob.op_lat(op) for op in prob.ops}
        self.mandatory = {op.index for op in prob.ops if not op.optional}
        self.active_vars = [op.index for op in prob.ops if op.optional]
        self.instr_vars = [
            op.index for op in prob.ops if len(prob.alternatives[op.index]) > 1
        ]
        self.swap_vars = list(prob.swap_ops)

        self.cycle_order: list[int] = []
        for block in func.blocks:
            for op in block.ops:
                self.cycle_order.append(op.index)

        # per-variable value orders, fixed up front for reproducibility
        self.value_order: dict[VarKey, list] = {}
        for idx in self.active_vars:
            self.value_order[("active", idx)] = self._ordered([False, True])
        for idx in self.instr_vars:
            n = len(prob.alternatives[idx])
            self.value_order[("instr", idx)] = self._ordered(list(range(n)))
        for idx in self.swap_vars:
            self.value_order[("swap", idx)] = self._ordered([False, True])
        for idx in self.cycle_order:
            dom = list(prob.cycle_domain[idx])
            self.value_order[("cycle", idx)] = self._shuffled(dom) if shuffle else dom
        for name in func.temps:
            dom = list(prob.reg_domain[name])
            self.value_order[("reg", name)] = self._shuffled(dom) if shuffle else dom

        self.edge_const = {
            b.index: worst_edge_overhead(prob, b.index) for b in func.blocks
        }
        # instruction alternatives and operand swaps touch no constraint
        # and no cost, so they are not searched: the leaf picks values
        # (enumerating combinations only when blocking requires it)
        self.structural_vars: list[VarKey] = [("active", i) for i in self.active_vars]

        # balance equalities in difference form: shared blocks cancel, so
        # the check fires as soon as the differing blocks are scheduled
        self.balance_diffs: list[tuple[tuple[int, ...], tuple[int, ...], int]] = []
        for pset_paths in prob.balance_paths:
            anchor = pset_paths[0]
            for other in pset_paths[1:]:
                left = tuple(b for b in anchor if b not in set(other))
                right = tuple(b for b in other if b not in set(anchor))
                const = self._path_edges(anchor) - self._path_edges(other)
                self.balance_diffs.append((left, right, const))

    def _path_edges(self, path: tuple[int, ...]) -> int:
        total = 0
        for i, b in enumerate(path[:-1]):
            taken = self.prob.function.taken_successor(b)
            if taken is not None and path[i + 1] == taken:
                total += self.prob.profile.taken_branch_overhead
        return total

    def _ordered(self, values: list) -> list:
        return self._shuffled(values) if self.shuffle else values

    def _shuffled(self, values: list) -> list:
        values = list(values)
        self.rng.shuffle(values)
        return values

    def _fail(self, family: str) -> None:
        self.fail_counts[family] = self.fail_counts.get(family, 0) + 1

    def _tick(self) -> None:
        self.nodes += 1
        if self.deadline is not None and self.nodes % 512 == 0:
            if time.monotonic() > self.deadline:
                raise _Timeout()

    # -- phase A: structural decisions ---------------------------------

    def run(self) -> SolveResult:
        root_family = self._root_check()
        if root_family is not None:
            return SolveResult(status=SolveStatus.UNSAT, failing_family=root_family)
        try:
            self._assign_structural(0, {})
        except _Found as found:
            return SolveResult(status=SolveStatus.SAT, solution=found.solution, nodes=self.nodes)
        except _Timeout:
            status = SolveStatus.TIMEOUT
            return SolveResult(status=status, solution=self.best, nodes=self.nodes)
        if self.best is not None:
            return SolveResult(status=SolveStatus.OPTIMAL, solution=self.best, nodes=self.nodes)
        family = max(self.fail_counts, key=lambda k: (self.fail_counts[k], k), default="search")
        return SolveResult(status=SolveStatus.UNSAT, failing_family=family, nodes=self.nodes)

    def _root_check(self) -> Optional[str]:
        prob = self.prob
        if prob.opt_bound is not None:
            lb = Fraction(0)
            for block in prob.function.blocks:
                span = sum(self.lat[o.index] for o in block.ops if not o.optional)
                lb += block.weight * (span + self.edge_const[block.index])
            if lb > prob.opt_bound:
                return "optimality-gap"
        return None

    def _assign_structural(self, k: int, chosen: dict[VarKey, object]) -> None:
        self._tick()
        if k == len(self.structural_vars):
            self._enter_schedule(chosen)
            return
        key = self.structural_vars[k]
        for value in self.value_order[key]:
            if key[0] == "active" and value and not self._nop_prefix_ok(key[1], chosen):
                continue
            chosen[key] = value
            self._assign_structural(k + 1, chosen)
            del chosen[key]

    def _nop_prefix_ok(self, idx: int, chosen: dict[VarKey, object]) -> bool:
        block = self.prob.op_block[idx]
        nops = self.prob.nop_blocks.get(block)
        if not nops or idx not in nops:
            return True
        pos = nops.index(idx)
        return pos == 0 or chosen.get(("active", nops[pos - 1]), False)

    # -- phase B: cycles ------------------------------------------------

    def _enter_schedule(self, structural: dict[VarKey, object]) -> None:
        prob = self.prob
        active = set(self.mandatory)
        for idx in self.active_vars:
            if structural.get(("active", idx)):
                active.add(idx)
        # NOP prefix canonical form
        for nops in prob.nop_blocks.values():
            actives = [i for i in nops if i in active]
            if actives != list(nops[: len(actives)]):
                self._fail("symmetry")
                return
        roots = resolve_roots(prob, active)

        deps: dict[int, list[tuple[int, int]]] = {}
        for block_ops in self.ops_by_block:
            for op in block_ops:
                if op.index not in active:
                    continue
                for temp in op.temp_uses():
                    root = roots[temp]
                    site = prob.function.def_site(root)
                    if site is None or site not in active:
                        continue
                    if prob.op_block[site] == prob.op_block[op.index]:
                        deps.setdefault(op.index, []).append((site, self.lat[site]))
        for a, b in prob.mem_deps:
            if a in active and b in active:
                deps.setdefault(b, []).append((a, self.lat[a]))

        lb_span = {}
        for block in prob.function.blocks:
            lb_span[block.index] = sum(
                self.lat[o.index] for o in block.ops if o.index in active
            )
        ub_span = {}
        for block in prob.function.blocks:
            if block.index in prob.nop_blocks:
                ub_span[block.index] = lb_span[block.index]
            else:
                ub_span[block.index] = prob.horizon[block.index]

        if not self._balance_bounds_ok(lb_span, ub_span):
            self._fail("balance")
            return
        if not self._objective_bound_ok(lb_span, {}):
            self._fail("optimality-gap")
            return

        state = _ScheduleState(active=active, roots=roots, deps=deps, lb_span=lb_span, ub_span=ub_span)
        self._assign_cycles(0, state, structural)

    def _balance_bounds_ok(self, lb_span, ub_span, spans=None) -> bool:
        spans = spans or {}
        for left, right, const in self.balance_diffs:
            lo = hi = const
            for b in left:
                exact = spans.get(b)
                lo += exact if exact is not None else lb_span[b]
                hi += exact if exact is not None else ub_span[b]
            for b in right:
                exact = spans.get(b)
                lo -= exact if exact is not None else ub_span[b]
                hi -= exact if exact is not None else lb_span[b]
            if lo > 0 or hi < 0:
                return False
        return True

    def _objective_bound_ok(self, lb_span, spans) -> bool:
        prob = self.prob
        total = Fraction(0)
        for block in prob.function.blocks:
            span = spans.get(block.index, lb_span[block.index])
            total += block.weight * (span + self.edge_const[block.index])
        if prob.opt_bound is not None and total > prob.opt_bound:
            return False
        if self.minimize and self.best is not None and total >= self.best.objective:
            return False
        return True

    def _assign_cycles(self, k: int, state: "_ScheduleState", structural) -> None:
        self._tick()
        prob = self.prob
        while k < len(self.cycle_order) and self.cycle_order[k] not in state.active:
            k += 1
        if k == len(self.cycle_order):
            self._enter_allocation(state, structural)
            return
        idx = self.cycle_order[k]
        op = prob.function.op(idx)
        block = prob.op_block[idx]
        lat = self.lat[idx]
        horizon = prob.horizon[block]
        intervals = state.intervals.setdefault(block, [])
        lo = 0
        for site, site_lat in state.deps.get(idx, ()):
            lo = max(lo, state.cycle[site] + site_lat)
        if op.is_terminator:
            lo = max(lo, state.block_end.get(block, 0))

        last_in_block = self.ops_by_block[block][-1].index == idx or all(
            o.index not in state.active
            for o in self.ops_by_block[block]
            if o.index > idx
        )

        if self.compact:
            # heuristic dive: issue in block order, earliest feasible cycle
            candidates = [max(lo, state.block_end.get(block, 0))]
        else:
            candidates = self.value_order[("cycle", idx)]
        for c in candidates:
            if c < lo or c + lat > horizon:
                continue
            if any(c < e and s < c + lat for s, e in intervals):
                continue
            state.cycle[idx] = c
            intervals.append((c, c + lat))
            prev_end = state.block_end.get(block, 0)
            state.block_end[block] = max(prev_end, c + lat)
            ok = True
            if last_in_block:
                state.spans[block] = state.block_end[block]
                if not self._balance_bounds_ok(state.lb_span, state.ub_span, state.spans):
                    self._fail("balance")
                    ok = False
                elif not self._objective_bound_ok(state.lb_span, state.spans):
                    self._fail("optimality-gap")
                    ok = False
            else:
                # the unfinished block's span is at least its current end
                lb_here = max(state.block_end[block], state.lb_span[block])
                trial = dict(state.spans)
                trial[block] = lb_here
                if not self._objective_bound_ok(state.lb_span, trial):
                    self._fail("optimality-gap")
                    ok = False
            if ok:
                self._assign_cycles(k + 1, state, structural)
            if last_in_block:
                state.spans.pop(block, None)
            state.block_end[block] = prev_end
            intervals.pop()
            del state.cycle[idx]

    # -- phase C: locations ---------------------------------------------

    def _enter_allocation(self, state: "_ScheduleState", structural) -> None:
        prob = self.prob
        spans = {
            b.index: state.block_end.get(b.index, 0) for b in prob.function.blocks
        }
        for pset_paths in prob.balance_paths:
            costs = {path_cost(prob, p, spans) for p in pset_paths}
            if len(costs) > 1:
                self._fail("balance")
                return
        model = build_value_model(prob, state.active, state.cycle, state.roots)
        order = sorted(
            model.values,
            key=lambda v: (model.def_point[v][0], model.def_point[v][1], v),
        )
        overlap: dict[str, list[str]] = {v: [] for v in model.values}
        for i, v1 in enumerate(order):
            for v2 in order[i + 1 :]:
                if _intervals_overlap(model.intervals[v1], model.intervals[v2]):
                    overlap[v1].append(v2)
                    overlap[v2].append(v1)

        # values that may live in a memory slot: every use must be a copy
        # source (the value gets reloaded before any real use)
        mem_ok = {}
        for v in model.values:
            uses = model.uses[v]
            mem_ok[v] = all(
                prob.function.op(op_idx).opcode is Opcode.COPY for _, _, op_idx in uses
            )

        loc: dict[str, int] = {}
        try:
            self._assign_locs(0, order, overlap, mem_ok, model, state, structural, loc)
        except _AllocDone:
            pass

    def _assign_locs(self, k, order, overlap, mem_ok, model, state, structural, loc) -> None:
        self._tick()
        prob = self.prob
        nregs = prob.num_registers
        if k == len(order):
            self._leaf(state, structural, loc, model)
            return
        value = order[k]
        copy_src_mem = False
        site = prob.function.def_site(value)
        if site is not None and site in prob.copy_ops:
            src, _ = prob.copy_ops[site]
            copy_src_mem = loc[state.roots[src]] >= nregs

        for r in self.value_order[("reg", value)]:
            if r >= nregs:
                if not mem_ok[value] or copy_src_mem:
                    continue
            elif copy_src_mem:
                pass  # reload into a register is fine
            if any(loc.get(other) == r for other in overlap[value]):
                continue
            if not self._psc_candidate_ok(value, r, loc, model, state):
                self._fail("rot-conflict")
                continue
            loc[value] = r
            self._assign_locs(k + 1, order, overlap, mem_ok, model, state, structural, loc)
            del loc[value]

    def _psc_candidate_ok(self, value, r, loc, model, state) -> bool:
        """Forbid a location when it provably creates a hazardous adjacent
        register transition (no unplaced value could break the adjacency)."""
        prob = self.prob
        if r >= prob.num_registers:
            return True
        if not prob.pairs.rpairs and not prob.pairs.hazard_temps:
            return True
        here = model.def_point[value]
        inputs = prob.function.input_names()
        prev = None
        prev_key = None
        for v, rv in loc.items():
            if rv != r or v == value:
                continue
            key = model.def_point[v]
            if key <= here and (prev_key is None or key >= prev_key):
                prev, prev_key = v, key
        unplaced = [v for v in model.values if v not in loc and v != value]
        if prev is None:
            if any(model.def_point[v] <= here for v in unplaced):
                return True  # something may still be written to r first
            init = inputs[r] if r < len(inputs) else None
            if init is None:
                return value not in prob.pairs.hazard_temps
            pair = (init, value) if init < value else (value, init)
            return init == value or pair not in prob.pairs.rpairs
        # an unplaced value defined between prev and this one could still
        # take r and break the adjacency
        if any(prev_key < model.def_point[v] <= here for v in unplaced):
            return True
        pair = (prev, value) if prev < value else (value, prev)
        return prev == value or pair not in prob.pairs.rpairs

    # -- leaf -----------------------------------------------------------

    def _leaf(self, state, structural, loc, model) -> None:
        prob = self.prob
        values: dict[VarKey, object] = {}
        for idx in self.active_vars:
            values[("active", idx)] = idx in state.active
        for op in prob.ops:
            if op.index in state.active:
                values[("cycle", op.index)] = state.cycle[op.index]
            else:
                values[("cycle", op.index)] = prob.cycle_domain[op.index][0]
        for name in prob.function.temps:
            root = state.roots[name]
            values[("reg", name)] = loc[root]

        checked = False
        for combo in self._leaf_combos():
            values.update(combo)
            sol = make_solution(prob, values, seed=self.seed)
            if not checked:
                # feasibility is independent of instr/swap choices: the
                # checker verdict of the first combination binds them all
                checked = True
                violations = check_solution(sol, prob)
                if violations:
                    self._fail(violations[0].family)
                    return
            if any(distance(sol, blocked) < self.dthresh for blocked in self.blocking):
                self._fail("distance")
                continue
            if self.minimize:
                if self.best is None or sol.objective < self.best.objective:
                    self.best = sol
                # the objective is fixed by the schedule: one feasible
                # allocation per schedule is enough when optimizing
                raise _AllocDone()
            raise _Found(sol)

    def _leaf_combos(self):
        """Assignments of the free instr/swap variables: the defaults when
        optimizing, every combination (shuffled) when generating variants."""
        if not self.shuffle or (not self.instr_vars and not self.swap_vars):
            yield {
                **{("instr", i): 0 for i in self.instr_vars},
                **{("swap", i): False for i in self.swap_vars},
            }
            return
        keys = [("instr", i) for i in self.instr_vars] + [
            ("swap", i) for i in self.swap_vars
        ]
        orders = [self.value_order[k] for k in keys]
        for combo in itertools.product(*orders):
            yield dict(zip(keys, combo))


@dataclass
class _ScheduleState:
    active: set[int]
    roots: dict[str, str]
    deps: dict[int, list[tuple[int, int]]]
    lb_span: dict[int, int]
    ub_span: dict[int, int]
    cycle: dict[int, int] = field(default_factory=dict)
    intervals: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    block_end: dict[int, int] = field(default_factory=dict)
    spans: dict[int, int] = field(default_factory=dict)


def _intervals_overlap(a, b) -> bool:
    for b1, s1, e1 in a:
        for b2, s2, e2 in b:
            if b1 == b2 and s1 <= e2 and s2 <= e1:
                return True
    return False


# ----------------------------------------------------------------------
# public entry points
# ----------------------------------------------------------------------


def solve_optimal(prob: CopProblem, time_budget: float = 600.0, seed: int = 0) -> SolveResult:
    """Best solution by exhaustive branch-and-bound, or UNSAT/TIMEOUT.

    A compact-schedule dive runs first to seed the incumbent, which lets
    the full search prune padded schedules right away; the second pass is
    exhaustive and owns the optimality claim.
    """
    deadline = time.monotonic() + time_budget
    dive = _Search(
        prob,
        seed=seed,
        minimize=True,
        shuffle=False,
        compact=True,
        deadline=min(time.monotonic() + max(1.0, time_budget / 4), deadline),
    )
    warm = dive.run()
    search = _Search(prob, seed=seed, minimize=True, shuffle=False, deadline=deadline)
    if warm.solution is not None:
        search.best = warm.solution
    return search.run()


def solve_one(
    prob: CopProblem,
    blocking: Optional[list[Solution]] = None,
    dthresh: int = 1,
    time_budget: float = 600.0,
    seed: int = 0,
) -> SolveResult:
    """First feasible solution under the problem bound and blocking set."""
    deadline = time.monotonic() + time_budget
    search = _Search(
        prob,
        seed=seed,
        minimize=False,
        shuffle=True,
        blocking=blocking,
        dthresh=dthresh,
        deadline=deadline,
    )
    return search.run()


def distance(a: Solution, b: Solution) -> int:
    """Hamming distance over the decision-variable vectors."""
    keys_a = tuple(k for k, _ in a.assignment)
    keys_b = tuple(k for k, _ in b.assignment)
    if keys_a != keys_b:
        raise ValueError("solutions come from different problems")
    return sum(1 for (_, va), (_, vb) in zip(a.assignment, b.assignment) if va != vb)


def diversify(
    prob: CopProblem,
    best: Solution,
    n: int,
    gap: Fraction = Fraction(0),
    dthresh: int = 1,
    time_budget: float = 600.0,
    seed: int = 0,
) -> VariantPool:
    """Grow a pool of solutions within the optimality gap, each at least
    `dthresh` away from every other; the best solution is variant 0."""
    bound = math.floor((1 + gap) * best.objective)
    bounded = replace(prob, opt_bound=bound, gap=gap)
    pool = [best]
    deadline = time.monotonic() + time_budget
    reason = PoolReason.COMPLETE
    i = 0
    while len(pool) < n:
        i += 1
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            reason = PoolReason.TIMEOUT
            break
        result = solve_one(
            bounded,
            blocking=list(pool),
            dthresh=dthresh,
            time_budget=remaining,
            seed=seed * 100003 + i,
        )
        if result.status is SolveStatus.SAT:
            pool.append(result.solution)
        elif result.status is SolveStatus.UNSAT:
            reason = PoolReason.EXHAUSTED
            break
        else:
            reason = PoolReason.TIMEOUT
            break
    return VariantPool(
        solutions=pool,
        gap=gap,
        distance_threshold=dthresh,
        reason=reason,
        problem=bounded,
    )


# ----------------------------------------------------------------------
# security-unaware randomizing baseline
# ----------------------------------------------------------------------


def pick_base_mode(func: FunctionIR) -> Mode:
    types = infer_types(func)
    if extract_secret_path_sets(func, types):
        return Mode.TSC
    if any(label is SecurityLabel.RANDOM for _, label in func.inputs):
        return Mode.PSC
    return Mode.NONE


def naive_diversify(
    func: FunctionIR,
    profile: MachineProfile,
    n: int,
    seed: int = 0,
    base_mode: Optional[Mode] = None,
) -> VariantPool:
    """Random register renaming plus random NOP insertion on top of a
    secure base solution, with no knowledge of balancing or leak pairs.

    Renaming keeps live-range validity (variants stay functionally
    correct) and prefers recently freed registers the way a reuse-friendly
    allocator does, but it ignores transition hazards; NOP insertion
    ignores path balance.
    """
    mode = base_mode if base_mode is not None else pick_base_mode(func)
    analyzed = analyze(
        func,
        profile,
        balance="ebb" if mode is Mode.TSC else None,
        fix_mask_order=mode is Mode.PSC,
    )
    prob = build_problem(
        analyzed.function, analyzed.pairs, analyzed.psets, profile, mode=mode
    )
    base = solve_optimal(prob, time_budget=120.0, seed=seed)
    if base.solution is None:
        raise RuntimeError(f"no base solution: {base.status}")
    pool = [base.solution]
    seen = {base.solution.assignment}

    base_values = base.solution.as_dict()
    active = {
        op.index
        for op in prob.ops
        if not op.optional or base_values.get(("active", op.index))
    }
    roots = resolve_roots(prob, active)
    cycle = {op.index: base_values[("cycle", op.index)] for op in prob.ops}
    model = build_value_model(prob, active, cycle, roots)
    order = sorted(
        model.values, key=lambda v: (model.def_point[v][0], model.def_point[v][1], v)
    )
    inputs = prob.function.input_names()

    variant = 0
    while len(pool) < n:
        variant += 1
        if variant > 50 * n:
            break
        rng = random.Random(f"naive:{seed}:{variant}")
        values = dict(base_values)
        if not _naive_rename(prob, model, order, inputs, roots, values, rng):
            continue
        _naive_insert_nops(prob, active, values, rng)
        sol = make_solution(prob, values, seed=seed)
        if sol.assignment in seen:
            continue
        seen.add(sol.assignment)
        pool.append(sol)
    return VariantPool(
        solutions=pool,
        gap=None,
        distance_threshold=1,
        reason=PoolReason.COMPLETE if len(pool) == n else PoolReason.EXHAUSTED,
        problem=prob,
    )


_REUSE_WEIGHT = 5


def _naive_rename(prob, model, order, inputs, roots, values, rng) -> bool:
    nregs = prob.num_registers
    loc: dict[str, int] = {}
    for value in order:
        base_loc = values[("reg", value)]
        if value in inputs or base_loc >= nregs:
            loc[value] = base_loc
            continue
        db, dt = model.def_point[value]
        candidates = []
        for r in range(nregs):
            clash = False
            for other, rother in loc.items():
                if rother == r and _intervals_overlap(
                    model.intervals[value], model.intervals[other]
                ):
                    clash = True
                    break
            if not clash:
                candidates.append(r)
        if not candidates:
            return False
        weights = []
        for r in candidates:
            recent = False
            for other, rother in loc.items():
                if rother != r:
                    continue
                for b, s, e in model.intervals[other]:
                    if b == db and e <= dt and dt - e <= 2:
                        recent = True
            weights.append(_REUSE_WEIGHT if recent else 1)
        loc[value] = rng.choices(candidates, weights=weights, k=1)[0]
    for name in prob.function.temps:
        values[("reg", name)] = loc[roots[name]]
    return True


def _naive_insert_nops(prob, active, values, rng) -> None:
    for block in prob.function.blocks:
        if rng.random() >= 0.6:
            continue
        ops_here = [o.index for o in block.ops if o.index in active]
        if not ops_here:
            continue
        pivot = rng.choice(ops_here)
        k = rng.randint(1, 2)
        threshold = values[("cycle", pivot)]
        for idx in ops_here:
            if values[("cycle", idx)] >= threshold:
                values[("cycle", idx)] = values[("cycle", idx)] + k
