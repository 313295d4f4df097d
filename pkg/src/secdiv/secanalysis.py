"""Security analysis: policy type inference, secret-path extraction,
branch balancing, masking-order repair, and leak-pair generation.

The inference tracks, per value, which secret and random inputs it may
depend on and which randoms dominate it (mask it to a uniform value).
Values built purely from XORs additionally carry their exact parity set,
which is what makes mask cancellation ((sec ^ mask) ^ mask = sec) visible.
Anything that passes through a non-linear op (ADD/SUB/AND/OR) becomes
opaque and is treated conservatively.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

from .machine import MachineProfile, TIGHT8
from .mir import (
    Block,
    BlockGraph,
    FunctionIR,
    IRValidationError,
    Opcode,
    Operation,
    SecurityLabel,
    build_cfg,
    parse_function,
    serialize_function,
)


@dataclass(frozen=True)
class InferredType:
    label: SecurityLabel
    dominant_randoms: frozenset[str] = frozenset()
    secret_support: frozenset[str] = frozenset()
    random_support: frozenset[str] = frozenset()
    # exact xor-parity set over input names (publics included); None once
    # the value has passed through a non-linear op
    parity: Optional[frozenset[str]] = None


def _labels_of(func: FunctionIR) -> dict[str, SecurityLabel]:
    return {name: label for name, label in func.inputs}


def _from_parity(parity: frozenset[str], labels: dict[str, SecurityLabel]) -> InferredType:
    secrets = frozenset(n for n in parity if labels.get(n) is SecurityLabel.SECRET)
    randoms = frozenset(n for n in parity if labels.get(n) is SecurityLabel.RANDOM)
    if randoms:
        label = SecurityLabel.RANDOM
    elif secrets:
        label = SecurityLabel.SECRET
    else:
        label = SecurityLabel.PUBLIC
    return InferredType(
        label=label,
        dominant_randoms=randoms,
        secret_support=secrets,
        random_support=randoms,
        parity=parity,
    )


CONST_TYPE = InferredType(label=SecurityLabel.PUBLIC, parity=frozenset())


def input_type(name: str, label: SecurityLabel) -> InferredType:
    if label is SecurityLabel.RANDOM:
        return InferredType(
            label=label,
            dominant_randoms=frozenset({name}),
            random_support=frozenset({name}),
            parity=frozenset({name}),
        )
    if label is SecurityLabel.SECRET:
        return InferredType(label=label, secret_support=frozenset({name}), parity=frozenset({name}))
    return InferredType(label=label, parity=frozenset({name}))


def xor_type(a: InferredType, b: InferredType, labels: dict[str, SecurityLabel]) -> InferredType:
    """Type of a ^ b; exact on parity values, rule-based otherwise."""
    if a.parity is not None and b.parity is not None:
        return _from_parity(a.parity ^ b.parity, labels)
    dominant = frozenset(
        {r for r in a.dominant_randoms if r not in b.random_support}
        | {r for r in b.dominant_randoms if r not in a.random_support}
    )
    secrets = a.secret_support | b.secret_support
    randoms = a.random_support | b.random_support
    if dominant:
        label = SecurityLabel.RANDOM
    elif secrets:
        label = SecurityLabel.SECRET
    else:
        label = SecurityLabel.PUBLIC
    return InferredType(
        label=label,
        dominant_randoms=dominant,
        secret_support=secrets,
        random_support=randoms,
        parity=None,
    )


def _nonlinear_type(a: InferredType, b: InferredType) -> InferredType:
    secrets = a.secret_support | b.secret_support
    randoms = a.random_support | b.random_support
    label = SecurityLabel.SECRET if secrets else SecurityLabel.PUBLIC
    return InferredType(
        label=label,
        secret_support=secrets,
        random_support=randoms,
        parity=None,
    )


def _join(types: list[InferredType], labels: dict[str, SecurityLabel]) -> InferredType:
    """Merge the possible types of a path-dependent value (loads)."""
    if len(types) == 1:
        return types[0]
    parities = {t.parity for t in types}
    if len(parities) == 1 and None not in parities:
        return _from_parity(next(iter(parities)), labels)
    dominant = frozenset.intersection(*(t.dominant_randoms for t in types))
    secrets = frozenset().union(*(t.secret_support for t in types))
    randoms = frozenset().union(*(t.random_support for t in types))
    if dominant:
        label = SecurityLabel.RANDOM
    elif secrets:
        label = SecurityLabel.SECRET
    else:
        label = SecurityLabel.PUBLIC
    return InferredType(
        label=label,
        dominant_randoms=dominant,
        secret_support=secrets,
        random_support=randoms,
        parity=None,
    )


def secret_dependent(t: InferredType) -> bool:
    return t.label is SecurityLabel.SECRET


def pair_is_hazard(a: InferredType, b: InferredType, labels: dict[str, SecurityLabel]) -> bool:
    """True when the transition value a ^ b may carry secret information."""
    return secret_dependent(xor_type(a, b, labels))


# ----------------------------------------------------------------------
# type inference
# ----------------------------------------------------------------------


def infer_types(func: FunctionIR) -> dict[str, InferredType]:
    """Propagate policy labels to every temp (single forward pass)."""
    labels = _labels_of(func)
    types: dict[str, InferredType] = {
        name: input_type(name, label) for name, label in func.inputs
    }

    # store sites per slot, in program order, for load-type joins
    stores: dict[str, list[tuple[int, str]]] = {s: [] for s in func.slots}

    for block in func.blocks:
        for op in block.ops:
            if op.opcode is Opcode.ST:
                stores[op.uses[0]].append((op.index, op.uses[1]))
                continue
            if not op.defs:
                continue
            dest = op.defs[0]
            if op.opcode is Opcode.LI:
                types[dest] = CONST_TYPE
            elif op.opcode in (Opcode.MOV, Opcode.COPY):
                types[dest] = _use_type(types, op.uses[0], op)
            elif op.opcode is Opcode.XOR:
                types[dest] = xor_type(
                    _use_type(types, op.uses[0], op), _use_type(types, op.uses[1], op), labels
                )
            elif op.opcode in (Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR):
                types[dest] = _nonlinear_type(
                    _use_type(types, op.uses[0], op), _use_type(types, op.uses[1], op)
                )
            elif op.opcode is Opcode.LD:
                types[dest] = _load_type(func, op, stores, types, labels)
            else:
                raise IRValidationError(f"op {op.index} ({op.opcode.value}) defines a temp")
    return types


def _use_type(types: dict[str, InferredType], use, op: Operation) -> InferredType:
    if isinstance(use, int):
        return CONST_TYPE
    if use not in types:
        raise IRValidationError(f"use of undefined temp {use!r} in op {op.index}")
    return types[use]


def _load_type(func, op, stores, types, labels) -> InferredType:
    """Join over stores that may reach this load, plus the zero initial
    value when some path reaches the load without any store."""
    slot = op.uses[0]
    load_block = func.block_of_op(op.index)
    load_pos = _pos_in_block(func, op.index)
    candidates: list[InferredType] = []
    store_blocks = []
    for st_index, temp in stores[slot]:
        st_block = func.block_of_op(st_index)
        st_pos = _pos_in_block(func, st_index)
        if st_block == load_block and st_pos < load_pos:
            candidates.append(types[temp])
            store_blocks.append(st_block)
        elif st_block != load_block and _reaches(func, st_block, load_block):
            candidates.append(types[temp])
            store_blocks.append(st_block)
    if _path_without_store(func, load_block, set(store_blocks), slot, load_pos):
        candidates.append(CONST_TYPE)
    if not candidates:
        return CONST_TYPE
    return _join(candidates, labels)


def _pos_in_block(func: FunctionIR, op_index: int) -> int:
    block = func.blocks[func.block_of_op(op_index)]
    for pos, op in enumerate(block.ops):
        if op.index == op_index:
            return pos
    raise KeyError(op_index)


def _reaches(func: FunctionIR, src: int, dst: int) -> bool:
    seen = {src}
    frontier = [src]
    while frontier:
        b = frontier.pop()
        for s in func.successors(b):
            if s == dst:
                return True
            if s not in seen:
                seen.add(s)
                frontier.append(s)
    return False


def _path_without_store(func, load_block, store_blocks, slot, load_pos) -> bool:
    """DFS from entry: can the load execute before any store to the slot?"""
    block = func.blocks[load_block]
    local_store = any(
        op.opcode is Opcode.ST and op.uses[0] == slot and pos < load_pos
        for pos, op in enumerate(block.ops)
    )

    def blocked(b: int) -> bool:
        if b == load_block:
            return local_store
        return any(op.opcode is Opcode.ST and op.uses[0] == slot for op in func.blocks[b].ops)

    stack = [0]
    seen = set()
    while stack:
        b = stack.pop()
        if b in seen:
            continue
        seen.add(b)
        if b == load_block and not local_store:
            return True
        if blocked(b):
            continue
        stack.extend(func.successors(b))
    return False


# ----------------------------------------------------------------------
# secret-dependent paths
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SecretPathSet:
    branch_block: int
    paths: frozenset[tuple[int, ...]]


class CycleError(Exception):
    pass


def get_paths(n: int, graph: BlockGraph) -> frozenset[tuple[int, ...]]:
    """All maximal paths from block n to a common sink or to the exits.

    Paths are explored with a priority queue keyed by the ordinal of the
    path's last block (smaller first), so all open paths advance roughly
    in block order.  As soon as every open and finished path ends at the
    same block, that block is the common sink and the search stops early;
    otherwise paths run to the exit blocks.
    """
    counter = itertools.count()
    heap: list[tuple[int, int, list[int]]] = []

    def push(path: list[int]) -> None:
        heapq.heappush(heap, (path[-1], next(counter), path))

    push([n])
    finished: list[list[int]] = []

    def all_done() -> Optional[frozenset[tuple[int, ...]]]:
        lasts = {p[-1] for p in finished} | {p[-1] for _, _, p in heap}
        if len(lasts) == 1:
            every = [tuple(p) for p in finished] + [tuple(p) for _, _, p in heap]
            return frozenset(every)
        return None

    while heap:
        _, _, path = heapq.heappop(heap)
        head = path[-1]
        succ = graph.successors(head)
        if not succ:
            finished.append(path)
        elif len(succ) == 1:
            (s,) = succ
            if s in path:
                raise CycleError(f"cycle through block {s}")
            path.append(s)
            push(path)
            done = all_done()
            if done is not None:
                return done
        else:
            for s in succ:
                if s in path:
                    raise CycleError(f"cycle through block {s}")
                push(path + [s])
    return frozenset(tuple(p) for p in finished)


def branch_condition_type(
    func: FunctionIR, block: Block, types: dict[str, InferredType]
) -> Optional[InferredType]:
    term = block.terminator
    if term is None or term.opcode not in (Opcode.BEQ, Opcode.BNE):
        return None
    labels = _labels_of(func)
    return xor_type(types[term.uses[0]], types[term.uses[1]], labels)


def extract_secret_path_sets(
    func: FunctionIR, types: dict[str, InferredType]
) -> list[SecretPathSet]:
    graph = build_cfg(func)
    sets: list[SecretPathSet] = []
    for block in func.blocks:
        cond = branch_condition_type(func, block, types)
        if cond is not None and secret_dependent(cond):
            sets.append(SecretPathSet(branch_block=block.index, paths=get_paths(block.index, graph)))
    return sets


# ----------------------------------------------------------------------
# balancing transformations
# ----------------------------------------------------------------------


@dataclass
class BalanceResult:
    function: FunctionIR
    changed: bool
    note: str = ""
    new_block: Optional[int] = None


class BalanceError(Exception):
    pass


def _clone_function(func: FunctionIR) -> FunctionIR:
    return parse_function(serialize_function(func))


def _nop_budget(func: FunctionIR, pset: SecretPathSet, short, profile: MachineProfile) -> int:
    """Upper bound on the padding the new block may need: the worst-case
    cost of the blocks exclusive to the sibling paths, plus the jump the
    insertion may add and one taken-branch overhead of slack."""
    shared = set(short)
    worst = 0
    for path in pset.paths:
        cost = sum(
            profile.lat(op.opcode)
            for b in path
            if b not in shared
            for op in func.blocks[b].ops
        )
        worst = max(worst, cost)
    return worst + profile.lat(Opcode.B) + profile.taken_branch_overhead + 3


def _insert_block(func: FunctionIR, src: int, old_target: int, ops: list[Operation]) -> FunctionIR:
    """Insert a new block carrying `ops` on the edge src -> old_target.

    The new block takes the id of the old target and falls through to it;
    later blocks shift by one.  Fall-through edges of other blocks that
    would now land in the new block are made explicit with a `b`.
    """
    new_f = _clone_function(func)
    pos = old_target

    # blocks whose implicit fall-through must become explicit after the shift
    needs_jump = []
    for block in new_f.blocks:
        if block.index == src:
            continue
        if block.terminator is None and block.index + 1 == pos and block.index + 1 < len(new_f.blocks):
            needs_jump.append(block.index)
        elif block.terminator is not None and block.terminator.opcode in (Opcode.BEQ, Opcode.BNE):
            if block.index + 1 == pos:
                raise BalanceError(
                    f"cannot insert on edge {src}->{old_target}: block {block.index} "
                    "falls through a conditional branch into the insertion point"
                )

    def remap(b: int) -> int:
        return b + 1 if b >= pos else b

    for block in new_f.blocks:
        new_ops = []
        for op in block.ops:
            if op.opcode is Opcode.B:
                new_ops.append(replace(op, uses=(remap(op.uses[0]),)))
            elif op.opcode in (Opcode.BEQ, Opcode.BNE):
                new_ops.append(replace(op, uses=(op.uses[0], op.uses[1], remap(op.uses[2]))))
            else:
                new_ops.append(op)
        block.ops = new_ops

    for idx in needs_jump:
        new_f.blocks[idx].ops.append(
            Operation(index=-1, opcode=Opcode.B, defs=(), uses=(remap(idx + 1),))
        )

    from fractions import Fraction

    new_block = Block(index=pos, weight=Fraction(1), ops=list(ops))
    new_f.blocks.insert(pos, new_block)
    for i, block in enumerate(new_f.blocks):
        block.index = i

    # redirect the balanced edge when it was the taken edge of src
    src_block = new_f.blocks[src]
    term = src_block.terminator
    if term is not None and term.opcode in (Opcode.BEQ, Opcode.BNE):
        if term.uses[2] == remap(old_target) and old_target != src + 1:
            src_block.ops[-1] = replace(term, uses=(term.uses[0], term.uses[1], pos))

    new_f.renumber_ops()
    new_f.temps = {}
    from .mir import _collect_temps, validate_function  # late import, module-internal

    _collect_temps(new_f)
    validate_function(new_f)
    return new_f


def balance_ebb(
    func: FunctionIR, pset: SecretPathSet, profile: MachineProfile = TIGHT8
) -> BalanceResult:
    """Add an empty block of optional NOPs on the shortest path of `pset`.

    How many of the NOPs become active is decided later by the solver;
    the budget here is the worst-case cost of the sibling paths.
    """
    paths = sorted(pset.paths, key=lambda p: (len(p), p))
    if len(paths) < 2 or len(paths[0]) == len(paths[-1]):
        return BalanceResult(function=func, changed=False, note="already balanced")
    short = paths[0]
    budget = _nop_budget(func, pset, short, profile)
    nops = [
        Operation(index=-1, opcode=Opcode.NOP, defs=(), uses=(), optional=True)
        for _ in range(budget)
    ]
    new_f = _insert_block(func, short[0], short[1], nops)
    return BalanceResult(function=new_f, changed=True, new_block=short[1], note="ebb")


def balance_cbb(func: FunctionIR, pset: SecretPathSet) -> BalanceResult:
    """Balance a one-block arm by copying it with dead definitions."""
    paths = sorted(pset.paths, key=lambda p: (len(p), p))
    if len(paths) != 2:
        raise BalanceError("copy balancing needs exactly two paths")
    short, long_ = paths
    if len(short) == len(long_):
        return BalanceResult(function=func, changed=False, note="already balanced")
    if len(long_) != 3 or len(short) != 2:
        raise BalanceError("arm longer than one block: use the empty-block transformation")
    arm = long_[1]
    arm_block = func.blocks[arm]
    for op in arm_block.body:
        if op.opcode is Opcode.ST:
            raise BalanceError(
                "arm stores to memory: copying it would clobber the slot, "
                "use the empty-block transformation"
            )
    rename: dict[str, str] = {}
    copies: list[Operation] = []
    existing = set(func.temps)
    for op in arm_block.body:
        new_uses = tuple(rename.get(u, u) if isinstance(u, str) else u for u in op.uses)
        new_defs = []
        for d in op.defs:
            fresh = f"{d}_dead"
            n = 0
            while fresh in existing:
                n += 1
                fresh = f"{d}_dead{n}"
            existing.add(fresh)
            rename[d] = fresh
            new_defs.append(fresh)
        copies.append(replace(op, defs=tuple(new_defs), uses=new_uses, index=-1))
    new_f = _insert_block(func, short[0], short[1], copies)
    return BalanceResult(function=new_f, changed=True, new_block=short[1], note="cbb")


def apply_balancing(
    func: FunctionIR, profile: MachineProfile = TIGHT8, method: str = "ebb"
) -> tuple[FunctionIR, list[str]]:
    """Balance every secret-dependent branch; returns (function, notes)."""
    notes: list[str] = []
    for _ in range(16):  # bound: one insertion per secret branch
        types = infer_types(func)
        psets = extract_secret_path_sets(func, types)
        unbalanced = [
            s for s in psets if len({len(p) for p in s.paths}) > 1
        ]
        if not unbalanced:
            return func, notes
        pset = unbalanced[0]
        if method == "cbb":
            try:
                result = balance_cbb(func, pset)
            except BalanceError as exc:
                notes.append(f"block {pset.branch_block}: {exc}; fell back to ebb")
                result = balance_ebb(func, pset, profile)
        else:
            result = balance_ebb(func, pset, profile)
        if not result.changed:
            return func, notes
        notes.append(f"block {pset.branch_block}: inserted block {result.new_block} ({result.note})")
        func = result.function
    raise BalanceError("balancing did not converge")


# ----------------------------------------------------------------------
# masking operand-order restoration
# ----------------------------------------------------------------------


@dataclass
class MaskOrderResult:
    function: FunctionIR
    changed: bool
    residual: tuple[str, ...] = ()


def _use_counts(func: FunctionIR) -> dict[str, int]:
    counts: dict[str, int] = {}
    for op in func.all_ops():
        for u in op.temp_uses():
            counts[u] = counts.get(u, 0) + 1
    return counts


def _xor_chains(func: FunctionIR) -> list[list[Operation]]:
    """Maximal single-use XOR chains, each a list of ops in program order."""
    counts = _use_counts(func)
    xor_def: dict[str, Operation] = {}
    for op in func.all_ops():
        if op.opcode is Opcode.XOR and op.defs:
            xor_def[op.defs[0]] = op

    consumed: set[int] = set()
    chains: list[list[Operation]] = []
    for op in sorted(xor_def.values(), key=lambda o: -o.index):
        if op.index in consumed:
            continue
        chain = [op]
        frontier = list(op.uses)
        while frontier:
            use = frontier.pop()
            if isinstance(use, str) and use in xor_def and counts.get(use, 0) == 1:
                inner = xor_def[use]
                if inner.index not in consumed and inner not in chain:
                    chain.append(inner)
                    frontier.extend(inner.uses)
        if chain:
            chain.sort(key=lambda o: o.index)
            consumed.update(o.index for o in chain)
            chains.append(chain)
    chains.sort(key=lambda c: c[0].index)
    return chains


def restore_mask_order(
    func: FunctionIR, types: dict[str, InferredType]
) -> MaskOrderResult:
    """Reassociate XOR chains so no intermediate value is secret-typed.

    Compiler-style reorderings such as (pub ^ key) ^ mask leak the
    intermediate pub ^ key; XOR associativity lets us compute
    (key ^ mask) ^ pub instead without changing the result.  Chains for
    which no ordering avoids a secret intermediate are reported back.
    """
    labels = _labels_of(func)
    func = _clone_function(func)
    changed = False
    residual: list[str] = []

    for _ in range(8):
        types = infer_types(func)
        chains = _xor_chains(func)
        fixed_any = False
        for chain in chains:
            defs = [op.defs[0] for op in chain]
            if not any(types[d].label is SecurityLabel.SECRET for d in defs):
                continue
            order = _find_safe_order(func, chain, labels)
            if order is None:
                residual.extend(d for d in defs if types[d].label is SecurityLabel.SECRET)
                continue
            _rewrite_chain(func, chain, order)
            changed = True
            fixed_any = True
        if not fixed_any:
            break
        residual = []

    types = infer_types(func)
    final_residual = tuple(
        sorted(
            {
                op.defs[0]
                for chain in _xor_chains(func)
                for op in chain
                if types[op.defs[0]].label is SecurityLabel.SECRET
            }
        )
    )
    return MaskOrderResult(function=func, changed=changed, residual=final_residual)


def _chain_leaves(chain: list[Operation]) -> list:
    internal = {op.defs[0] for op in chain}
    leaves = []
    for op in chain:
        for u in op.uses:
            if not (isinstance(u, str) and u in internal):
                leaves.append(u)
    return leaves


def _def_order_key(func: FunctionIR, use) -> int:
    if isinstance(use, int):
        return -1
    site = func.def_site(use)
    return -1 if site is None else site


def _find_safe_order(func, chain, labels) -> Optional[list]:
    """First leaf permutation whose every XOR prefix is non-secret."""
    leaves = _chain_leaves(chain)
    types = infer_types(func)
    op_sites = [op.index for op in sorted(chain, key=lambda o: o.index)]

    def leaf_type(use) -> InferredType:
        if isinstance(use, int):
            return CONST_TYPE
        return types[use]

    def valid(order) -> bool:
        # leaf i is consumed by chain op max(1, i) - 1; it must already
        # be defined at that point
        acc = leaf_type(order[0])
        for i in range(1, len(order)):
            site = op_sites[i - 1]
            for use in (order[i],) if i > 1 else (order[0], order[1]):
                if _def_order_key(func, use) >= site:
                    return False
            acc = xor_type(acc, leaf_type(order[i]), labels)
            if acc.label is SecurityLabel.SECRET:
                return False
        return True

    ordered = sorted(leaves, key=lambda u: (_def_order_key(func, u), str(u)))
    original = leaves
    if valid(original):
        return original
    for perm in itertools.permutations(ordered):
        if valid(list(perm)):
            return list(perm)
    return None


def _rewrite_chain(func: FunctionIR, chain: list[Operation], order: list) -> None:
    chain = sorted(chain, key=lambda o: o.index)
    prev_def = None
    for i, op in enumerate(chain):
        if i == 0:
            uses = (order[0], order[1])
        else:
            uses = (prev_def, order[i + 1])
        prev_def = op.defs[0]
        block = func.blocks[func.block_of_op(op.index)]
        for pos, existing in enumerate(block.ops):
            if existing.index == op.index:
                block.ops[pos] = replace(existing, uses=uses)
                break


# ----------------------------------------------------------------------
# leak pairs
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class LeakPairSets:
    rpairs: frozenset[tuple[str, str]]
    mpairs: frozenset[tuple[int, int]]
    # temps whose value is secret on its own: they conflict with any
    # uncorrelated previous content (e.g. a zero-initialized register)
    hazard_temps: frozenset[str] = frozenset()


def gen_leak_pairs(func: FunctionIR, types: dict[str, InferredType]) -> LeakPairSets:
    """All temp pairs (and memory-op pairs) whose combined transition
    value is secret-dependent under the Hamming-distance model."""
    labels = _labels_of(func)
    names = sorted(types)
    rpairs = set()
    for i, t1 in enumerate(names):
        for t2 in names[i + 1 :]:
            if pair_is_hazard(types[t1], types[t2], labels):
                rpairs.add((t1, t2))

    mem_ops = [
        op for op in func.all_ops() if op.opcode in (Opcode.LD, Opcode.ST)
    ]
    mpairs = set()
    for i, o1 in enumerate(mem_ops):
        for o2 in mem_ops[i + 1 :]:
            d1, d2 = _mem_data_temp(o1), _mem_data_temp(o2)
            if pair_is_hazard(types[d1], types[d2], labels):
                mpairs.add((o1.index, o2.index))

    hazards = frozenset(
        name for name in names if types[name].label is SecurityLabel.SECRET
    )
    return LeakPairSets(
        rpairs=frozenset(rpairs), mpairs=frozenset(mpairs), hazard_temps=hazards
    )


def _mem_data_temp(op: Operation) -> str:
    return op.uses[1] if op.opcode is Opcode.ST else op.defs[0]


# ----------------------------------------------------------------------
# analysis bundle and report
# ----------------------------------------------------------------------


@dataclass
class AnalyzedFunction:
    function: FunctionIR
    types: dict[str, InferredType]
    psets: list[SecretPathSet]
    pairs: LeakPairSets
    notes: list[str] = field(default_factory=list)


def analyze(
    func: FunctionIR,
    profile: MachineProfile = TIGHT8,
    balance: Optional[str] = None,
    fix_mask_order: bool = False,
) -> AnalyzedFunction:
    """Run the full analysis stage, optionally applying transformations."""
    notes: list[str] = []
    if fix_mask_order:
        result = restore_mask_order(func, infer_types(func))
        func = result.function
        if result.changed:
            notes.append("reassociated xor chains to restore masking order")
        if result.residual:
            notes.append("residual secret intermediates: " + ", ".join(result.residual))
    if balance:
        func, balance_notes = apply_balancing(func, profile, method=balance)
        notes.extend(balance_notes)
    types = infer_types(func)
    psets = extract_secret_path_sets(func, types)
    pairs = gen_leak_pairs(func, types)
    return AnalyzedFunction(function=func, types=types, psets=psets, pairs=pairs, notes=notes)


def emit_analysis(analyzed: AnalyzedFunction) -> str:
    """Deterministic text dump of the analysis results."""
    func = analyzed.function
    out = [f"function {func.name}"]
    out.append("types:")
    for name in sorted(analyzed.types):
        t = analyzed.types[name]
        dom = ",".join(sorted(t.dominant_randoms)) or "-"
        sec = ",".join(sorted(t.secret_support)) or "-"
        rnd = ",".join(sorted(t.random_support)) or "-"
        out.append(f"  {name}\t{t.label.value}\tdom={dom}\tsec={sec}\trand={rnd}")
    out.append("secret path sets:")
    if not analyzed.psets:
        out.append("  (none)")
    for pset in analyzed.psets:
        paths = " ".join("->".join(map(str, p)) for p in sorted(pset.paths))
        out.append(f"  branch block {pset.branch_block}: {paths}")
    out.append("register transition conflicts:")
    if not analyzed.pairs.rpairs:
        out.append("  (none)")
    for t1, t2 in sorted(analyzed.pairs.rpairs):
        out.append(f"  ({t1}, {t2})")
    out.append("memory order conflicts:")
    if not analyzed.pairs.mpairs:
        out.append("  (none)")
    for o1, o2 in sorted(analyzed.pairs.mpairs):
        out.append(f"  (op {o1}, op {o2})")
    if analyzed.pairs.hazard_temps:
        out.append("secret-valued temps: " + ", ".join(sorted(analyzed.pairs.hazard_temps)))
    for note in analyzed.notes:
        out.append(f"note: {note}")
    return "\n".join(out) + "\n"
