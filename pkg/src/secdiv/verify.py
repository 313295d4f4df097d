"""Independent verification oracles.

Everything here works on encoded machine programs and exhaustive (or
seeded-sample) input enumeration through the simulator; nothing is shared
with the constraint model, so these checks can veto the whole pipeline.

  * functional equivalence of two programs,
  * constant-resource checking: best- and worst-case cycle counts must
    coincide for every tested public input, with secrets and randoms
    enumerated exhaustively,
  * first-order power-leak checking: at every register write and memory
    bus update, the distribution of the transition value over uniform
    randoms must be identical for all secret values.

Exact enumeration at 8-bit width replaces statistical testing; there are
no tolerances to tune.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .machine import MachineProgram, run_batch
from .mir import SecurityLabel

# Fixed public probe values used when enumerating; callers may extend.
PUBLIC_PROBES = (0x00, 0xFF, 0x5A)

Policy = Sequence[tuple[str, SecurityLabel]]

_EXHAUSTIVE_LIMIT = 2  # inputs; beyond this, equivalence uses samples
_SAMPLES = 1000


def _full_grid(k: int) -> np.ndarray:
    """All 256**k input combinations, shape (k, 256**k)."""
    grids = np.meshgrid(*([np.arange(256, dtype=np.uint8)] * k), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids]) if k else np.zeros((0, 1), dtype=np.uint8)


# ----------------------------------------------------------------------
# functional equivalence
# ----------------------------------------------------------------------


@dataclass
class EquivalenceReport:
    pairs_tested: int
    mismatch: Optional[tuple[tuple[int, ...], int, int]] = None

    @property
    def ok(self) -> bool:
        return self.mismatch is None

    def lines(self) -> list[str]:
        if self.ok:
            return [f"equivalent\t{self.pairs_tested} inputs\t-"]
        inputs, ra, rb = self.mismatch
        return [f"mismatch\tinputs={inputs}\t{ra} != {rb}"]


def check_equivalence(
    a: MachineProgram, b: MachineProgram, seed: int = 0
) -> EquivalenceReport:
    """Compare return values on exhaustive 8-bit inputs (two inputs or
    fewer) or on seeded samples; reports the first mismatching input."""
    if a.num_inputs != b.num_inputs:
        raise ValueError("programs take different numbers of inputs")
    k = a.num_inputs
    if k <= _EXHAUSTIVE_LIMIT:
        inputs = _full_grid(k)
    else:
        rng = np.random.default_rng(seed)
        inputs = rng.integers(0, 256, size=(k, _SAMPLES), dtype=np.uint8)
    ra = run_batch(a, inputs, collect_transitions=False).returns
    rb = run_batch(b, inputs, collect_transitions=False).returns
    diff = np.nonzero(ra != rb)[0]
    if diff.size:
        j = int(diff[0])
        witness = tuple(int(inputs[i, j]) for i in range(k))
        return EquivalenceReport(
            pairs_tested=inputs.shape[1], mismatch=(witness, int(ra[j]), int(rb[j]))
        )
    return EquivalenceReport(pairs_tested=inputs.shape[1])


# ----------------------------------------------------------------------
# constant-resource checking
# ----------------------------------------------------------------------


@dataclass
class CrReport:
    # one row per tested public assignment: (assignment, bcet, wcet)
    per_public: list[tuple[tuple[int, ...], int, int]]
    # per secret branch: static cycle cost of each path in its set
    path_costs: list[tuple[int, dict[tuple[int, ...], int]]]

    @property
    def secure(self) -> bool:
        paths_ok = all(
            len(set(costs.values())) <= 1 for _, costs in self.path_costs
        )
        timing_ok = all(bcet == wcet for _, bcet, wcet in self.per_public)
        return paths_ok and timing_ok

    def lines(self) -> list[str]:
        out = []
        for assignment, bcet, wcet in self.per_public:
            verdict = "secure" if bcet == wcet else "insecure"
            out.append(f"{verdict}\tpublic={assignment}\tbcet={bcet} wcet={wcet}")
        for branch, costs in self.path_costs:
            rendered = " ".join(
                "->".join(map(str, p)) + f"={c}" for p, c in sorted(costs.items())
            )
            verdict = "secure" if len(set(costs.values())) <= 1 else "insecure"
            out.append(f"{verdict}\tbranch={branch}\t{rendered}")
        return out


def static_block_costs(program: MachineProgram) -> dict[int, int]:
    """Per-block cycle cost read off the encoded words (taken overheads
    excluded; they belong to edges)."""
    from .machine import PROFILES

    profile = PROFILES[program.profile_name]
    return {
        b: sum(profile.lat(ins.opcode) for ins in block)
        for b, block in enumerate(program.blocks)
    }


def static_path_cost(program: MachineProgram, path: Sequence[int]) -> int:
    from .machine import PROFILES, Opcode

    profile = PROFILES[program.profile_name]
    costs = static_block_costs(program)
    total = 0
    for i, b in enumerate(path):
        total += costs[b]
        if i + 1 < len(path):
            block = program.blocks[b]
            if block and block[-1].opcode in (Opcode.BEQ, Opcode.BNE):
                if block[-1].c == path[i + 1] and path[i + 1] != b + 1:
                    total += profile.taken_branch_overhead
    return total


def check_cr(
    program: MachineProgram,
    policy: Policy,
    psets: Iterable = (),
    public_inputs: Optional[Sequence[Sequence[int]]] = None,
) -> CrReport:
    """Exhaustive best-/worst-case execution time comparison.

    For every assignment of the public inputs, all secret and random
    values are enumerated and the program's exact cycle count is taken
    from the simulator: the verdict requires BCET = WCET everywhere, plus
    equal static costs along every path of each secret-branch path set.
    """
    names = [n for n, _ in policy]
    public_idx = [i for i, (_, lab) in enumerate(policy) if lab is SecurityLabel.PUBLIC]
    hidden_idx = [i for i in range(len(names)) if i not in public_idx]
    if public_inputs is None:
        public_inputs = list(itertools.product(PUBLIC_PROBES, repeat=len(public_idx)))

    per_public: list[tuple[tuple[int, ...], int, int]] = []
    for assignment in public_inputs:
        bcet, wcet = None, None
        for chunk in _hidden_chunks(len(hidden_idx)):
            lanes = chunk.shape[1]
            inputs = np.zeros((len(names), lanes), dtype=np.uint8)
            for pos, i in enumerate(public_idx):
                inputs[i] = assignment[pos]
            for pos, i in enumerate(hidden_idx):
                inputs[i] = chunk[pos]
            cycles = run_batch(program, inputs, collect_transitions=False).cycles
            lo, hi = int(cycles.min()), int(cycles.max())
            bcet = lo if bcet is None else min(bcet, lo)
            wcet = hi if wcet is None else max(wcet, hi)
        per_public.append((tuple(assignment), bcet, wcet))

    path_costs = []
    for pset in psets:
        costs = {tuple(p): static_path_cost(program, p) for p in pset.paths}
        path_costs.append((pset.branch_block, costs))
    return CrReport(per_public=per_public, path_costs=path_costs)


def _hidden_chunks(k: int, max_lanes: int = 1 << 16):
    """Yield the exhaustive 256**k grid in memory-bounded chunks."""
    if k == 0:
        yield np.zeros((0, 1), dtype=np.uint8)
        return
    if 256**k <= max_lanes:
        yield _full_grid(k)
        return
    rest = _full_grid(k - 1)
    for v in range(256):
        first = np.full(rest.shape[1], v, dtype=np.uint8)
        yield np.vstack([first[None, :], rest])


# ----------------------------------------------------------------------
# first-order power-leak checking
# ----------------------------------------------------------------------


@dataclass
class PscReport:
    # site -> "independent" or a witness pair of secret assignments
    verdicts: dict[tuple[int, str, int], str] = field(default_factory=dict)
    leaks: list[tuple[tuple[int, str, int], tuple[int, ...], tuple[int, ...]]] = field(
        default_factory=list
    )
    incomplete: bool = False
    reason: str = ""

    @property
    def secure(self) -> bool:
        return not self.leaks and not self.incomplete

    def lines(self) -> list[str]:
        out = []
        if self.incomplete:
            out.append(f"incomplete\t-\t{self.reason}")
        for site in sorted(self.verdicts):
            out.append(f"{self.verdicts[site]}\t{_site_str(site)}\t-")
        for site, s1, s2 in self.leaks:
            out.append(f"leak\t{_site_str(site)}\tsecrets {s1} vs {s2}")
        return out


def _site_str(site: tuple[int, str, int]) -> str:
    address, kind, index = site
    target = f"r{index}" if kind == "reg" else "bus"
    return f"0x{address:04x}:{target}"


_PSC_HIDDEN_LIMIT = 3


def check_psc(
    program: MachineProgram,
    policy: Policy,
    public_probes: Sequence[int] = PUBLIC_PROBES,
) -> PscReport:
    """Exact first-order leak check under the Hamming-distance model.

    For every leak site the full distribution of transition values over
    uniform randoms is compared across all secret values (publics fixed
    at the probe set).  Any difference in distribution, or in how often a
    site executes, is a leak.
    """
    names = [n for n, _ in policy]
    secret_idx = [i for i, (_, lab) in enumerate(policy) if lab is SecurityLabel.SECRET]
    random_idx = [i for i, (_, lab) in enumerate(policy) if lab is SecurityLabel.RANDOM]
    public_idx = [i for i, (_, lab) in enumerate(policy) if lab is SecurityLabel.PUBLIC]

    if len(secret_idx) + len(random_idx) > _PSC_HIDDEN_LIMIT:
        return PscReport(
            incomplete=True,
            reason=f"{len(secret_idx) + len(random_idx)} secret/random inputs "
            f"exceed the exhaustive enumeration budget ({_PSC_HIDDEN_LIMIT})",
        )

    report = PscReport()
    if not secret_idx:
        return report  # nothing to compare across

    random_grid = _full_grid(len(random_idx))
    lanes = random_grid.shape[1]
    secret_grid = _full_grid(len(secret_idx))

    all_sites: set[tuple[int, str, int]] = set()
    for public in itertools.product(public_probes, repeat=len(public_idx)):
        reference: Optional[dict] = None
        ref_secret: Optional[tuple[int, ...]] = None
        for j in range(secret_grid.shape[1]):
            secret = tuple(int(secret_grid[i, j]) for i in range(len(secret_idx)))
            inputs = np.zeros((len(names), lanes), dtype=np.uint8)
            for pos, i in enumerate(public_idx):
                inputs[i] = public[pos]
            for pos, i in enumerate(secret_idx):
                inputs[i] = secret[pos]
            for pos, i in enumerate(random_idx):
                inputs[i] = random_grid[pos]
            result = run_batch(program, inputs)
            dist = {
                site: (count, hist.tobytes())
                for site, (count, hist) in result.transitions.items()
            }
            all_sites.update(dist)
            if reference is None:
                reference, ref_secret = dist, secret
                continue
            if dist.keys() != reference.keys():
                for site in sorted(set(dist) ^ set(reference)):
                    report.leaks.append((site, ref_secret, secret))
                continue
            for site in sorted(dist):
                if dist[site] != reference[site]:
                    report.leaks.append((site, ref_secret, secret))

    leak_sites = {site for site, _, _ in report.leaks}
    for site in all_sites:
        report.verdicts[site] = "leak" if site in leak_sites else "independent"
    # keep one witness per site
    seen: set = set()
    unique = []
    for site, s1, s2 in report.leaks:
        if site not in seen:
            seen.add(site)
            unique.append((site, s1, s2))
    report.leaks = unique
    return report
