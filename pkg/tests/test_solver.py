from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bruteforce import brute_optimal
from conftest import load
from secdiv.copmodel import Mode, build_problem, check_solution
from secdiv.machine import TIGHT8
from secdiv.mir import parse_function
from secdiv.secanalysis import analyze
from secdiv.solver import (
    PoolReason,
    SolveStatus,
    distance,
    diversify,
    naive_diversify,
    pick_base_mode,
    solve_one,
    solve_optimal,
)


def _problem(name: str, mode: Mode, profile=TIGHT8, nop_budget: int = 3):
    func = load(name)
    analyzed = analyze(
        func,
        profile,
        balance="ebb" if mode is Mode.TSC else None,
        fix_mask_order=mode is Mode.PSC,
    )
    return build_problem(
        analyzed.function,
        analyzed.pairs,
        analyzed.psets,
        profile,
        mode=mode,
        nop_budget=nop_budget,
    )


@pytest.mark.parametrize("mode", [Mode.NONE, Mode.TSC, Mode.PSC])
def test_masked_xor_optimum_matches_bruteforce(mode):
    prob = _problem("masked_xor", mode)
    result = solve_optimal(prob, time_budget=60)
    assert result.status is SolveStatus.OPTIMAL
    assert result.solution.objective == brute_optimal(prob)


def test_psc_optimum_not_below_base():
    none = solve_optimal(_problem("masked_xor", Mode.NONE), time_budget=30)
    psc = solve_optimal(_problem("masked_xor", Mode.PSC), time_budget=30)
    assert psc.solution.objective >= none.solution.objective


def test_check_bit_tsc_strictly_costlier():
    none = solve_optimal(_problem("check_bit", Mode.NONE), time_budget=30)
    tsc = solve_optimal(_problem("check_bit", Mode.TSC), time_budget=60)
    assert tsc.solution.objective > none.solution.objective


def test_solver_output_is_checker_clean():
    for name, mode in [
        ("check_bit", Mode.TSC),
        ("masked_chain", Mode.PSC),
        ("two_branches", Mode.TSC),
    ]:
        prob = _problem(name, mode)
        result = solve_optimal(prob, time_budget=60)
        assert result.status is SolveStatus.OPTIMAL
        assert check_solution(result.solution, prob) == []


def test_unsat_names_a_family():
    # two stores whose data XOR is the secret and one load back: every
    # bus order puts the hazardous pair adjacent
    text = (
        "func f (k:secret, m:random)\n"
        "block 0\n"
        "  mk = xor k, m\n"
        "  st s1, mk\n"
        "  st s2, m\n"
        "  r = ld s1\n"
        "  ret r\n"
    )
    func = parse_function(text)
    analyzed = analyze(func, TIGHT8)
    prob = build_problem(
        analyzed.function, analyzed.pairs, analyzed.psets, TIGHT8, mode=Mode.PSC
    )
    result = solve_optimal(prob, time_budget=30)
    assert result.status is SolveStatus.UNSAT
    assert result.failing_family == "mre-conflict"


# ----------------------------------------------------------------------
# distance
# ----------------------------------------------------------------------


def test_distance_zero_on_self():
    prob = _problem("masked_xor", Mode.NONE)
    sol = solve_optimal(prob, time_budget=10).solution
    assert distance(sol, sol) == 0


def test_distance_single_difference():
    prob = _problem("straightline", Mode.NONE)
    sol = solve_optimal(prob, time_budget=10).solution
    values = sol.as_dict()
    current = values[("reg", "z")]
    values[("reg", "z")] = current + 1 if current + 1 < 8 else current - 1
    from secdiv.copmodel import make_solution

    other = make_solution(prob, values)
    assert distance(sol, other) == 1


def test_distance_mismatched_problems_rejected():
    a = solve_optimal(_problem("masked_xor", Mode.NONE), time_budget=10).solution
    b = solve_optimal(_problem("straightline", Mode.NONE), time_budget=10).solution
    with pytest.raises(ValueError, match="different problems"):
        distance(a, b)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**30), st.integers(0, 2**30))
def test_distance_symmetry(seed_a, seed_b):
    prob = _problem("masked_xor", Mode.NONE)
    best = solve_optimal(prob, time_budget=10).solution
    sa = solve_one(prob, blocking=[best], seed=seed_a, time_budget=10).solution
    sb = solve_one(prob, blocking=[best], seed=seed_b, time_budget=10).solution
    assert distance(sa, sb) == distance(sb, sa)
    assert distance(sa, sb) >= 0


# ----------------------------------------------------------------------
# diversification
# ----------------------------------------------------------------------


def test_two_solution_problem_exhausts():
    # a single delayed return: with a one-cycle budget there are exactly
    # two schedules, so a 200-variant request must stop at 2
    func = load("minimal")
    analyzed = analyze(func, TIGHT8)
    prob = build_problem(
        analyzed.function, analyzed.pairs, analyzed.psets, TIGHT8, nop_budget=1
    )
    best = solve_optimal(prob, time_budget=10).solution
    pool = diversify(prob, best, n=200, gap=Fraction(1), time_budget=30, seed=0)
    assert len(pool.solutions) == 2
    assert pool.reason is PoolReason.EXHAUSTED


def test_pool_contains_best_first():
    prob = _problem("masked_xor", Mode.PSC)
    best = solve_optimal(prob, time_budget=10).solution
    pool = diversify(prob, best, n=5, gap=Fraction(1, 10), time_budget=30, seed=2)
    assert pool.solutions[0] == best


def test_pool_respects_gap_bound_and_distance():
    prob = _problem("check_bit", Mode.TSC)
    best = solve_optimal(prob, time_budget=30).solution
    pool = diversify(prob, best, n=12, gap=Fraction(1, 10), dthresh=2, time_budget=60, seed=1)
    bound = (1 + Fraction(1, 10)) * best.objective
    for sol in pool.solutions:
        assert sol.objective <= bound
        assert check_solution(sol, pool.problem) == []
    for i, a in enumerate(pool.solutions):
        for b in pool.solutions[i + 1 :]:
            assert distance(a, b) >= 2


def test_wider_gap_no_smaller_pool():
    prob = _problem("masked_xor", Mode.PSC)
    best = solve_optimal(prob, time_budget=10).solution
    tight = diversify(prob, best, n=40, gap=Fraction(0), time_budget=60, seed=3)
    wide = diversify(prob, best, n=40, gap=Fraction(1, 10), time_budget=60, seed=3)
    assert len(wide.solutions) >= len(tight.solutions)


def test_diversify_reproducible():
    prob = _problem("masked_xor", Mode.PSC)
    best = solve_optimal(prob, time_budget=10).solution
    p1 = diversify(prob, best, n=8, gap=Fraction(1, 10), time_budget=30, seed=9)
    p2 = diversify(prob, best, n=8, gap=Fraction(1, 10), time_budget=30, seed=9)
    assert [s.assignment for s in p1.solutions] == [s.assignment for s in p2.solutions]


def test_different_seeds_different_streams():
    prob = _problem("masked_xor", Mode.PSC)
    best = solve_optimal(prob, time_budget=10).solution
    p1 = diversify(prob, best, n=8, gap=Fraction(1, 10), time_budget=30, seed=1)
    p2 = diversify(prob, best, n=8, gap=Fraction(1, 10), time_budget=30, seed=2)
    assert [s.assignment for s in p1.solutions[1:]] != [s.assignment for s in p2.solutions[1:]]


# ----------------------------------------------------------------------
# security-unaware baseline
# ----------------------------------------------------------------------


def test_pick_base_mode():
    assert pick_base_mode(load("check_bit")) is Mode.TSC
    assert pick_base_mode(load("masked_xor")) is Mode.PSC
    assert pick_base_mode(load("straightline")) is Mode.NONE


def test_naive_single_variant_is_base():
    pool = naive_diversify(load("check_bit"), TIGHT8, 1, seed=0)
    assert len(pool.solutions) == 1
    base = solve_optimal(_problem("check_bit", Mode.TSC), time_budget=30).solution
    assert pool.solutions[0].assignment == base.assignment


def test_naive_variants_distinct():
    pool = naive_diversify(load("masked_xor"), TIGHT8, 12, seed=4)
    assert len(pool.solutions) == 12
    seen = {s.assignment for s in pool.solutions}
    assert len(seen) == 12


def test_naive_reproducible():
    p1 = naive_diversify(load("masked_xor"), TIGHT8, 6, seed=5)
    p2 = naive_diversify(load("masked_xor"), TIGHT8, 6, seed=5)
    assert [s.assignment for s in p1.solutions] == [s.assignment for s in p2.solutions]
