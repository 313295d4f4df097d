"""Batch command-line driver: compile, diversify, verify, gadgets, report.

Artifacts land under an output directory, one subdirectory per run named
``<function>-<mode>-g<gap>``: encoded variants (``variant_NNN.bin``), the
transformed IR (``transformed.mir``), the analysis dump, a deterministic
``manifest.json``, and a ``timing.log`` kept separate so that manifests
and reports are byte-identical across reruns with the same seed.

Exit codes: 0 success, 2 usage or parse error, 3 unsatisfiable model,
4 solver timeout with an incumbent, 5 oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import copmodel, gadgets, solver, verify
from .copmodel import Mode, build_problem, to_schedule
from .machine import PROFILES, MachineProgram, encode
from .mir import IRError, SecurityLabel, parse_function, serialize_function
from .secanalysis import analyze, emit_analysis
from .solver import SolveStatus

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNSAT = 3
EXIT_TIMEOUT = 4
EXIT_ORACLE = 5

# model note surfaced in reports: the load/store latency is a choice of
# this machine model, not a measured value
LDST_NOTE = "model note: ld/st latency fixed at 2 cycles (model choice)"


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _load_function(path: str):
    return parse_function(Path(path).read_text())


def _run_dir(out: Path, name: str, mode: str, gap_percent: int) -> Path:
    d = out / f"{name}-{mode}-g{gap_percent}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _compile(func, profile, mode: Mode, seed: int, budget: float, balance: str):
    analyzed = analyze(
        func,
        profile,
        balance=balance if mode is Mode.TSC else None,
        fix_mask_order=mode is Mode.PSC,
    )
    prob = build_problem(
        analyzed.function, analyzed.pairs, analyzed.psets, profile, mode=mode
    )
    result = solver.solve_optimal(prob, time_budget=budget, seed=seed)
    return analyzed, prob, result


def cmd_compile(args) -> int:
    func = _load_function(args.file)
    profile = PROFILES[args.profile]
    mode = Mode(args.mode)
    out = _run_dir(Path(args.out), func.name, mode.value, 0)

    started = time.monotonic()
    analyzed, prob, result = _compile(
        func, profile, mode, args.seed, args.budget_secs, args.balance
    )
    elapsed = time.monotonic() - started
    if result.solution is None:
        if result.status is SolveStatus.UNSAT:
            print(f"unsat: {result.failing_family}", file=sys.stderr)
            return EXIT_UNSAT
        print("timeout without incumbent", file=sys.stderr)
        return EXIT_TIMEOUT

    program = encode(analyzed.function, to_schedule(prob, result.solution), profile)
    (out / "base.bin").write_bytes(program.to_bytes())
    (out / "transformed.mir").write_text(serialize_function(analyzed.function))
    (out / "analysis.txt").write_text(emit_analysis(analyzed))
    if args.emit_analysis:
        print(emit_analysis(analyzed), end="")
    if args.emit_model:
        (out / "model.sx").write_text(copmodel.emit_model(prob))

    baseline_obj = None
    overhead = None
    if mode is not Mode.NONE:
        _, _, base_result = _compile(
            func, profile, Mode.NONE, args.seed, args.budget_secs, args.balance
        )
        if base_result.solution is not None:
            baseline_obj = base_result.solution.objective
            if baseline_obj > 0:
                overhead = float(
                    (result.solution.objective - baseline_obj) / baseline_obj * 100
                )

    payload = {
        "function": func.name,
        "profile": profile.name,
        "mode": mode.value,
        "status": result.status.value,
        "objective": _frac_str(result.solution.objective),
        "baseline_objective": _frac_str(baseline_obj) if baseline_obj is not None else None,
        "overhead_percent": round(overhead, 2) if overhead is not None else None,
        "seed": args.seed,
        "notes": analyzed.notes + [LDST_NOTE],
    }
    _write_json(out / "compile.json", payload)
    (out / "timing.log").write_text(f"compile_seconds\t{elapsed:.3f}\n")
    line = f"{func.name}: objective {_frac_str(result.solution.objective)}"
    if overhead is not None:
        line += f" (baseline {_frac_str(baseline_obj)}, overhead {overhead:.1f}%)"
    print(line)
    if result.status is SolveStatus.TIMEOUT:
        print("warning: best-found solution, optimality not proved", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_diversify(args) -> int:
    func = _load_function(args.file)
    profile = PROFILES[args.profile]
    gap = Fraction(args.gap, 100)
    out = _run_dir(Path(args.out), func.name, args.mode, args.gap)

    started = time.monotonic()
    if args.mode == "naive":
        pool = solver.naive_diversify(func, profile, args.variants, seed=args.seed)
        analyzed = analyze(func, profile)
        prob = pool.problem
    else:
        mode = Mode(args.mode)
        analyzed, prob, result = _compile(
            func, profile, mode, args.seed, args.budget_secs, args.balance
        )
        if result.solution is None:
            if result.status is SolveStatus.UNSAT:
                print(f"unsat: {result.failing_family}", file=sys.stderr)
                return EXIT_UNSAT
            print("timeout without incumbent", file=sys.stderr)
            return EXIT_TIMEOUT
        pool = solver.diversify(
            prob,
            result.solution,
            n=args.variants,
            gap=gap,
            dthresh=args.dthresh,
            time_budget=args.budget_secs,
            seed=args.seed,
        )
        prob = pool.problem
    elapsed = time.monotonic() - started

    func_out = prob.function
    (out / "transformed.mir").write_text(serialize_function(func_out))
    variants = []
    for i, sol in enumerate(pool.solutions):
        program = encode(func_out, to_schedule(prob, sol), prob.profile)
        (out / f"variant_{i:03d}.bin").write_bytes(program.to_bytes())
        entry = {
            "index": i,
            "objective": _frac_str(sol.objective),
            "distance_to_base": solver.distance(sol, pool.solutions[0]) if i else 0,
        }
        variants.append(entry)

    manifest = {
        "function": func.name,
        "profile": profile.name,
        "mode": args.mode,
        "gap_percent": args.gap,
        "dthresh": args.dthresh,
        "seed": args.seed,
        "requested": args.variants,
        "produced": len(pool.solutions),
        "reason": pool.reason.value,
        "objective_bound": prob.opt_bound,
        "variants": variants,
    }
    _write_json(out / "manifest.json", manifest)
    (out / "timing.log").write_text(f"diversify_seconds\t{elapsed:.3f}\n")
    print(
        f"{func.name}: {len(pool.solutions)} variants ({pool.reason.value}) "
        f"gap {args.gap}% -> {out}"
    )
    return EXIT_OK


def _load_pool(pool_dir: Path) -> tuple[dict, list[MachineProgram]]:
    manifest = json.loads((pool_dir / "manifest.json").read_text())
    programs = []
    for i in range(manifest["produced"]):
        data = (pool_dir / f"variant_{i:03d}.bin").read_bytes()
        programs.append(MachineProgram.from_bytes(data))
    return manifest, programs


def cmd_verify(args) -> int:
    func = _load_function(args.file)
    pool_dir = Path(args.pool)
    manifest, programs = _load_pool(pool_dir)
    transformed = parse_function((pool_dir / "transformed.mir").read_text())
    profile = PROFILES[manifest["profile"]]
    analyzed = analyze(transformed, profile)
    policy = transformed.inputs

    lines: list[str] = []
    failures = 0
    incomplete = False
    cr_violations = 0
    psc_violations = 0
    mode = manifest["mode"]
    check_cr = bool(analyzed.psets)
    check_psc = any(label is SecurityLabel.RANDOM for _, label in policy)

    for i, program in enumerate(programs):
        tag = f"variant_{i:03d}"
        if i > 0:
            eq = verify.check_equivalence(programs[0], program, seed=manifest["seed"])
            lines.extend(f"{tag}\tequivalence\t{l}" for l in eq.lines())
            if not eq.ok:
                failures += 1
        if check_cr:
            report = verify.check_cr(program, policy, analyzed.psets)
            verdict = "secure" if report.secure else "insecure"
            lines.append(f"{tag}\tcr\t{verdict}")
            if not report.secure:
                cr_violations += 1
                if mode in ("tsc",):
                    failures += 1
        if check_psc:
            report = verify.check_psc(program, policy)
            if report.incomplete:
                incomplete = True
                lines.append(f"{tag}\tpsc\tincomplete\t{report.reason}")
            else:
                verdict = "secure" if report.secure else "insecure"
                lines.append(f"{tag}\tpsc\t{verdict}")
                if not report.secure:
                    psc_violations += 1
                    if mode in ("psc",):
                        failures += 1

    n = len(programs)
    payload = {
        "function": manifest["function"],
        "mode": mode,
        "variants": n,
        "failures": failures,
        "incomplete": incomplete,
        "cr_violation_rate": round(cr_violations / n, 4) if check_cr else None,
        "psc_violation_rate": round(psc_violations / n, 4) if check_psc else None,
    }
    _write_json(pool_dir / "verify.json", payload)
    (pool_dir / "verify.txt").write_text("\n".join(lines) + "\n" if lines else "")
    for line in lines:
        print(line)
    if incomplete:
        print("warning: enumeration incomplete for some checks", file=sys.stderr)
    if failures:
        print(f"{failures} oracle failures", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def cmd_gadgets(args) -> int:
    pool_dir = Path(args.pool)
    manifest, programs = _load_pool(pool_dir)
    if len(programs) < 2:
        print("pool has fewer than two variants", file=sys.stderr)
        return EXIT_USAGE
    hist = gadgets.pool_histogram(programs, k=args.k)
    pz, pl, ph = (float(x * 100) for x in hist.percentages())
    rows = [
        ["function", "mode", "gap", "pairs", "pct_zero", "pct_low", "pct_high"],
        [
            manifest["function"],
            manifest["mode"],
            manifest["gap_percent"],
            hist.total,
            f"{pz:.1f}",
            f"{pl:.1f}",
            f"{ph:.1f}",
        ],
    ]
    _emit_table(rows, args.format)
    payload = {
        "pairs": hist.total,
        "zero": hist.zero,
        "low": hist.low,
        "high": hist.high,
    }
    _write_json(pool_dir / "gadgets.json", payload)
    return EXIT_OK


def _emit_table(rows, fmt: str, stream=None) -> None:
    stream = stream or sys.stdout
    if fmt == "csv":
        writer = csv.writer(stream)
        writer.writerows(rows)
        return
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        stream.write(
            "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip() + "\n"
        )


def cmd_report(args) -> int:
    root = Path(args.out)
    if not root.is_dir():
        print(f"no such output directory: {root}", file=sys.stderr)
        return EXIT_USAGE
    run_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not run_dirs:
        print("no run directories found; expected <function>-<mode>-g<gap>/", file=sys.stderr)
        return EXIT_USAGE

    overhead_rows = [["function", "profile", "mode", "objective", "baseline", "overhead_pct"]]
    pool_header = ["function", "mode", "gap", "requested", "produced", "reason"]
    if args.with_times:
        pool_header.append("seconds")
    pool_rows = [pool_header]
    gadget_rows = [["function", "mode", "gap", "pairs", "pct_zero", "pct_low", "pct_high"]]
    breakage_rows = [["function", "variants", "cr_violation_pct", "psc_violation_pct"]]

    for d in run_dirs:
        compile_json = d / "compile.json"
        if compile_json.exists():
            c = json.loads(compile_json.read_text())
            overhead_rows.append(
                [
                    c["function"],
                    c["profile"],
                    c["mode"],
                    c["objective"],
                    c.get("baseline_objective") or "-",
                    c.get("overhead_percent") if c.get("overhead_percent") is not None else "-",
                ]
            )
        manifest_json = d / "manifest.json"
        if manifest_json.exists():
            m = json.loads(manifest_json.read_text())
            row = [
                m["function"],
                m["mode"],
                m["gap_percent"],
                m["requested"],
                m["produced"],
                m["reason"],
            ]
            if args.with_times:
                row.append(_read_time(d / "timing.log"))
            pool_rows.append(row)
            gadgets_json = d / "gadgets.json"
            if gadgets_json.exists():
                g = json.loads(gadgets_json.read_text())
                total = g["pairs"] or 1
                gadget_rows.append(
                    [
                        m["function"],
                        m["mode"],
                        m["gap_percent"],
                        g["pairs"],
                        f"{100 * g['zero'] / total:.1f}",
                        f"{100 * g['low'] / total:.1f}",
                        f"{100 * g['high'] / total:.1f}",
                    ]
                )
            verify_json = d / "verify.json"
            if verify_json.exists() and m["mode"] == "naive":
                v = json.loads(verify_json.read_text())
                breakage_rows.append(
                    [
                        v["function"],
                        v["variants"],
                        _pct(v.get("cr_violation_rate")),
                        _pct(v.get("psc_violation_rate")),
                    ]
                )

    sections = [
        ("security overhead", overhead_rows),
        ("variant pools", pool_rows),
        ("gadget overlap", gadget_rows),
        ("unaware-randomization breakage", breakage_rows),
    ]
    for title, rows in sections:
        if len(rows) == 1:
            continue
        if args.format == "text":
            print(f"# {title}")
        _emit_table(rows, args.format)
        if args.format == "text":
            print(LDST_NOTE if title == "security overhead" else "", end="")
            print()
    return EXIT_OK


def _pct(rate) -> str:
    return f"{rate * 100:.0f}" if rate is not None else "-"


def _read_time(path: Path) -> str:
    if not path.exists():
        return "-"
    for line in path.read_text().splitlines():
        parts = line.split("\t")
        if len(parts) == 2:
            return parts[1]
    return "-"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secdiv",
        description="security-aware diversifying backend for the MiniRISC model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_mode=True):
        p.add_argument("--profile", choices=sorted(PROFILES), default="tight8")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--budget-secs", type=float, default=600.0)
        p.add_argument("--out", default="out")
        if with_mode:
            p.add_argument("--balance", choices=["ebb", "cbb"], default="ebb")

    p = sub.add_parser("compile", help="analyze, build the model, solve, and encode")
    p.add_argument("file")
    p.add_argument("--mode", choices=["tsc", "psc", "none"], default="none")
    p.add_argument("--emit-analysis", action="store_true")
    p.add_argument("--emit-model", action="store_true")
    common(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("diversify", help="produce a pool of diverse variants")
    p.add_argument("file")
    p.add_argument("--mode", choices=["tsc", "psc", "none", "naive"], default="none")
    p.add_argument("--variants", type=int, default=20)
    p.add_argument("--gap", type=int, default=0, help="optimality gap in percent")
    p.add_argument("--dthresh", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_diversify)

    p = sub.add_parser("verify", help="run the oracles over a variant pool")
    p.add_argument("file")
    p.add_argument("--pool", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gadgets", help="gadget-overlap histogram for a pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--k", type=int, default=gadgets.DEFAULT_MAX_LEN)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.set_defaults(func=cmd_gadgets)

    p = sub.add_parser("report", help="aggregate tables over an output directory")
    p.add_argument("--out", default="out")
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--with-times", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: missing input {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except copmodel.ModelInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_UNSAT


if __name__ == "__main__":
    sys.exit(main())
