"""secdiv: a security-aware diversifying compiler backend for MiniRISC.

Pipeline: parse the annotated IR (`mir`), run the security analysis
(`secanalysis`), build the combinatorial model (`copmodel`), search it
(`solver`), encode solutions for the machine model (`machine`), and
check everything with independent oracles (`verify`, `gadgets`).
"""

from . import copmodel, gadgets, machine, mir, secanalysis, solver, verify

__all__ = [
    "copmodel",
    "gadgets",
    "machine",
    "mir",
    "secanalysis",
    "solver",
    "verify",
]
