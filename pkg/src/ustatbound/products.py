"""Integrals of products of wired kernel copies.

A :class:`Factor` is one kernel copy ``coef * phi(x_args..., x_free...)``
whose arguments are outer integration variables. Free variables belong to a
single factor. When a factor has exactly one free variable and its kernel
knows its exact partial integral, that variable is integrated out in closed
form; everything else is handed to :func:`quadrature.integrate`, with a
locality tree built from the kernels' reaches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import IntensityMeasure, Kernel
from .quadrature import IntegrationBudget, IntegrationResult, LocalityTree, integrate


@dataclass(frozen=True)
class Factor:
    kernel: Kernel
    args: tuple
    free: tuple = ()
    coef: float = 1.0


def _plan(factors: Sequence[Factor], measure: IntensityMeasure, absolute: bool, exact: bool):
    plans = []
    dropped = set()
    for f in factors:
        collapse = (
            exact
            and len(f.free) == 1
            and len(f.args) >= 1
            and f.kernel.partial is not None
            and measure.uniform
            and (not absolute or f.kernel.nonnegative)
        )
        if collapse:
            dropped.add(f.free[0])
            plans.append((f, True))
        else:
            plans.append((f, False))
    return plans, dropped


def product_integral(factors: Sequence[Factor], n_vars: int, measure: IntensityMeasure,
                     budget: Optional[IntegrationBudget] = None, seed: int = 0, label: tuple = (),
                     absolute: bool = False, exact: bool = True) -> IntegrationResult:
    """``∫ prod_f coef_f * phi_f(wired args) d mu^{n_vars}`` (absolute values if asked)."""
    budget = budget or IntegrationBudget()
    plans, dropped = _plan(factors, measure, absolute, exact)
    kept = [v for v in range(n_vars) if v not in dropped]
    pos = {v: i for i, v in enumerate(kept)}

    edges = {}
    for f, collapsed in plans:
        if f.kernel.reach is None:
            continue
        vs = sorted({pos[v] for v in (f.args if collapsed else f.args + f.free)})
        for a_i, a in enumerate(vs):
            for b in vs[a_i + 1:]:
                r = f.kernel.reach
                edges[(a, b)] = min(edges.get((a, b), r), r)
    tree, order = LocalityTree.from_edges(len(kept), edges)
    where = {old: new for new, old in enumerate(order)}  # kept index -> column
    coef = float(np.prod([f.coef for f in factors]))

    compiled = []
    for f, collapsed in plans:
        cols = [where[pos[v]] for v in f.args]
        if not collapsed:
            cols += [where[pos[v]] for v in f.free]
        compiled.append((f.kernel, cols, collapsed))

    def integrand(X):
        out = np.full(len(X), coef)
        for kernel, cols, collapsed in compiled:
            if collapsed:
                vals = kernel.partial_integral(X[:, cols, :], measure)
            else:
                vals = kernel(X[:, cols, :])
            out *= np.abs(vals) if absolute else vals
        return out

    return integrate(integrand, measure, len(kept), budget, seed, label, tree if kept else None)
