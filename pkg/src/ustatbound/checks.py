"""Invariant checks shared by the self-test command and the test suite.

Each check returns a :class:`CheckResult`; budgets are parameters so the same
code runs at reduced scale (self-test) and full scale (acceptance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional

import numpy as np

from . import linalg, partitions, rng
from .bounds import bound_for_model, m_term_fourth, m_term_variance
from .chaos import (SimpleFunctionSpec, difference_operator, inner_product, kernel_projection,
                    moment_formula, multiple_integral_simple)
from .distance import empirical_delta_lower, moment_diagnostics
from .model import GroundSpace, IntensityMeasure, UStatModel, builtin_model
from .quadrature import IntegrationBudget
from .simulate import _sample, normalize, replicate

SIGMAS = 4.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "details": self.details}


def _within(diff: float, se: float) -> bool:
    return abs(diff) <= SIGMAS * se


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _configs(measure: IntensityMeasure, count: int, seed: int, label: str, fn: Callable, block: int = 4096):
    """Apply ``fn`` to ``count`` independent configurations; rows in replicate order."""
    starts = list(range(0, count, block))

    def run(start):
        return [fn(_sample(measure, rng.generator(seed, label, r))) for r in range(start, min(start + block, count))]

    return np.array([row for rows in rng.pmap(run, starts) for row in rows], dtype=float)


# ---------------------------------------------------------------------------
# orthogonality of multiple integrals


def orthogonality_functions() -> dict:
    lo, mid, hi = 0.0, 0.5, 1.0
    return {
        "f1": SimpleFunctionSpec.indicator(([lo, lo], [mid, mid])),
        "g1": SimpleFunctionSpec.indicator(([0.25, lo], [0.75, mid])),
        "f2": SimpleFunctionSpec.indicator(([lo, lo], [mid, mid]), ([mid, lo], [hi, mid])),
        "g2": SimpleFunctionSpec.indicator(([lo, 0.25], [mid, 0.75]), ([mid, mid], [hi, hi])),
    }


def check_orthogonality(configs: int = 200_000, t: float = 10.0, seed: int = 0) -> CheckResult:
    measure = IntensityMeasure(GroundSpace.unit(2), t)
    funcs = orthogonality_functions()
    names = list(funcs)
    vals = _configs(measure, configs, seed, "orthogonality",
                    lambda cfg: [multiple_integral_simple(funcs[k], cfg) for k in names])
    details = {"configs": configs, "t": t, "means": {}, "products": {}}
    ok = True
    for col, k in enumerate(names):
        m, se = _mean_se(vals[:, col])
        good = _within(m, se)
        ok &= good
        details["means"][k] = {"estimate": m, "std_error": se, "passed": good}
    for a in range(len(names)):
        for b in range(a, len(names)):
            f, g = funcs[names[a]], funcs[names[b]]
            exact = math.factorial(f.order) * inner_product(f, g, measure) if f.order == g.order else 0.0
            m, se = _mean_se(vals[:, a] * vals[:, b])
            good = _within(m - exact, se)
            ok &= good
            details["products"][f"{names[a]}*{names[b]}"] = {"estimate": m, "exact": exact, "std_error": se,
                                                             "passed": good}
    return CheckResult("orthogonality", bool(ok), details)


# ---------------------------------------------------------------------------
# partitions and the moment formula


def brute_force_partitions(group_sizes) -> list:
    """Every set partition of the labels, then filtered by the admissibility rules."""
    labels = partitions.labels_for(group_sizes)

    def all_partitions(items):
        if not items:
            yield []
            return
        head, rest = items[0], items[1:]
        for part in all_partitions(rest):
            yield [[head]] + part
            for idx in range(len(part)):
                yield part[:idx] + [[head] + part[idx]] + part[idx + 1:]

    out = []
    for part in all_partitions(labels):
        if any(len(b) < 2 for b in part):
            continue
        if any(len({lab.group for lab in b}) != len(b) for b in part):
            continue
        out.append(frozenset(frozenset(b) for b in part))
    return out


def _as_set(p: partitions.Partition) -> frozenset:
    return frozenset(frozenset(b) for b in p.blocks)


def check_partitions() -> CheckResult:
    details = {}
    ok = True
    counts = {"1,1,1,1": len(partitions.enumerate_pi([1, 1, 1, 1])), "2,2": len(partitions.enumerate_pi([2, 2]))}
    details["counts"] = counts
    ok &= counts == {"1,1,1,1": 4, "2,2": 2}
    mismatches = []
    edge_sets = [(), ((1, 3), (2, 4)), ((1, 2), (3, 4)), ((1, 2), (1, 3), (1, 4))]
    checked = 0
    for sizes in product(range(3), repeat=4):
        parts = partitions.enumerate_pi(sizes)
        brute = brute_force_partitions(sizes)
        if len(parts) != len(brute) or {_as_set(p) for p in parts} != set(brute):
            mismatches.append({"sizes": list(sizes), "kind": "enumeration"})
            continue
        for edges in edge_sets:
            kept = {_as_set(p) for p in partitions.filter_connected(parts, edges, 4)}
            literal = {_as_set(p) for p in parts if partitions.crosses_every_bipartition(p, edges, 4)}
            checked += len(parts)
            if kept != literal:
                mismatches.append({"sizes": list(sizes), "fixed_edges": [list(e) for e in edges],
                                   "kind": "connectivity"})
    details["partitions_checked"] = checked
    details["mismatches"] = mismatches[:10]
    ok &= not mismatches
    return CheckResult("partition-counts", bool(ok), details)


def check_moment_formula(configs: int = 200_000, seed: int = 0) -> CheckResult:
    t = 10.0
    measure = IntensityMeasure(GroundSpace.unit(2), t)
    f = SimpleFunctionSpec.indicator(([0.0, 0.0], [0.5, 0.5]))
    s = measure.mass(np.array([0.0, 0.0]), np.array([0.5, 0.5]))
    formula = moment_formula([f] * 4, measure)
    exact = s + 3 * s * s
    vals = _configs(measure, configs, seed, "moment", lambda cfg: [multiple_integral_simple(f, cfg) ** 4])[:, 0]
    m, se = _mean_se(vals)
    formula_ok = formula == exact
    mc_ok = _within(m - exact, se)
    details = {"mu_A": s, "formula": formula, "closed_form": exact, "formula_exact": formula_ok,
               "mc_estimate": m, "mc_std_error": se, "mc_passed": mc_ok, "configs": configs}
    return CheckResult("moment-formula", bool(formula_ok and mc_ok), details)


# ---------------------------------------------------------------------------
# chaos kernels against the difference operator


def interior_points(count: int, margin: float, dim: int, seed: int) -> np.ndarray:
    gen = rng.generator(seed, "interior", count, dim)
    return margin + (1.0 - 2.0 * margin) * gen.random((count, dim))


def check_kernel_formula(points: int = 50, draws: int = 50_000, t: float = 50.0, r: float = 0.1,
                         budget: Optional[IntegrationBudget] = None, seed: int = 0) -> CheckResult:
    """First-level kernel vs the mean of the difference operator, second level vs phi."""
    # Monte Carlo projections so that the comparisons carry a standard error
    budget = (budget or IntegrationBudget(mc_samples=2 ** 16)).replace(tensor_dim_cap=0)
    model = builtin_model("two-radii-edges", {"t": t, "r": [r, 2 * r]})
    z = interior_points(points, r + 1e-3, model.measure.dim, seed)
    mc_proj = kernel_projection(model, 1, 1, budget, seed, use_closed_form=False)
    f1, f1_se = mc_proj.evaluate(z[:, None, :])
    closed = kernel_projection(model, 1, 1)(z[:, None, :])
    dz = _configs(model.measure, draws, seed, "kernel", lambda cfg: difference_operator(model, 1, z, cfg), block=1024)
    dmean = dz.mean(axis=0)
    dse = dz.std(axis=0, ddof=1) / math.sqrt(draws)
    comb = np.sqrt(dse ** 2 + f1_se ** 2)
    diff_ok = np.abs(dmean - f1) <= SIGMAS * comb
    disk = 2 * t * math.pi * r * r
    disk_ok = np.abs(f1 - disk) <= SIGMAS * f1_se
    closed_ok = np.allclose(closed, disk, rtol=1e-12, atol=0.0)

    gen = rng.generator(seed, "pairs")
    pairs = gen.random((1000, 2, model.measure.dim))
    pairs[:500, 1] = pairs[:500, 0] + 0.07 * (gen.random((500, model.measure.dim)) - 0.5)
    level2 = kernel_projection(model, 1, 2, budget, seed)(pairs)
    phi_ok = bool(np.array_equal(level2, model.kernels[0](pairs)))
    details = {
        "t": t, "r": r, "points": points, "draws": draws,
        "difference_vs_kernel_passed": int(diff_ok.sum()),
        "max_z_score": float(np.max(np.abs(dmean - f1) / comb)),
        "disk_closed_form": disk, "disk_mc_passed": int(disk_ok.sum()),
        "closed_form_route_exact": bool(closed_ok), "level2_equals_phi": phi_ok,
    }
    return CheckResult("kernel-consistency", bool(diff_ok.all() and disk_ok.all() and closed_ok and phi_ok), details)


# ---------------------------------------------------------------------------
# linear algebra


def random_spd(gen: np.random.Generator, d: int) -> np.ndarray:
    X = gen.standard_normal((d, d))
    return X @ X.T + 0.1 * np.eye(d)


def check_linalg(count: int = 100, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    gen = rng.generator(seed, "linalg")
    worst = {"sqrt": 0.0, "inverse": 0.0, "operator_norm": 0.0, "sqrt_similarity": 0.0}
    trace_ok = True
    for idx in range(count):
        d = 1 + idx % 6
        A = random_spd(gen, d)
        B = random_spd(gen, d)
        scale = float(np.max(np.abs(A)))
        S = linalg.sqrt_pd(A)
        worst["sqrt"] = max(worst["sqrt"], float(np.max(np.abs(S @ S - A))) / scale)
        worst["inverse"] = max(worst["inverse"], float(np.max(np.abs(linalg.inverse_pd(A) @ A - np.eye(d)))))
        top = float(np.linalg.eigvalsh(A)[-1])
        worst["operator_norm"] = max(worst["operator_norm"], abs(linalg.operator_norm(A) - top) / top)
        R = linalg.sqrt_similarity(A, B)
        target = A @ np.linalg.inv(B)
        worst["sqrt_similarity"] = max(worst["sqrt_similarity"],
                                       float(np.max(np.abs(R @ R - target))) / float(np.max(np.abs(target))))
        trace_ok &= linalg.trace(A @ B) <= linalg.trace(A) * linalg.trace(B)
    ok = trace_ok and all(v <= tol for v in worst.values())
    return CheckResult("linalg", bool(ok), {"matrices": count, "worst_relative_error": worst,
                                            "trace_inequality": bool(trace_ok)})


# ---------------------------------------------------------------------------
# M-term simulation oracles (kernels of order <= 2)


def _chaos_component(model: UStatModel, i: int, n: int, z: np.ndarray, cfg, f1: np.ndarray) -> np.ndarray:
    """``I_{n-1}(f_i^{(n)}(z, .))``: deterministic ``f^{(1)}`` at n = 1 and
    ``(D_z F - f^{(1)}(z)) / 2`` at n = 2 (order-2 kernels)."""
    k = model.kernels[i - 1].order
    if n > k:
        return np.zeros(len(z))
    if n == 1:
        return f1
    return 0.5 * (difference_operator(model, i, z, cfg) - f1)


@dataclass
class OracleTable:
    variance: dict  # (i, j, n, m) -> (value, std_error)
    fourth: dict    # (i, n) -> (value, std_error)
    replicates: int
    z_points: int


def m_term_oracle(model: UStatModel, replicates: int = 20_000, z_points: int = 32, seed: int = 0) -> OracleTable:
    """Simulation estimates of the left sides the M-terms bound.

    Per configuration, ``X = ∫ A_i(z) A_j(z) mu(dz)`` is estimated twice from
    independent z samples, so the cross products are unbiased for ``E[X^2]``.
    """
    if model.max_order > 2:
        raise ValueError("the chaos identity used by the oracle needs kernels of order <= 2")
    d, k = model.dimension, model.max_order
    mass = model.measure.total_mass
    proj = [kernel_projection(model, i, 1) for i in range(1, d + 1)]
    var_keys = [(i, j, n, m) for i in range(1, d + 1) for j in range(1, d + 1)
                for n in range(1, k + 1) for m in range(1, k + 1)]
    four_keys = [(i, n) for i in range(1, d + 1) for n in range(1, k + 1)]

    def one(r):
        gen = rng.generator(seed, "oracle", r)
        cfg = _sample(model.measure, gen)
        za = model.measure.sample_points(gen, z_points)
        zb = model.measure.sample_points(gen, z_points)
        row = []
        comps = []
        for z in (za, zb):
            f1 = [p(z[:, None, :]) for p in proj]
            comps.append({(i, n): _chaos_component(model, i, n, z, cfg, f1[i - 1])
                          for i in range(1, d + 1) for n in range(1, k + 1)})
        for (i, j, n, m) in var_keys:
            row.append(mass * float(np.mean(comps[0][(i, n)] * comps[0][(j, m)])))
            row.append(mass * float(np.mean(comps[1][(i, n)] * comps[1][(j, m)])))
        for key in four_keys:
            row.append(mass * 0.5 * float(np.mean(comps[0][key] ** 4) + np.mean(comps[1][key] ** 4)))
        return row

    block = 512
    starts = list(range(0, replicates, block))
    rows = rng.pmap(lambda s: [one(r) for r in range(s, min(s + block, replicates))], starts)
    data = np.array([row for chunk in rows for row in chunk])
    R = len(data)
    variance = {}
    for idx, key in enumerate(var_keys):
        a, b = data[:, 2 * idx], data[:, 2 * idx + 1]
        sa, sb = a.sum(), b.sum()
        cross = (sa * sb - float(np.sum(a * b))) / (R * (R - 1))
        value = float(np.mean(a * b) - cross)
        psi = a * b - a * b.mean() - b * a.mean()
        variance[key] = (value, float(np.std(psi, ddof=1) / math.sqrt(R)))
    base = 2 * len(var_keys)
    fourth = {}
    for idx, key in enumerate(four_keys):
        fourth[key] = _mean_se(data[:, base + idx])
    return OracleTable(variance, fourth, R, z_points)


def check_m_term_domination(model: Optional[UStatModel] = None, replicates: int = 20_000, z_points: int = 32,
                            budget: Optional[IntegrationBudget] = None, seed: int = 0) -> CheckResult:
    model = model or builtin_model("two-radii-edges", {"t": 50.0})
    budget = budget or IntegrationBudget()
    oracle = m_term_oracle(model, replicates, z_points, seed)
    rows = []
    ok = True
    for (i, j, n, m), (ov, ose) in sorted(oracle.variance.items()):
        term = m_term_variance(model, i, j, n, m, budget, seed)
        slack = SIGMAS * math.hypot(term.std_error, ose)
        good = term.value >= ov - slack
        ok &= good
        rows.append({"kind": "variance", "key": [i, j, n, m], "m_term": term.value, "m_term_se": term.std_error,
                     "oracle": ov, "oracle_se": ose, "passed": bool(good)})
    for (i, n), (ov, ose) in sorted(oracle.fourth.items()):
        term = m_term_fourth(model, i, n, budget, seed)
        slack = SIGMAS * math.hypot(term.std_error, ose)
        good = term.value >= ov - slack
        ok &= good
        rows.append({"kind": "fourth", "key": [i, n], "m_term": term.value, "m_term_se": term.std_error,
                     "oracle": ov, "oracle_se": ose, "passed": bool(good)})
    return CheckResult("m-term-domination", bool(ok), {"replicates": replicates, "z_points": z_points,
                                                       "rows": rows})


# ---------------------------------------------------------------------------
# bound domination end to end


@dataclass
class Verification:
    bound: object
    batch: object
    distance: object
    moments: object
    dominated: bool
    covariance_match: bool
    covariance_z: np.ndarray


def verify_model(model: UStatModel, replicates: int, budget: Optional[IntegrationBudget] = None, seed: int = 0,
                 wiring: str = "expansion", paper_literal: bool = False) -> Verification:
    """Simulate, normalise with the quadrature mean and covariance, and compare."""
    if replicates < 10:
        raise ValueError(f"verification needs at least 10 replicates, got {replicates}")
    mb = bound_for_model(model, budget, seed, wiring, paper_literal)
    batch = normalize(replicate(model, replicates, seed), mb.mean, mb.covariance.Sigma, model.targetC)
    dist = empirical_delta_lower(batch, model.targetC, seed=seed)
    moments = moment_diagnostics(batch, model.targetC)
    report = mb.report
    dominated = dist.lower_bound <= report.total + SIGMAS * math.hypot(report.total_se, dist.lower_bound_se)
    F = batch.F
    Fc = F - F.mean(axis=0)
    prods = Fc[:, :, None] * Fc[:, None, :]
    emp = prods.sum(axis=0) / (len(F) - 1)
    emp_se = prods.std(axis=0, ddof=1) / math.sqrt(len(F))
    comb = np.sqrt(emp_se ** 2 + mb.covariance.std_error ** 2)
    z = np.abs(emp - mb.covariance.Sigma) / np.where(comb > 0, comb, np.inf)
    return Verification(mb, batch, dist, moments, bool(dominated), bool(np.all(z <= SIGMAS)), z)


def check_domination(replicates: int = 20_000, seed: int = 0) -> CheckResult:
    model = builtin_model("order1-pair", {"t": 10.0})
    v = verify_model(model, replicates, IntegrationBudget(), seed)
    return CheckResult("bound-domination", v.dominated and v.covariance_match, {
        "model": "order1-pair", "t": 10.0, "replicates": replicates,
        "delta_lower": v.distance.lower_bound, "delta_lower_se": v.distance.lower_bound_se,
        "total": v.bound.report.total, "covariance_match": v.covariance_match,
    })


# ---------------------------------------------------------------------------
# suite


def _corrupt_connectivity(partition, fixed_edges, n_groups):
    # mutation: forgets the fixed edges
    return _REAL_CONNECTED(partition, (), n_groups)


_REAL_CONNECTED = partitions.group_graph_connected

SELFTESTS = {
    "orthogonality": lambda seed: check_orthogonality(20_000, seed=seed),
    "moment-formula": lambda seed: check_moment_formula(20_000, seed=seed),
    "partition-counts": lambda seed: check_partitions(),
    "kernel-consistency": lambda seed: check_kernel_formula(10, 5_000, budget=IntegrationBudget(mc_samples=2 ** 14),
                                                            seed=seed),
    "linalg": lambda seed: check_linalg(100, seed),
    "m-term-domination": lambda seed: check_m_term_domination(
        builtin_model("two-radii-edges", {"t": 20.0}), 2_000, 16, IntegrationBudget(mc_samples=2 ** 16), seed),
    "bound-domination": lambda seed: check_domination(5_000, seed),
}

MUTATIONS = ("partition-predicate",)


def run_selftest(seed: int = 0, mutation: Optional[str] = None, only=None) -> list:
    if mutation is not None and mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}; choose from {MUTATIONS}")
    names = list(SELFTESTS) if only is None else list(only)
    if mutation == "partition-predicate":
        partitions.group_graph_connected = _corrupt_connectivity
    try:
        return [SELFTESTS[name](seed) for name in names]
    finally:
        partitions.group_graph_connected = _REAL_CONNECTED
