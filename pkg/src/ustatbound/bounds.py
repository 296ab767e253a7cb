"""Partition-sum upper bounds for the variance and fourth-moment terms, and
assembly of the Gaussian-approximation bound for U-statistic vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg, rng
from .chaos import CovarianceResult, SingularCovariance, covariance, expectation
from .model import UStatModel
from .partitions import WiringSpec, build_wiring, enumerate_pi, filter_connected
from .products import Factor, product_integral
from .quadrature import IntegrationBudget, IntegrationResult

WIRINGS = {
    # z shared by copies (1,3), y by (2,4): E<A,B>^2 = ∫∫ E[A(z)B(z)A(y)B(y)]
    "expansion": ((1, 3), (2, 4)),
    # z shared by the two phi_i copies, y by the two phi_j copies
    "grouped": ((1, 2), (3, 4)),
}


@dataclass(frozen=True)
class MTerm:
    value: float
    std_error: float
    partitions: int
    variables: tuple = ()  # outer variable count per partition

    @classmethod
    def zero(cls) -> "MTerm":
        return cls(0.0, 0.0, 0)


def _copy_factors(model: UStatModel, copies, wiring) -> list:
    """copies: list of (component, level) per copy, 1-based component."""
    factors = []
    for c, (comp, level) in enumerate(copies, start=1):
        kernel = model.kernels[comp - 1]
        args = wiring.args(c)
        factors.append(Factor(kernel, tuple(args[:level]), tuple(args[level:]), math.comb(kernel.order, level)))
    return factors


def _partition_sum(model, copies, spec: WiringSpec, budget, seed, label) -> MTerm:
    parts = filter_connected(enumerate_pi(spec.group_sizes), spec.fixed_edges(), spec.n_copies)
    if not parts:
        return MTerm.zero()

    def run(job):
        idx, pi = job
        wiring = build_wiring(spec, pi)
        factors = _copy_factors(model, copies, wiring)
        res = product_integral(factors, wiring.n_vars, model.measure, budget, seed, label + (idx,), absolute=True)
        return res, wiring.n_vars

    results = rng.pmap(run, list(enumerate(parts)))
    value = math.fsum(r.value for r, _ in results)
    se = math.sqrt(math.fsum(r.std_error ** 2 for r, _ in results))
    return MTerm(value, se, len(parts), tuple(nv for _, nv in results))


def m_term_variance(model: UStatModel, i: int, j: int, n: int, m: int,
                    budget: Optional[IntegrationBudget] = None, seed: int = 0,
                    wiring: str = "expansion") -> MTerm:
    """Partition-sum bound on ``Var(<I_{n-1}(f_i^{(n)}(z,.)), I_{m-1}(f_j^{(m)}(z,.))>)``.

    Four copies ``|phi_i|, |phi_i|, |phi_j|, |phi_j|`` at levels (n, n, m, m);
    partitioned groups of sizes (n-1, n-1, m-1, m-1); only partitions that
    connect all copies (counting the shared z/y links) contribute.
    """
    ki, kj = model.kernels[i - 1].order, model.kernels[j - 1].order
    if n > ki or m > kj:
        return MTerm.zero()
    spec = WiringSpec(
        group_sizes=(n - 1, n - 1, m - 1, m - 1),
        fixed=WIRINGS[wiring],
        free_counts=(ki - n, ki - n, kj - m, kj - m),
    )
    copies = [(i, n), (i, n), (j, m), (j, m)]
    return _partition_sum(model, copies, spec, budget, seed, ("mvar", wiring, i, j, n, m))


def m_term_fourth(model: UStatModel, i: int, n: int, budget: Optional[IntegrationBudget] = None,
                  seed: int = 0) -> MTerm:
    """Partition-sum bound on ``∫ E[I_{n-1}(f_i^{(n)}(z,.))^4] mu(dz)``; all copies share z."""
    k = model.kernels[i - 1].order
    if n > k:
        return MTerm.zero()
    spec = WiringSpec(group_sizes=(n - 1,) * 4, fixed=((1, 2, 3, 4),), free_counts=(k - n,) * 4)
    return _partition_sum(model, [(i, n)] * 4, spec, budget, seed, ("m4", i, n))


@dataclass
class MTable:
    variance: dict  # (i, j, n, m) -> MTerm
    fourth: dict    # (i, n) -> MTerm
    wiring: str = "expansion"
    seed: int = 0
    budget: dict = field(default_factory=dict)

    def variance_sum(self) -> tuple[float, float]:
        vals = list(self.variance.values())
        return math.fsum(v.value for v in vals), math.sqrt(math.fsum(v.std_error ** 2 for v in vals))

    def fourth_sum(self) -> tuple[float, float]:
        vals = list(self.fourth.values())
        return math.fsum(v.value for v in vals), math.sqrt(math.fsum(v.std_error ** 2 for v in vals))

    def diagonal_variance_sum(self) -> tuple[float, float]:
        vals = [v for (i, j, n, m), v in self.variance.items() if i == j and n == m]
        return math.fsum(v.value for v in vals), math.sqrt(math.fsum(v.std_error ** 2 for v in vals))

    def to_dict(self) -> dict:
        return {
            "wiring": self.wiring,
            "seed": self.seed,
            "budget": self.budget,
            "variance": [
                {"i": i, "j": j, "n": n, "m": m, "value": t.value, "std_error": t.std_error,
                 "partitions": t.partitions}
                for (i, j, n, m), t in sorted(self.variance.items())
            ],
            "fourth": [
                {"i": i, "n": n, "value": t.value, "std_error": t.std_error, "partitions": t.partitions}
                for (i, n), t in sorted(self.fourth.items())
            ],
        }


def compute_mtable(model: UStatModel, budget: Optional[IntegrationBudget] = None, seed: int = 0,
                   wiring: str = "expansion") -> MTable:
    budget = budget or IntegrationBudget()
    d, k = model.dimension, model.max_order
    var_keys = [(i, j, n, m) for i in range(1, d + 1) for j in range(1, d + 1)
                for n in range(1, k + 1) for m in range(1, k + 1)]
    four_keys = [(i, n) for i in range(1, d + 1) for n in range(1, k + 1)]
    variance = {key: m_term_variance(model, *key, budget=budget, seed=seed, wiring=wiring) for key in var_keys}
    fourth = {key: m_term_fourth(model, *key, budget=budget, seed=seed) for key in four_keys}
    return MTable(variance, fourth, wiring, seed, budget.to_dict())


# ---------------------------------------------------------------------------
# assembly


def _factors(C, Sigma) -> dict:
    R = linalg.sqrt_similarity(C, Sigma)
    Cinv = linalg.inverse_pd(C)
    return {
        "sqrt_C_Sigma_inv": R,
        "norm_sqrt_C_Sigma_inv": linalg.operator_norm(R),
        "norm_C": linalg.operator_norm(C),
        "norm_C_inv": linalg.operator_norm(Cinv),
        "frob_C_Sigma_inv": linalg.frobenius_norm(C @ linalg.inverse_pd(Sigma)),
        "trace_Sigma": linalg.trace(Sigma),
    }


def _terms(f: dict, d: int, k: int, s4: float, sv: float) -> tuple[float, float]:
    c1 = (math.sqrt(2 * math.pi) / 8) * d ** 2 * k ** 3.5 * f["norm_sqrt_C_Sigma_inv"] ** 3 \
        * f["norm_C_inv"] ** 1.5 * f["norm_C"] * math.sqrt(f["trace_Sigma"])
    c2 = k ** 2 * f["frob_C_Sigma_inv"] * f["norm_C_inv"] * math.sqrt(f["norm_C"])
    return c1 * math.sqrt(max(s4, 0.0)), c2 * math.sqrt(max(sv, 0.0))


def _sqrt_se(value: float, se: float) -> float:
    """First-order standard error of sqrt(value)."""
    if se == 0.0:
        return 0.0
    if value <= 0.0:
        return math.sqrt(se)
    return se / (2.0 * math.sqrt(value))


@dataclass
class BoundReport:
    Sigma: np.ndarray
    Sigma_std_error: np.ndarray
    C: np.ndarray
    factors: dict
    k: int
    d: int
    term1: float
    term2: float
    total: float
    term1_se: float
    term2_se: float
    total_se: float
    mtable: MTable
    condition: float
    paper_literal: Optional[dict] = None
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        fac = {key: (v.tolist() if isinstance(v, np.ndarray) else v) for key, v in self.factors.items()}
        out = {
            "Sigma": self.Sigma.tolist(),
            "Sigma_std_error": self.Sigma_std_error.tolist(),
            "C": self.C.tolist(),
            "factors": fac,
            "d": self.d,
            "k": self.k,
            "term1": self.term1,
            "term2": self.term2,
            "total": self.total,
            "term1_std_error": self.term1_se,
            "term2_std_error": self.term2_se,
            "total_std_error": self.total_se,
            "condition_Sigma": self.condition,
            "mtable": self.mtable.to_dict(),
            "provenance": self.provenance,
            "notes": list(self.notes),
        }
        if self.paper_literal is not None:
            out["paper_literal"] = self.paper_literal
        return out


def assemble_bound(model: UStatModel, C, mtable: MTable, Sigma, Sigma_se=None,
                   paper_literal: bool = False) -> BoundReport:
    """Combine Sigma, C and the M-table into the two bound terms.

    Standard errors propagate the M-term errors through the square roots and
    the Sigma entry errors through a finite-difference gradient of the matrix
    factors.
    """
    C = linalg.check_symmetric(C)
    Sigma = linalg.check_symmetric(Sigma)
    _, lam = linalg.jacobi_eigen(Sigma)
    top = float(np.max(np.abs(lam)))
    if top == 0.0 or lam[-1] <= 1e-10 * top:
        raise SingularCovariance(f"covariance is numerically singular (eigenvalues {lam.tolist()})")
    linalg.sqrt_pd(C)  # raises on non-PD C
    d, k = model.dimension, model.max_order
    f = _factors(C, Sigma)
    s4, s4_se = mtable.fourth_sum()
    sv, sv_se = mtable.variance_sum()
    term1, term2 = _terms(f, d, k, s4, sv)

    t1_se = term1 / math.sqrt(s4) * _sqrt_se(s4, s4_se) if s4 > 0 else 0.0
    t2_se = term2 / math.sqrt(sv) * _sqrt_se(sv, sv_se) if sv > 0 else 0.0
    sig_se1 = sig_se2 = 0.0
    if Sigma_se is not None and np.any(np.asarray(Sigma_se) > 0):
        Sigma_se = np.asarray(Sigma_se, dtype=float)
        g1 = g2 = 0.0
        for a in range(d):
            for b in range(a, d):
                if Sigma_se[a, b] == 0.0:
                    continue
                h = 1e-6 * max(abs(Sigma[a, b]), math.sqrt(abs(Sigma[a, a] * Sigma[b, b])), 1e-12)
                P = Sigma.copy()
                P[a, b] += h
                if a != b:
                    P[b, a] += h
                try:
                    p1, p2 = _terms(_factors(C, P), d, k, s4, sv)
                except (ArithmeticError, ValueError):
                    continue
                g1 += ((p1 - term1) / h * Sigma_se[a, b]) ** 2
                g2 += ((p2 - term2) / h * Sigma_se[a, b]) ** 2
        sig_se1, sig_se2 = math.sqrt(g1), math.sqrt(g2)
    term1_se = math.hypot(t1_se, sig_se1)
    term2_se = math.hypot(t2_se, sig_se2)

    cond = float(lam[0] / lam[-1])
    notes = []
    if cond > 1e8:
        notes.append(f"Sigma is ill-conditioned (condition number {cond:.3g})")
    literal = None
    if paper_literal:
        sd, sd_se = mtable.diagonal_variance_sum()
        lt1, _ = _terms(f, d, k, sd, sv)
        lt1_se = lt1 / math.sqrt(sd) * _sqrt_se(sd, sd_se) if sd > 0 else 0.0
        literal = {"term1": lt1, "term2": term2, "total": lt1 + term2,
                   "total_std_error": math.hypot(lt1_se, t2_se)}
    return BoundReport(
        Sigma=Sigma, Sigma_std_error=np.zeros_like(Sigma) if Sigma_se is None else np.asarray(Sigma_se),
        C=C, factors=f, k=k, d=d, term1=term1, term2=term2, total=term1 + term2,
        term1_se=term1_se, term2_se=term2_se, total_se=math.hypot(term1_se, term2_se),
        mtable=mtable, condition=cond, paper_literal=literal, notes=notes,
    )


@dataclass
class ModelBound:
    report: BoundReport
    covariance: CovarianceResult
    mean: np.ndarray
    mean_se: np.ndarray


def bound_for_model(model: UStatModel, budget: Optional[IntegrationBudget] = None, seed: int = 0,
                    wiring: str = "expansion", paper_literal: bool = False, C=None) -> ModelBound:
    """Full pipeline: E[F], Sigma, M-table, assembled bound."""
    budget = budget or IntegrationBudget()
    C = model.targetC if C is None else np.asarray(C, dtype=float)
    cov = covariance(model, budget, seed)
    if cov.singular:
        raise SingularCovariance(f"covariance is numerically singular (eigenvalues {cov.eigenvalues.tolist()})")
    means = [expectation(model, i, budget, seed) for i in range(1, model.dimension + 1)]
    mtable = compute_mtable(model, budget, seed, wiring)
    report = assemble_bound(model, C, mtable, cov.Sigma, cov.std_error, paper_literal)
    report.provenance = {"seed": seed, "budget": budget.to_dict(), "wiring": wiring,
                         "paper_literal": paper_literal, "model": model.to_dict()}
    report.notes = list(model.warnings) + report.notes
    return ModelBound(report, cov, np.array([m.value for m in means]), np.array([m.std_error for m in means]))
