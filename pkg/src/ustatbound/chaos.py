"""Chaos kernels, means and covariances of Poisson U-statistics, and exact
moment arithmetic for simple (box-indicator) functions."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Optional, Sequence

import numpy as np

from . import linalg, rng
from .model import GroundSpace, IntensityMeasure, UStatModel
from .partitions import enumerate_pi
from .products import Factor, product_integral
from .quadrature import IntegrationBudget, IntegrationResult, integrate
from .simulate import PointConfiguration, _tuple_index, eval_ustat


class SingularCovariance(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# kernel projections


class KernelProjection:
    """``f_i^{(n)}(z) = binom(k, n) ∫ phi_i(z, x) mu^{k-n}(dx)`` as a callable.

    Components ``i`` are 1-based. Evaluations are memoised per point; Monte
    Carlo evaluations draw from a stream keyed by ``(seed, i, n, point)`` so
    repeated calls return identical values.
    """

    def __init__(self, model: UStatModel, i: int, n: int, budget: Optional[IntegrationBudget] = None,
                 seed: int = 0, use_closed_form: bool = True):
        if not 1 <= i <= model.dimension:
            raise ValueError(f"component {i} out of range 1..{model.dimension}")
        if n < 1:
            raise ValueError("level n must be >= 1")
        self.model = model
        self.i = i
        self.n = n
        self.kernel = model.kernels[i - 1]
        self.prefactor = math.comb(self.kernel.order, n) if n <= self.kernel.order else 0
        self.budget = budget or IntegrationBudget()
        self.seed = seed
        self.use_closed_form = use_closed_form
        self._cache: dict = {}
        self._lock = threading.Lock()

    @property
    def free(self) -> int:
        return self.kernel.order - self.n

    def _one(self, z: np.ndarray) -> tuple[float, float]:
        key = z.tobytes()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        measure = self.model.measure
        kernel = self.kernel
        space = measure.space
        if kernel.reach is not None:
            # every free argument lies within reach of the first fixed one
            lo = np.maximum(z[0] - kernel.reach, space.lower)
            hi = np.minimum(z[0] + kernel.reach, space.upper)
            if np.any(hi <= lo):
                res = (0.0, 0.0)
                with self._lock:
                    self._cache[key] = res
                return res
            measure = IntensityMeasure(GroundSpace(lo, hi), measure.scale, measure.density, measure.density_max)
        k = kernel.order

        def f(X):
            full = np.concatenate([np.broadcast_to(z, (len(X),) + z.shape), X], axis=1)
            return kernel(full)

        seed = rng.subseed(self.seed, "projection", self.i, self.n, z)
        out = integrate(f, measure, k - self.n, self.budget, seed)
        res = (self.prefactor * out.value, self.prefactor * out.std_error)
        with self._lock:
            self._cache[key] = res
        return res

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values and standard errors at ``points`` of shape ``(P, n, D)``."""
        pts = np.asarray(points, dtype=float)
        D = self.model.measure.dim
        if pts.ndim == 2:
            pts = pts[None]
        pts = pts.reshape(len(pts), self.n, D)
        P = len(pts)
        if self.n > self.kernel.order:
            return np.zeros(P), np.zeros(P)
        if self.free == 0:
            return self.kernel(pts), np.zeros(P)
        if self.use_closed_form and self.free == 1:
            exact = self.kernel.partial_integral(pts, self.model.measure)
            if exact is not None:
                return self.prefactor * exact, np.zeros(P)
        vals = np.empty(P)
        ses = np.empty(P)
        for p in range(P):
            vals[p], ses[p] = self._one(np.ascontiguousarray(pts[p]))
        return vals, ses

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)[0]


def kernel_projection(model: UStatModel, i: int, n: int, budget: Optional[IntegrationBudget] = None,
                      seed: int = 0, use_closed_form: bool = True) -> KernelProjection:
    return KernelProjection(model, i, n, budget, seed, use_closed_form)


# ---------------------------------------------------------------------------
# expectation and covariance


def expectation(model: UStatModel, i: int, budget: Optional[IntegrationBudget] = None,
                seed: int = 0) -> IntegrationResult:
    """``E[F_i] = ∫ phi_i d mu^{k_i}`` (i is 1-based)."""
    kernel = model.kernels[i - 1]
    k = kernel.order
    factor = Factor(kernel, tuple(range(k - 1)) if k > 1 else (0,), (k - 1,) if k > 1 else ())
    return product_integral([factor], k, model.measure, budget, seed, ("mean", i))


def covariance_term(model: UStatModel, i: int, j: int, n: int, budget: Optional[IntegrationBudget] = None,
                    seed: int = 0) -> IntegrationResult:
    """``n! <f_i^{(n)}, f_j^{(n)}>``, integrated with the free arguments flattened."""
    ki = model.kernels[i - 1].order
    kj = model.kernels[j - 1].order
    if n > min(ki, kj):
        return IntegrationResult(0.0, 0.0, "tensor", 0)
    args = tuple(range(n))
    free_i = tuple(range(n, n + ki - n))
    free_j = tuple(range(n + ki - n, n + ki - n + kj - n))
    factors = [
        Factor(model.kernels[i - 1], args, free_i, math.comb(ki, n)),
        Factor(model.kernels[j - 1], args, free_j, math.comb(kj, n)),
    ]
    a, b = min(i, j), max(i, j)
    res = product_integral(factors, n + (ki - n) + (kj - n), model.measure, budget, seed, ("cov", a, b, n))
    return res.scaled(math.factorial(n))


@dataclass
class CovarianceResult:
    Sigma: np.ndarray
    std_error: np.ndarray
    eigenvalues: np.ndarray
    singular: bool
    condition: float
    terms: dict = field(default_factory=dict)

    @property
    def ill_conditioned(self) -> bool:
        return self.condition > 1e8

    def require_pd(self) -> np.ndarray:
        if self.singular:
            raise SingularCovariance(
                f"covariance is numerically singular (eigenvalues {self.eigenvalues.tolist()})")
        return self.Sigma


def covariance(model: UStatModel, budget: Optional[IntegrationBudget] = None, seed: int = 0) -> CovarianceResult:
    """``Sigma(i,j) = sum_n n! <f_i^{(n)}, f_j^{(n)}>`` with per-entry standard errors."""
    d = model.dimension
    S = np.zeros((d, d))
    E = np.zeros((d, d))
    terms = {}
    pairs = [(i, j) for i in range(1, d + 1) for j in range(i, d + 1)]

    def entry(pair):
        i, j = pair
        top = min(model.kernels[i - 1].order, model.kernels[j - 1].order)
        return [covariance_term(model, i, j, n, budget, seed) for n in range(1, top + 1)]

    for (i, j), parts in zip(pairs, rng.pmap(entry, pairs)):
        total = sum(parts[1:], parts[0])
        S[i - 1, j - 1] = S[j - 1, i - 1] = total.value
        E[i - 1, j - 1] = E[j - 1, i - 1] = total.std_error
        for n, part in enumerate(parts, start=1):
            terms[(i, j, n)] = part
    S = 0.5 * (S + S.T)
    _, lam = linalg.jacobi_eigen(S)
    top = float(np.max(np.abs(lam))) if lam.size else 0.0
    singular = bool(lam[-1] <= 1e-10 * top) if top > 0 else True
    cond = float(lam[0] / lam[-1]) if lam[-1] > 0 else math.inf
    return CovarianceResult(S, E, lam, singular, cond, terms)


# ---------------------------------------------------------------------------
# simple functions


def _boxes_overlap(a, b) -> bool:
    return bool(np.all(np.maximum(a[0], b[0]) < np.minimum(a[1], b[1])))


@dataclass(frozen=True)
class SimpleFunctionSpec:
    """``f = sum_k lam_k 1_{A_1^k x ... x A_n^k}`` with half-open boxes.

    Each box is a pair ``(lo, hi)`` of D-vectors; boxes within a term must be
    pairwise disjoint so that f vanishes on diagonals.
    """

    order: int
    terms: tuple  # ((coef, ((lo, hi), ...)), ...)

    def __post_init__(self):
        norm = []
        for coef, boxes in self.terms:
            boxes = tuple((np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)) for lo, hi in boxes)
            if len(boxes) != self.order:
                raise ValueError("each term needs exactly `order` boxes")
            for a in range(len(boxes)):
                for b in range(a + 1, len(boxes)):
                    if _boxes_overlap(boxes[a], boxes[b]):
                        raise ValueError("boxes within a term overlap (function does not vanish on diagonals)")
            norm.append((float(coef), boxes))
        object.__setattr__(self, "terms", tuple(norm))

    @classmethod
    def indicator(cls, *boxes) -> "SimpleFunctionSpec":
        return cls(len(boxes), ((1.0, tuple(boxes)),))

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(len(X))
        for coef, boxes in self.terms:
            hit = np.ones(len(X), dtype=bool)
            for slot, (lo, hi) in enumerate(boxes):
                hit &= np.all((X[:, slot, :] >= lo) & (X[:, slot, :] < hi), axis=-1)
            out += coef * hit
        return out

    def symmetrized(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        perms = list(permutations(range(self.order)))
        return sum(self(X[:, list(p), :]) for p in perms) / len(perms)


def _intersection_mass(boxes, measure: IntensityMeasure) -> float:
    lo = np.max([b[0] for b in boxes], axis=0)
    hi = np.min([b[1] for b in boxes], axis=0)
    if np.any(hi <= lo):
        return 0.0
    return measure.mass(lo, hi)


def multiple_integral_simple(f: SimpleFunctionSpec, config: PointConfiguration) -> float:
    """``I_n(f) = sum_k lam_k prod_j (N(A_j) - mu(A_j))``."""
    space = config.measure.space
    total = 0.0
    for coef, boxes in f.terms:
        prod = coef
        for lo, hi in boxes:
            if np.any(lo < space.lower) or np.any(hi > np.asarray(space.upper) + 1e-15):
                raise ValueError("box lies outside the ground space")
            prod *= config.count_in(lo, hi) - config.measure.mass(lo, hi)
        total += prod
    return total


def inner_product(f: SimpleFunctionSpec, g: SimpleFunctionSpec, measure: IntensityMeasure) -> float:
    """``<sym f, sym g>`` in ``L^2(mu^n)``, exactly."""
    if f.order != g.order:
        return 0.0
    perms = list(permutations(range(f.order)))
    total = 0.0
    for (cf, bf), (cg, bg) in product(f.terms, g.terms):
        for p in perms:
            m = 1.0
            for slot in range(f.order):
                m *= _intersection_mass([bf[slot], bg[p[slot]]], measure)
            total += cf * cg * m
    return total / len(perms)


def moment_formula(factors: Sequence[SimpleFunctionSpec], measure: IntensityMeasure) -> float:
    """``E[prod_i I_{n_i}(f_i)]`` as a sum over diagonal-free partitions.

    Each partition replaces the variables of a block by one variable; for box
    indicators the resulting integral is a product of intersection masses.
    """
    orders = [f.order for f in factors]
    parts = enumerate_pi(orders)
    total = 0.0
    for choice in product(*[f.terms for f in factors]):
        coef = float(np.prod([c for c, _ in choice]))
        if coef == 0.0:
            continue
        for pi in parts:
            m = coef
            for block in pi.blocks:
                m *= _intersection_mass([choice[lab.group - 1][1][lab.index - 1] for lab in block], measure)
                if m == 0.0:
                    break
            total += m
    return total


# ---------------------------------------------------------------------------
# difference operator


def iterated_difference(model: UStatModel, i: int, points, config: PointConfiguration) -> float:
    """``D_{z_1..z_n} F_i`` by inclusion-exclusion over added point subsets (i is 1-based)."""
    pts = np.asarray(points, dtype=float).reshape(-1, model.measure.dim)
    n = len(pts)
    if n < 1:
        raise ValueError("need at least one point")
    if n > 20:
        raise ValueError("iterated difference of order > 20 rejected (2^n evaluations)")
    total = 0.0
    for mask in range(1 << n):
        chosen = [j for j in range(n) if mask >> j & 1]
        sign = -1.0 if (n - len(chosen)) % 2 else 1.0
        total += sign * eval_ustat(model, i, config.added(pts[chosen]))
    return total


def difference_operator(model: UStatModel, i: int, z, config: PointConfiguration) -> np.ndarray:
    """``D_z F_i = k! sum_{S subset eta, |S| = k-1} phi_i(z, S)`` for each row of ``z``.

    Vectorised single-point difference; agrees with :func:`iterated_difference`
    at n = 1.
    """
    kernel = model.kernels[i - 1]
    k = kernel.order
    D = model.measure.dim
    z = np.asarray(z, dtype=float).reshape(-1, D)
    scale = math.factorial(k)
    if k == 1:
        return scale * kernel(z[:, None, :])
    n = len(config)
    if n < k - 1:
        return np.zeros(len(z))
    idx = _tuple_index(n, k - 1)
    rest = config.points[idx]  # (T, k-1, D)
    T = len(rest)
    out = np.empty(len(z))
    step = max(1, 2 ** 20 // max(T, 1))  # bounds the (P*T, k, D) argument array
    for s in range(0, len(z), step):
        zs = z[s:s + step]
        args = np.concatenate([np.broadcast_to(zs[:, None, None, :], (len(zs), T, 1, D)),
                               np.broadcast_to(rest[None], (len(zs), T, k - 1, D))], axis=2)
        out[s:s + step] = scale * kernel(args.reshape(-1, k, D)).reshape(len(zs), T).sum(axis=1)
    return out
