"""Integration of batched functions over E^n against the product measure mu^n.

Integrands take an array of shape ``(N, n, D)`` (N points of E^n) and return
``N`` values. Low-dimensional integrals use a tensor midpoint rule; the rest
use seeded Monte Carlo, optionally with a locality tree (see
:class:`LocalityTree`) for integrands that vanish unless certain variables
are close to each other.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng
from .model import IntensityMeasure


class IntegrationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class IntegrationBudget:
    nodes_per_dim: int = 1024
    tensor_dim_cap: int = 6
    max_tensor_nodes: int = 2 ** 21
    mc_samples: int = 2 ** 20
    chunk: int = 2 ** 16

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name == "tensor_dim_cap":
                if value < 0:
                    raise ValueError("tensor_dim_cap must be >= 0")
            elif value < 1:
                raise ValueError(f"{name} must be positive")

    def uses_tensor(self, total_dim: int) -> bool:
        if total_dim == 0:
            return True
        if total_dim > self.tensor_dim_cap:
            return False
        return self.nodes_per_dim ** total_dim <= self.max_tensor_nodes

    def replace(self, **kw) -> "IntegrationBudget":
        return IntegrationBudget(**{**asdict(self), **kw})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IntegrationResult:
    value: float
    std_error: float
    method: str  # "tensor" | "montecarlo"
    samples_or_nodes: int

    def __add__(self, other: "IntegrationResult") -> "IntegrationResult":
        method = "tensor" if self.method == other.method == "tensor" else "montecarlo"
        return IntegrationResult(
            self.value + other.value,
            math.hypot(self.std_error, other.std_error),
            method,
            self.samples_or_nodes + other.samples_or_nodes,
        )

    def scaled(self, c: float) -> "IntegrationResult":
        return IntegrationResult(c * self.value, abs(c) * self.std_error, self.method, self.samples_or_nodes)


ZERO = IntegrationResult(0.0, 0.0, "tensor", 0)


@dataclass(frozen=True)
class LocalityTree:
    """Sampling tree over the n integration variables.

    ``parents[v] == -1`` marks a root, drawn from the normalised intensity.
    Otherwise variable v is drawn uniformly from the cube of half-width
    ``reach[v]`` around its parent, which is unbiased as long as the
    integrand vanishes when ``|x_v - x_parent| > reach[v]``.
    """

    parents: tuple
    reach: tuple

    def __post_init__(self):
        if len(self.parents) != len(self.reach):
            raise ValueError("parents and reach must have equal length")
        for v, p in enumerate(self.parents):
            if p >= v:
                raise ValueError("parents must precede children")
            if p >= 0 and not self.reach[v] > 0:
                raise ValueError("child variables need a positive reach")

    @classmethod
    def from_edges(cls, n: int, edges: dict) -> tuple["LocalityTree", list]:
        """Breadth-first spanning forest of ``edges`` ({(a, b): reach}).

        Returns the tree in a new variable order together with that order
        (``order[new] = old``).
        """
        adj = {v: [] for v in range(n)}
        for (a, b), r in edges.items():
            adj[a].append((b, r))
            adj[b].append((a, r))
        seen, order, parent_old, reach_old = set(), [], {}, {}
        for root in range(n):
            if root in seen:
                continue
            seen.add(root)
            queue = [root]
            parent_old[root], reach_old[root] = -1, 0.0
            while queue:
                v = queue.pop(0)
                order.append(v)
                for w, r in sorted(adj[v]):
                    if w not in seen:
                        seen.add(w)
                        parent_old[w], reach_old[w] = v, r
                        queue.append(w)
        pos = {old: new for new, old in enumerate(order)}
        parents = tuple(-1 if parent_old[o] < 0 else pos[parent_old[o]] for o in order)
        reach = tuple(float(reach_old[o]) for o in order)
        return cls(parents, reach), order

    @property
    def trivial(self) -> bool:
        return all(p < 0 for p in self.parents)


def _tensor(f, measure: IntensityMeasure, n: int, budget: IntegrationBudget) -> IntegrationResult:
    D = measure.dim
    m = budget.nodes_per_dim
    lo = np.asarray(measure.space.lower)
    width = np.asarray(measure.space.upper) - lo
    axis_nodes = lo + width * ((np.arange(m) + 0.5) / m)[:, None]  # (m, D)
    total = m ** (n * D)
    cell = (measure.scale * float(np.prod(width)) / m ** D) ** n
    shape = (m,) * (n * D)
    acc = []
    for start in range(0, total, budget.chunk):
        idx = np.arange(start, min(start + budget.chunk, total))
        multi = np.stack(np.unravel_index(idx, shape), axis=-1).reshape(-1, n, D)
        X = axis_nodes[multi, np.arange(D)]
        vals = np.asarray(f(X), dtype=float)
        if not measure.uniform:
            vals = vals * np.prod(measure.rho(X.reshape(-1, D)).reshape(-1, n), axis=1)
        if not np.all(np.isfinite(vals)):
            raise IntegrationError("integrand returned non-finite values")
        acc.append(math.fsum(vals))
    return IntegrationResult(math.fsum(acc) * cell, 0.0, "tensor", total)


def _draw(measure: IntensityMeasure, tree: Optional[LocalityTree], n: int, count: int,
          gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    D = measure.dim
    mass = measure.total_mass
    if tree is None or tree.trivial:
        X = measure.sample_points(gen, count * n).reshape(count, n, D)
        return X, np.full(count, mass ** n)
    X = np.empty((count, n, D))
    w = np.ones(count)
    for v, p in enumerate(tree.parents):
        if p < 0:
            X[:, v, :] = measure.sample_points(gen, count)
            w *= mass
        else:
            R = tree.reach[v]
            X[:, v, :] = X[:, p, :] + R * (2.0 * gen.random((count, D)) - 1.0)
            w *= measure.scale * (2.0 * R) ** D * measure.rho(X[:, v, :])
    return X, w


def _combine(stats: Sequence[tuple[int, float, float]]) -> tuple[int, float, float]:
    n_tot, mean, m2 = 0, 0.0, 0.0
    for n, mu, s2 in stats:
        if n == 0:
            continue
        delta = mu - mean
        new = n_tot + n
        mean += delta * n / new
        m2 += s2 + delta * delta * n_tot * n / new
        n_tot = new
    return n_tot, mean, m2


def _montecarlo(f, measure, n, budget, seed, label, tree) -> IntegrationResult:
    sizes = rng.chunk_sizes(budget.mc_samples, budget.chunk)

    def run(job):
        c, size = job
        gen = rng.generator(seed, "mc", *label, c)
        X, w = _draw(measure, tree, n, size, gen)
        nz = w != 0
        vals = np.zeros(size)
        if np.any(nz):
            fx = np.asarray(f(X[nz]), dtype=float)
            if not np.all(np.isfinite(fx)):
                raise IntegrationError("integrand returned non-finite values")
            vals[nz] = fx * w[nz]
        mu = float(np.mean(vals))
        return size, mu, float(np.sum((vals - mu) ** 2))

    count, mean, m2 = _combine(rng.pmap(run, list(enumerate(sizes))))
    var = m2 / (count - 1) if count > 1 else 0.0
    return IntegrationResult(mean, math.sqrt(var / count), "montecarlo", count)


def integrate(f: Callable[[np.ndarray], np.ndarray], measure: IntensityMeasure, n: int,
              budget: Optional[IntegrationBudget] = None, seed: int = 0, label: tuple = (),
              tree: Optional[LocalityTree] = None) -> IntegrationResult:
    """``∫_{E^n} f d mu^n``.

    Tensor midpoint rule when ``n*D <= tensor_dim_cap`` and the grid has at
    most ``max_tensor_nodes`` points, otherwise Monte Carlo with
    ``mc_samples`` draws split into fixed chunks, each on its own sub-stream
    of ``(seed, label, chunk)``. Chunk statistics are merged in index order,
    so the result does not depend on the worker count.
    """
    budget = budget or IntegrationBudget()
    if n < 0:
        raise ValueError("arity must be >= 0")
    if n == 0:
        val = float(np.asarray(f(np.zeros((1, 0, measure.dim))), dtype=float).reshape(-1)[0])
        if not math.isfinite(val):
            raise IntegrationError("integrand returned a non-finite value")
        return IntegrationResult(val, 0.0, "tensor", 1)
    if not measure.total_mass > 0:
        raise IntegrationError("zero-mass measure")
    if tree is not None and len(tree.parents) != n:
        raise ValueError("locality tree size does not match arity")
    if budget.uses_tensor(n * measure.dim):
        return _tensor(f, measure, n, budget)
    return _montecarlo(f, measure, n, budget, seed, tuple(label), tree)
