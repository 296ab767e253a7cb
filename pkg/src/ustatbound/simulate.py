"""Poisson sampling, U-statistic evaluation and replicate batches."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from . import linalg, rng
from .model import IntensityMeasure, UStatModel

MAX_MASS = 1e7
MAX_TUPLES = 10 ** 8


class CostGuardError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    points: np.ndarray  # (N, D)
    measure: IntensityMeasure

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.measure.dim)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def count_in(self, lo, hi) -> int:
        """Number of points in the half-open box ``[lo, hi)``."""
        if len(self.points) == 0:
            return 0
        return int(np.count_nonzero(np.all((self.points >= lo) & (self.points < hi), axis=1)))

    def added(self, extra) -> "PointConfiguration":
        extra = np.asarray(extra, dtype=float).reshape(-1, self.measure.dim)
        return PointConfiguration(np.vstack([self.points, extra]), self.measure)


def sample_poisson(measure: IntensityMeasure, seed: int, *labels) -> PointConfiguration:
    """One realisation of the Poisson process with intensity ``measure``."""
    return _sample(measure, rng.generator(seed, "poisson", *labels))


def _sample(measure: IntensityMeasure, gen: np.random.Generator) -> PointConfiguration:
    mass = measure.total_mass
    if mass > MAX_MASS:
        raise CostGuardError(f"total mass {mass:g} exceeds {MAX_MASS:g}")
    count = int(gen.poisson(mass)) if mass > 0 else 0
    return PointConfiguration(measure.sample_points(gen, count), measure)


def _tuple_index(n: int, k: int) -> np.ndarray:
    if k == 1:
        return np.arange(n)[:, None]
    if k == 2:
        a, b = np.triu_indices(n, 1)
        return np.stack([a, b], axis=1)
    return np.array(list(combinations(range(n), k)), dtype=np.intp).reshape(-1, k)


def eval_ustat(model: UStatModel, i: int, config: PointConfiguration) -> float:
    """``F_i``: sum of ``phi_i`` over ordered tuples of distinct points (i is 1-based)."""
    kernel = model.kernels[i - 1]
    k = kernel.order
    n = len(config)
    if n < k:
        return 0.0
    if math.comb(n, k) > MAX_TUPLES:
        raise CostGuardError(f"binom({n}, {k}) kernel evaluations exceed {MAX_TUPLES:g}")
    idx = _tuple_index(n, k)
    vals = kernel(config.points[idx])
    return float(math.factorial(k) * np.sum(vals))


def eval_vector(model: UStatModel, config: PointConfiguration) -> np.ndarray:
    return np.array([eval_ustat(model, i, config) for i in range(1, model.dimension + 1)])


@dataclass(eq=False)
class SampleBatch:
    F: np.ndarray                    # (R, d)
    seed: int
    G: Optional[np.ndarray] = None   # (R, d)
    EF: Optional[np.ndarray] = None
    Sigma: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    normalizer: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def replicates(self) -> int:
        return len(self.F)

    def to_csv(self, path) -> None:
        d = self.F.shape[1]
        header = ["replicate"] + [f"F_{i + 1}" for i in range(d)] + [f"G_{i + 1}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in range(self.replicates):
                g = self.G[r] if self.G is not None else [float("nan")] * d
                w.writerow([r] + [repr(float(x)) for x in self.F[r]] + [repr(float(x)) for x in g])


def replicate(model: UStatModel, R: int, seed: int, block: int = 256) -> SampleBatch:
    """``R`` independent draws of F; replicate r uses the stream (seed, "replicate", r)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    starts = list(range(0, R, block))

    def run(start):
        rows = []
        for r in range(start, min(start + block, R)):
            config = _sample(model.measure, rng.generator(seed, "replicate", r))
            rows.append(eval_vector(model, config))
        return rows

    F = np.array([row for rows in rng.pmap(run, starts) for row in rows], dtype=float)
    return SampleBatch(F=F, seed=seed, meta={"R": R})


def normalize(batch: SampleBatch, EF, Sigma, C) -> SampleBatch:
    """Fill ``G = sqrt(C Sigma^-1) (F - EF)`` row-wise."""
    EF = np.asarray(EF, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    C = np.asarray(C, dtype=float)
    M = linalg.sqrt_similarity(C, Sigma)
    G = (batch.F - EF) @ M.T
    return SampleBatch(F=batch.F, seed=batch.seed, G=G, EF=EF, Sigma=Sigma, C=C, normalizer=M,
                       meta=dict(batch.meta))
