"""Empirical lower bounds on the smooth-function distance to N(0, C), and
moment diagnostics for normalised batches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng
from .simulate import SampleBatch


@dataclass(frozen=True)
class TestFunction:
    """``g(x) = c cos(<a, x> + b)`` with ``c = min(1/|a|, 1/|a|^2)`` (c = 1 at a = 0).

    The amplitude keeps the Lipschitz constant ``c|a|`` and the Hessian norm
    ``c|a|^2`` at most 1.
    """

    __test__ = False  # not a pytest class

    a: tuple
    b: float

    @property
    def amplitude(self) -> float:
        norm = math.sqrt(sum(x * x for x in self.a))
        if norm == 0.0:
            return 1.0
        return min(1.0 / norm, 1.0 / norm ** 2)

    @property
    def lipschitz(self) -> float:
        return self.amplitude * math.sqrt(sum(x * x for x in self.a))

    @property
    def hessian_norm(self) -> float:
        return self.amplitude * sum(x * x for x in self.a)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.amplitude * np.cos(np.asarray(X, dtype=float) @ np.asarray(self.a) + self.b)


def gaussian_expectation(a, b: float, C) -> float:
    """``E g(X)`` for ``X ~ N(0, C)``: ``c cos(b) exp(-a^T C a / 2)``."""
    a = np.asarray(a, dtype=float)
    C = np.asarray(C, dtype=float)
    c = TestFunction(tuple(a.tolist()), b).amplitude
    return c * math.cos(b) * math.exp(-0.5 * float(a @ C @ a))


def default_dictionary(d: int, seed: int = 0, directions: int = 64,
                       norms: Sequence[float] = (0.5, 1.0, 2.0, 4.0),
                       phases: Sequence[float] = (0.0, math.pi / 4)) -> list:
    gen = rng.generator(seed, "dictionary", d)
    u = gen.standard_normal((directions, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return [TestFunction(tuple((s * v).tolist()), float(b)) for v in u for s in norms for b in phases]


@dataclass
class DistanceReport:
    lower_bound: float
    lower_bound_se: float
    argmax: TestFunction
    discrepancies: np.ndarray
    std_errors: np.ndarray
    dictionary_size: int
    dictionary_spec: dict = field(default_factory=dict)

    @property
    def max_se(self) -> float:
        return float(np.max(self.std_errors))

    def to_dict(self) -> dict:
        return {
            "lower_bound": self.lower_bound,
            "lower_bound_std_error": self.lower_bound_se,
            "argmax": {"a": list(self.argmax.a), "b": self.argmax.b},
            "max_std_error": self.max_se,
            "dictionary": dict(self.dictionary_spec, size=self.dictionary_size),
        }


def empirical_delta_lower(batch: SampleBatch, C, dictionary: Optional[list] = None, seed: int = 0) -> DistanceReport:
    """``max_g |mean g(G) - E g(X)|`` over a finite dictionary of test functions."""
    if batch.G is None:
        raise ValueError("batch has no normalised rows; call simulate.normalize first")
    G = batch.G
    spec = {"kind": "custom"}
    if dictionary is None:
        dictionary = default_dictionary(G.shape[1], seed)
        spec = {"kind": "cosine", "directions": 64, "norms": [0.5, 1.0, 2.0, 4.0],
                "phases": [0.0, math.pi / 4], "seed": seed}
    if not dictionary:
        raise ValueError("empty test-function dictionary")
    R = len(G)
    disc = np.empty(len(dictionary))
    se = np.empty(len(dictionary))
    for idx, g in enumerate(dictionary):
        vals = g(G)
        disc[idx] = float(np.mean(vals)) - gaussian_expectation(g.a, g.b, C)
        se[idx] = float(np.std(vals, ddof=1)) / math.sqrt(R) if R > 1 else 0.0
    best = int(np.argmax(np.abs(disc)))
    return DistanceReport(float(abs(disc[best])), float(se[best]), dictionary[best], disc, se, len(dictionary), spec)


@dataclass
class MomentDiagnostics:
    cov_error: np.ndarray       # |Cov(G) - C| entrywise
    cov_se: np.ndarray
    skewness: np.ndarray
    skewness_se: np.ndarray
    excess_kurtosis: np.ndarray
    kurtosis_se: np.ndarray
    degenerate: bool

    @property
    def max_abs_kurtosis(self) -> float:
        return float(np.max(np.abs(self.excess_kurtosis)))

    def to_dict(self) -> dict:
        return {
            "cov_error": self.cov_error.tolist(),
            "cov_std_error": self.cov_se.tolist(),
            "skewness": self.skewness.tolist(),
            "skewness_std_error": self.skewness_se.tolist(),
            "excess_kurtosis": self.excess_kurtosis.tolist(),
            "kurtosis_std_error": self.kurtosis_se.tolist(),
            "degenerate": self.degenerate,
        }


def moment_diagnostics(batch: SampleBatch, C) -> MomentDiagnostics:
    """Covariance error against C plus per-coordinate skewness and excess kurtosis.

    Standard errors: sample spread of the centred products for covariance
    entries; ``sqrt(6/R)`` and ``sqrt(24/R)`` for skewness and kurtosis.
    """
    if batch.G is None:
        raise ValueError("batch has no normalised rows")
    G = batch.G
    R, d = G.shape
    if R < 10:
        raise ValueError(f"moment diagnostics need at least 10 replicates, got {R}")
    C = np.asarray(C, dtype=float)
    Gc = G - G.mean(axis=0)
    prods = Gc[:, :, None] * Gc[:, None, :]
    cov = prods.sum(axis=0) / (R - 1)
    cov_se = prods.std(axis=0, ddof=1) / math.sqrt(R)
    sd = Gc.std(axis=0)
    degenerate = bool(np.any(sd <= 1e-12 * max(1.0, float(np.max(np.abs(G))))))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, Gc / np.where(sd > 0, sd, 1.0), 0.0)
    skew = (z ** 3).mean(axis=0)
    kurt = (z ** 4).mean(axis=0) - 3.0
    if degenerate:
        skew = np.full(d, np.nan)
        kurt = np.full(d, np.nan)
    return MomentDiagnostics(
        cov_error=np.abs(cov - C),
        cov_se=cov_se,
        skewness=skew,
        skewness_se=np.full(d, math.sqrt(6.0 / R)),
        excess_kurtosis=kurt,
        kurtosis_se=np.full(d, math.sqrt(24.0 / R)),
        degenerate=degenerate,
    )
