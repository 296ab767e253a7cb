"""Ground spaces, intensity measures, U-statistic kernels and built-in models."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng


class ModelError(ValueError):
    """Invalid model parameters."""


@dataclass(frozen=True)
class GroundSpace:
    """Axis-aligned box ``[lower, upper]`` in R^D."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lower)
        hi = tuple(float(x) for x in self.upper)
        if len(lo) == 0 or len(lo) != len(hi):
            raise ModelError("lower and upper must be non-empty and of equal length")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise ModelError("box bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ModelError(f"degenerate box: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "GroundSpace":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)

    def clip_box(self, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        lo = np.maximum(np.asarray(lo, dtype=float), self.lower)
        hi = np.minimum(np.asarray(hi, dtype=float), self.upper)
        return lo, np.maximum(hi, lo)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True, eq=False)
class IntensityMeasure:
    """``mu = scale * density * Lebesgue`` restricted to ``space``.

    ``density`` maps an ``(N, D)`` array to ``N`` non-negative values; ``None``
    means the constant 1. A non-constant density needs ``density_max`` so
    that points can be drawn by rejection.
    """

    space: GroundSpace
    scale: float = 1.0
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    density_max: Optional[float] = None
    _density_integral: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise ModelError(f"intensity scale must be finite and non-negative, got {self.scale}")
        if self.density is None:
            integral = self.space.volume
        else:
            if self.density_max is None or not self.density_max > 0:
                raise ModelError("a non-constant density needs a positive density_max")
            integral = _grid_integral(self.density, self.space.lower, self.space.upper)
            if not (math.isfinite(integral) and integral > 0):
                raise ModelError("density must have finite positive integral over the space")
        object.__setattr__(self, "_density_integral", float(integral))

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def uniform(self) -> bool:
        return self.density is None

    @property
    def total_mass(self) -> float:
        return self.scale * self._density_integral

    def rho(self, pts: np.ndarray) -> np.ndarray:
        """Density at ``pts`` (zero outside the space)."""
        pts = np.asarray(pts, dtype=float)
        inside = self.space.contains(pts)
        if self.density is None:
            return inside.astype(float)
        return np.where(inside, np.asarray(self.density(pts), dtype=float), 0.0)

    def mass(self, lo, hi) -> float:
        """mu of the box ``[lo, hi)`` intersected with the space."""
        lo, hi = self.space.clip_box(lo, hi)
        if np.any(hi <= lo):
            return 0.0
        if self.density is None:
            return self.scale * float(np.prod(hi - lo))
        return self.scale * _grid_integral(self.density, lo, hi)

    def with_scale(self, scale: float) -> "IntensityMeasure":
        return IntensityMeasure(self.space, scale, self.density, self.density_max)

    def sample_points(self, gen: np.random.Generator, count: int) -> np.ndarray:
        """``count`` i.i.d. points from the normalised density."""
        lo = np.asarray(self.space.lower)
        width = np.asarray(self.space.upper) - lo
        if self.density is None:
            return lo + width * gen.random((count, self.dim))
        out = np.empty((0, self.dim))
        while len(out) < count:
            need = count - len(out)
            cand = lo + width * gen.random((2 * need + 16, self.dim))
            keep = gen.random(len(cand)) * self.density_max < self.density(cand)
            out = np.vstack([out, cand[keep][:need]])
        return out

    def to_dict(self) -> dict:
        d = {"space": self.space.to_dict(), "scale": self.scale}
        d["density"] = "constant" if self.density is None else "custom"
        return d


def _grid_integral(func, lo, hi, nodes: int = 256) -> float:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dim = len(lo)
    nodes = max(8, int(round(nodes ** (2 / dim)))) if dim > 2 else nodes
    axes = [(np.arange(nodes) + 0.5) / nodes * (b - a) + a for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    return float(np.mean(func(grid)) * np.prod(hi - lo))


# ---------------------------------------------------------------------------
# exact partial integrals of distance kernels


def _quadrant_area(x, y, r):
    """Area of the disk of radius r (centre 0) inside [0,x]x[0,y], signed."""
    sx, sy = np.sign(x), np.sign(y)
    x = np.minimum(np.abs(x), r)
    y = np.minimum(np.abs(y), r)
    inside = x * x + y * y <= r * r
    xs = np.sqrt(np.maximum(r * r - y * y, 0.0))

    def prim(u):
        return 0.5 * (u * np.sqrt(np.maximum(r * r - u * u, 0.0)) + r * r * np.arcsin(np.clip(u / r, -1, 1)))

    outside = y * xs + prim(x) - prim(xs)
    return sx * sy * np.where(inside, x * y, outside)


def disk_box_area(centres: np.ndarray, r: float, lo, hi) -> np.ndarray:
    """Area of ``B(c, r) ∩ [lo, hi]`` for each row ``c`` of ``centres`` (D=2)."""
    c = np.asarray(centres, dtype=float)
    x0, x1 = lo[0] - c[:, 0], hi[0] - c[:, 0]
    y0, y1 = lo[1] - c[:, 1], hi[1] - c[:, 1]
    q = _quadrant_area
    return np.maximum(q(x1, y1, r) - q(x0, y1, r) - q(x1, y0, r) + q(x0, y0, r), 0.0)


def ball_box_volume(centres: np.ndarray, r: float, space: GroundSpace) -> Optional[np.ndarray]:
    """Volume of ``B(c, r) ∩ space``; exact for D <= 2, ``None`` otherwise."""
    c = np.asarray(centres, dtype=float)
    if space.dim == 1:
        lo = np.maximum(c[:, 0] - r, space.lower[0])
        hi = np.minimum(c[:, 0] + r, space.upper[0])
        return np.maximum(hi - lo, 0.0)
    if space.dim == 2:
        return disk_box_area(c, r, space.lower, space.upper)
    return None


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True, eq=False)
class Kernel:
    """Symmetric kernel ``phi: E^order -> R`` evaluated on batches.

    ``func`` takes an array of shape ``(N, order, D)`` and returns ``N``
    values. ``reach`` (if set) promises ``phi == 0`` whenever two arguments
    are more than ``reach`` apart. ``partial`` (if set) returns the exact
    integral of phi over its last argument against a uniform-density measure,
    given the first ``order - 1`` arguments.
    """

    order: int
    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "kernel"
    symmetric: bool = True
    indicator: bool = False
    nonnegative: bool = False
    bound: Optional[float] = None
    reach: Optional[float] = None
    partial: Optional[Callable[[np.ndarray, IntensityMeasure], Optional[np.ndarray]]] = None
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ModelError("kernel order must be >= 1")

    def __call__(self, args: np.ndarray) -> np.ndarray:
        args = np.asarray(args, dtype=float)
        if args.ndim == 2:
            args = args[None]
        return np.asarray(self.func(args), dtype=float).reshape(len(args))

    def partial_integral(self, fixed: np.ndarray, measure: IntensityMeasure) -> Optional[np.ndarray]:
        """``∫ phi(fixed..., x) mu(dx)`` exactly, or ``None`` if unavailable."""
        if self.partial is None or not measure.uniform:
            return None
        return self.partial(np.asarray(fixed, dtype=float), measure)

    def to_dict(self) -> dict:
        return dict(self.spec)


def constant_kernel(value: float = 1.0, dim: int = 2) -> Kernel:
    value = float(value)
    return Kernel(
        order=1,
        func=lambda X: np.full(len(X), value),
        dim=dim,
        name="constant",
        indicator=value == 1.0,
        nonnegative=value >= 0,
        bound=abs(value),
        spec={"type": "constant", "value": value},
    )


def box_table_kernel(boxes: Sequence, values: Sequence[float], dim: int) -> Kernel:
    """Order-1 piecewise-constant kernel ``sum_l v_l 1_{box_l}``; boxes are half-open."""
    los = np.array([[iv[0] for iv in b] for b in boxes], dtype=float)
    his = np.array([[iv[1] for iv in b] for b in boxes], dtype=float)
    vals = np.asarray(values, dtype=float)
    if los.shape != (len(vals), dim) or np.any(his <= los):
        raise ModelError("box table must list one non-degenerate D-dimensional box per value")

    def func(X):
        x = X[:, 0, :]
        hit = np.all((x[:, None, :] >= los) & (x[:, None, :] < his), axis=-1)
        return hit.astype(float) @ vals

    single = len(vals) == 1 and vals[0] == 1.0
    return Kernel(
        order=1,
        func=func,
        dim=dim,
        name="box" if single else "box-table",
        indicator=single,
        nonnegative=bool(np.all(vals >= 0)),
        bound=float(np.abs(vals).sum()),
        spec={"type": "boxes", "boxes": [[list(map(float, iv)) for iv in b] for b in boxes], "values": vals.tolist()},
    )


def box_indicator(box: Sequence, dim: int) -> Kernel:
    return box_table_kernel([box], [1.0], dim)


def distance_steps_kernel(steps: Sequence[Sequence[float]], dim: int) -> Kernel:
    """Order-2 kernel ``sum_l v_l 1[|z1 - z2| <= r_l]`` (Euclidean norm)."""
    radii = np.array([s[0] for s in steps], dtype=float)
    vals = np.array([s[1] for s in steps], dtype=float)
    if len(radii) == 0 or np.any(radii <= 0) or not np.all(np.isfinite(radii)):
        raise ModelError("distance radii must be positive and finite")

    def func(X):
        d2 = np.sum((X[:, 0, :] - X[:, 1, :]) ** 2, axis=-1)
        return (d2[:, None] <= radii * radii).astype(float) @ vals

    def partial(fixed, measure):
        out = np.zeros(len(fixed))
        for r, v in zip(radii, vals):
            vol = ball_box_volume(fixed[:, 0, :], r, measure.space)
            if vol is None:
                return None
            out += v * vol
        return measure.scale * out

    single = len(vals) == 1 and vals[0] == 1.0
    return Kernel(
        order=2,
        func=func,
        dim=dim,
        name=f"edges(r={radii[0]:g})" if single else "distance-table",
        indicator=single,
        nonnegative=bool(np.all(vals >= 0)),
        bound=float(np.abs(vals).sum()),
        reach=float(radii.max()),
        partial=partial,
        spec={"type": "distance", "steps": [[float(r), float(v)] for r, v in zip(radii, vals)]},
    )


def edge_kernel(r: float, dim: int) -> Kernel:
    return distance_steps_kernel([[r, 1.0]], dim)


def kernel_from_dict(spec: dict, dim: int) -> Kernel:
    kind = spec.get("type")
    if kind == "constant":
        return constant_kernel(spec.get("value", 1.0), dim)
    if kind == "boxes":
        return box_table_kernel(spec["boxes"], spec.get("values", [1.0] * len(spec["boxes"])), dim)
    if kind == "distance":
        return distance_steps_kernel(spec["steps"], dim)
    raise ModelError(f"unknown kernel type: {kind!r}")


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True, eq=False)
class UStatModel:
    """Vector ``F = (F_1..F_d)`` of Poisson U-statistics plus target covariance C."""

    measure: IntensityMeasure
    kernels: tuple
    targetC: np.ndarray
    name: str = "custom"
    params: dict = field(default_factory=dict)
    warnings: tuple = ()

    def __post_init__(self):
        kernels = tuple(self.kernels)
        object.__setattr__(self, "kernels", kernels)
        if len(kernels) < 2:
            raise ModelError("a model needs at least two components")
        for k in kernels:
            if k.dim != self.measure.dim:
                raise ModelError("kernel dimension does not match the ground space")
        C = np.array(self.targetC, dtype=float)
        if C.shape != (len(kernels), len(kernels)) or not np.all(np.isfinite(C)):
            raise ModelError("targetC must be a finite d x d matrix")
        if np.max(np.abs(C - C.T)) > 1e-12 * max(np.max(np.abs(C)), 1.0):
            raise ModelError("targetC must be symmetric")
        C.setflags(write=False)
        object.__setattr__(self, "targetC", C)

    @property
    def dimension(self) -> int:
        return len(self.kernels)

    @property
    def orders(self) -> tuple:
        return tuple(k.order for k in self.kernels)

    @property
    def max_order(self) -> int:
        return max(self.orders)

    def with_scale(self, t: float) -> "UStatModel":
        params = dict(self.params, t=float(t))
        return UStatModel(self.measure.with_scale(t), self.kernels, self.targetC, self.name, params, self.warnings)

    def with_target(self, C) -> "UStatModel":
        return UStatModel(self.measure, self.kernels, np.asarray(C, dtype=float), self.name, self.params, self.warnings)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "measure": self.measure.to_dict(),
            "kernels": [dict(k.to_dict(), order=k.order) for k in self.kernels],
            "C": self.targetC.tolist(),
        }


BUILTIN_MODELS = ("order1-pair", "count-and-edges", "two-radii-edges")


def _box_param(value, dim: int, what: str) -> list:
    box = [list(map(float, iv)) for iv in value]
    if len(box) != dim or any(len(iv) != 2 or iv[0] >= iv[1] for iv in box):
        raise ModelError(f"{what} must be {dim} intervals [lo, hi] with lo < hi")
    return box


def builtin_model(name: str, params: Optional[dict] = None) -> UStatModel:
    """Instantiate one of the built-in models on the unit box ``[0,1]^D``.

    ``order1-pair``: ``F = (N(A), N(B))`` (params ``A``, ``B``).
    ``count-and-edges``: ``F = (N(E), 2 * #edges at radius r)``.
    ``two-radii-edges``: ordered-pair edge counts at radii ``r[0] < r[1]``.

    Shared params: ``D`` (default 2), ``t`` (default 1), ``C`` (default I).
    """
    params = dict(params or {})
    dim = int(params.get("D", 2))
    if dim < 1:
        raise ModelError("D must be a positive integer")
    t = float(params.get("t", 1.0))
    if not (math.isfinite(t) and t > 0):
        raise ModelError(f"non-positive intensity scale t={t}")
    space = GroundSpace.unit(dim)
    measure = IntensityMeasure(space, t)
    notes = []

    if name == "order1-pair":
        half = [[0.0, 0.5]] + [[0.0, 0.5]] * (dim - 1)
        A = _box_param(params.get("A", half), dim, "A")
        B = _box_param(params.get("B", [[0.5, 1.0]] + [[0.0, 0.5]] * (dim - 1)), dim, "B")
        kernels = (box_indicator(A, dim), box_indicator(B, dim))
        stored = {"D": dim, "t": t, "A": A, "B": B}
    elif name == "count-and-edges":
        r = float(params.get("r", 0.1))
        if not r > 0:
            raise ModelError(f"non-positive radius r={r}")
        kernels = (constant_kernel(1.0, dim), edge_kernel(r, dim))
        stored = {"D": dim, "t": t, "r": r}
    elif name == "two-radii-edges":
        radii = [float(x) for x in params.get("r", [0.05, 0.10])]
        if len(radii) != 2 or min(radii) <= 0:
            raise ModelError("two-radii-edges needs two positive radii")
        if radii[0] >= radii[1]:
            msg = f"r_1={radii[0]} >= r_2={radii[1]}: covariance may be near-degenerate"
            warnings.warn(msg, stacklevel=2)
            notes.append(msg)
        kernels = tuple(edge_kernel(r, dim) for r in radii)
        stored = {"D": dim, "t": t, "r": radii}
    else:
        raise ModelError(f"unknown model name: {name!r}")

    C = np.asarray(params.get("C", np.eye(len(kernels))), dtype=float)
    if "C" in params:
        stored["C"] = C.tolist()
    model = UStatModel(measure, kernels, C, name, stored, tuple(notes))
    check_integrable(model)
    return model


def model_from_dict(spec: dict) -> UStatModel:
    """Builds a model from ``{"name": ..., "params": {...}}`` or an inline kernel table.

    Inline form: ``{"kernels": [...], "params": {"D", "t", "lower", "upper"}}``
    where each kernel is ``{"type": "boxes"|"distance"|"constant", ...}``.
    """
    params = dict(spec.get("params", {}))
    if "kernels" not in spec:
        if "name" not in spec:
            raise ModelError("model needs a name or an inline kernel table")
        return builtin_model(spec["name"], params)
    dim = int(params.get("D", 2))
    lower = params.get("lower", [0.0] * dim)
    upper = params.get("upper", [1.0] * dim)
    t = float(params.get("t", 1.0))
    if not (math.isfinite(t) and t > 0):
        raise ModelError(f"non-positive intensity scale t={t}")
    measure = IntensityMeasure(GroundSpace(lower, upper), t)
    kernels = tuple(kernel_from_dict(k, dim) for k in spec["kernels"])
    C = np.asarray(params.get("C", np.eye(len(kernels))), dtype=float)
    stored = {"D": dim, "t": t, "lower": list(map(float, lower)), "upper": list(map(float, upper))}
    model = UStatModel(measure, kernels, C, spec.get("name", "inline"), stored)
    check_integrable(model)
    return model


def check_integrable(model: UStatModel, samples: int = 4096, seed: int = 0) -> None:
    """Cheap Monte Carlo check that each ``∫|phi| dmu^k`` is finite."""
    m = model.measure
    for idx, k in enumerate(model.kernels):
        gen = rng.generator(seed, "integrability", idx)
        X = m.sample_points(gen, samples * k.order).reshape(samples, k.order, m.dim)
        vals = k(X)
        if not np.all(np.isfinite(vals)):
            raise ModelError(f"kernel {idx + 1} returned non-finite values")
        est = m.total_mass ** k.order * float(np.mean(np.abs(vals)))
        if not math.isfinite(est):
            raise ModelError(f"kernel {idx + 1} is not integrable")


@dataclass(frozen=True)
class SymmetryReport:
    passed: bool
    max_deviation: float
    trials: int


def validate_symmetry(kernel: Kernel, trials: int = 1000, seed: int = 0,
                      space: Optional[GroundSpace] = None) -> SymmetryReport:
    """Spot-check permutation invariance on random points and permutations."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if kernel.order == 1:
        return SymmetryReport(True, 0.0, trials)
    space = space or GroundSpace.unit(kernel.dim)
    gen = rng.generator(seed, "symmetry", kernel.name)
    lo = np.asarray(space.lower)
    width = np.asarray(space.upper) - lo
    X = lo + width * gen.random((trials, kernel.order, kernel.dim))
    perms = np.array([p for p in permutations(range(kernel.order)) if list(p) != sorted(p)])
    choice = perms[gen.integers(len(perms), size=trials)]
    Xp = np.take_along_axis(X, choice[:, :, None], axis=1)
    a, b = kernel(X), kernel(Xp)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ModelError("kernel evaluation returned non-finite values")
    dev = float(np.max(np.abs(a - b)))
    tol = 0.0 if kernel.indicator else 1e-12
    return SymmetryReport(dev <= tol, dev, trials)
