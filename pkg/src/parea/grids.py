"""Grid domains, node-sampled fields, and finite-difference calculus.

Everything downstream works on node-centered rectangular grids: a box
[lower_i, upper_i] per axis with counts_i nodes including both endpoints.
Derivatives use second-order central differences at interior nodes and
second-order one-sided three-point stencils on the faces, so every operator
is total on the stored data and exact on per-axis quadratic polynomials.
Integration is the tensor-product trapezoidal rule (exact on per-axis
linear integrands).

Fields are immutable after construction and all operations here are pure,
so values can be shared freely between threads. Flat value ordering is C
order (last axis varies fastest); the file format in `fieldio` relies on
this.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MIN_DIMENSION = 2
MAX_DIMENSION = 6
MIN_COUNT = 5


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C", copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridDomain:
    """Axis-aligned box in R^m with a fixed number of nodes per axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            (u - l) / (n - 1) for l, u, n in zip(self.lower, self.upper, self.counts)
        )

    @property
    def node_count(self) -> int:
        return int(np.prod(self.counts))

    @property
    def diameter(self) -> float:
        return math.sqrt(sum((u - l) ** 2 for l, u in zip(self.lower, self.upper)))

    def axis_nodes(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.counts[axis])

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Full coordinate arrays, one per axis, each of shape `counts`."""
        axes = [self.axis_nodes(k) for k in range(self.m)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def boundary_mask(self) -> np.ndarray:
        """True at nodes lying on any face of the box."""
        mask = np.zeros(self.counts, dtype=bool)
        for axis in range(self.m):
            idx_lo = [slice(None)] * self.m
            idx_lo[axis] = 0
            idx_hi = [slice(None)] * self.m
            idx_hi[axis] = self.counts[axis] - 1
            mask[tuple(idx_lo)] = True
            mask[tuple(idx_hi)] = True
        return mask


def build_domain(m: int, lower: Sequence[float], upper: Sequence[float],
                 counts: Sequence[int]) -> GridDomain:
    """Validate and construct a grid domain."""
    if not (MIN_DIMENSION <= m <= MAX_DIMENSION):
        raise ValueError(
            f"dimension m={m} out of range [{MIN_DIMENSION}, {MAX_DIMENSION}]")
    lower = tuple(float(x) for x in lower)
    upper = tuple(float(x) for x in upper)
    counts = tuple(int(n) for n in counts)
    if len(lower) != m or len(upper) != m or len(counts) != m:
        raise ValueError("lower/upper/counts must each have m entries")
    for axis, n in enumerate(counts):
        if n < MIN_COUNT:
            raise ValueError(f"counts[{axis}]={n} too small (need >= {MIN_COUNT})")
    for axis, (l, u) in enumerate(zip(lower, upper)):
        if not u > l:
            raise ValueError(f"degenerate box on axis {axis}: [{l}, {u}]")
    return GridDomain(lower=lower, upper=upper, counts=counts)


@lru_cache(maxsize=None)
def pair_indices(m: int) -> tuple[tuple[int, int], ...]:
    """Strictly increasing index pairs (i, j), lexicographic."""
    return tuple(itertools.combinations(range(m), 2))


@lru_cache(maxsize=None)
def triple_indices(m: int) -> tuple[tuple[int, int, int], ...]:
    """Strictly increasing index triples (k, i, j), lexicographic."""
    return tuple(itertools.combinations(range(m), 3))


class ScalarField:
    """One real value per grid node."""

    def __init__(self, domain: GridDomain, values):
        arr = _frozen_array(values)
        if arr.shape != domain.counts:
            raise ValueError(f"values shape {arr.shape} != domain shape {domain.counts}")
        if not np.isfinite(arr).all():
            raise ValueError("non-finite value in scalar field")
        self.domain = domain
        self.values = arr

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel(order="C")

    def __repr__(self):
        return f"ScalarField(shape={self.domain.counts})"


class VectorField:
    """m real components per grid node, stacked as values[k] = component k."""

    def __init__(self, domain: GridDomain, values):
        arr = _frozen_array(values)
        if arr.shape != (domain.m,) + domain.counts:
            raise ValueError(
                f"values shape {arr.shape} != {(domain.m,) + domain.counts}")
        if not np.isfinite(arr).all():
            raise ValueError("non-finite value in vector field")
        self.domain = domain
        self.values = arr

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.domain, self.values[k])

    @property
    def components(self) -> tuple[ScalarField, ...]:
        return tuple(self.component(k) for k in range(self.domain.m))

    def norm(self) -> ScalarField:
        """Pointwise Euclidean norm."""
        return ScalarField(self.domain, np.sqrt(np.sum(self.values ** 2, axis=0)))

    def __repr__(self):
        return f"VectorField(m={self.domain.m}, shape={self.domain.counts})"


class SkewField:
    """Per-node skew-symmetric m x m matrix, stored as upper-triangle entries.

    entries[p] holds the (i, j) entry for pair_indices(m)[p]; reads of (j, i)
    are the negation and the diagonal reads zero, so antisymmetry holds by
    construction.
    """

    def __init__(self, domain: GridDomain, entries):
        arr = _frozen_array(entries)
        npairs = len(pair_indices(domain.m))
        if arr.shape != (npairs,) + domain.counts:
            raise ValueError(f"entries shape {arr.shape} != {(npairs,) + domain.counts}")
        if not np.isfinite(arr).all():
            raise ValueError("non-finite value in skew field")
        self.domain = domain
        self.entries = arr

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return pair_indices(self.domain.m)

    def pair_position(self, i: int, j: int) -> int:
        return self.pairs.index((i, j))

    def entry(self, i: int, j: int) -> np.ndarray:
        """Signed per-node entry (i, j); zero array on the diagonal."""
        if i == j:
            return np.zeros(self.domain.counts)
        if i < j:
            return self.entries[self.pair_position(i, j)]
        return -self.entries[self.pair_position(j, i)]

    def as_matrices(self) -> np.ndarray:
        """Dense per-node matrices, shape (node_count, m, m)."""
        m = self.domain.m
        n = self.domain.node_count
        out = np.zeros((n, m, m))
        for p, (i, j) in enumerate(self.pairs):
            flat = self.entries[p].ravel(order="C")
            out[:, i, j] = flat
            out[:, j, i] = -flat
        return out

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0

    def __repr__(self):
        return f"SkewField(m={self.domain.m}, shape={self.domain.counts})"


class Alternating3Field:
    """Per-node fully antisymmetric 3-tensor, stored on increasing triples.

    Empty for m < 3 (there are no strictly increasing triples).
    """

    def __init__(self, domain: GridDomain, entries):
        ntriples = len(triple_indices(domain.m))
        arr = _frozen_array(entries)
        if arr.shape != (ntriples,) + domain.counts:
            raise ValueError(
                f"entries shape {arr.shape} != {(ntriples,) + domain.counts}")
        if not np.isfinite(arr).all():
            raise ValueError("non-finite value in alternating field")
        self.domain = domain
        self.entries = arr

    @property
    def triples(self) -> tuple[tuple[int, int, int], ...]:
        return triple_indices(self.domain.m)

    def triple_position(self, k: int, i: int, j: int) -> int:
        return self.triples.index((k, i, j))

    def entry(self, k: int, i: int, j: int) -> np.ndarray:
        """Signed per-node entry for an arbitrary index triple."""
        if len({k, i, j}) < 3:
            return np.zeros(self.domain.counts)
        order = sorted((k, i, j))
        sign = _permutation_sign((k, i, j))
        return sign * self.entries[self.triple_position(*order)]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0

    def __repr__(self):
        return f"Alternating3Field(m={self.domain.m}, shape={self.domain.counts})"


def _permutation_sign(indices) -> int:
    sign = 1
    idx = list(indices)
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            if idx[a] > idx[b]:
                sign = -sign
    return sign


class SingularMask:
    """Boolean flag per node marking where a defining magnitude is below
    threshold * field_scale."""

    def __init__(self, domain: GridDomain, flags, threshold: float):
        if not threshold > 0:
            raise ValueError("threshold must be positive")
        arr = _frozen_array(flags, dtype=bool)
        if arr.shape != domain.counts:
            raise ValueError(f"flags shape {arr.shape} != domain shape {domain.counts}")
        self.domain = domain
        self.flags = arr
        self.threshold = float(threshold)

    @property
    def fraction(self) -> float:
        return float(self.flags.mean())

    def any(self) -> bool:
        return bool(self.flags.any())

    def __repr__(self):
        return f"SingularMask(fraction={self.fraction:.3g}, tau={self.threshold:g})"


def field_scale(field) -> float:
    """max(1, max-norm of the stored values); relative tolerances use this."""
    if isinstance(field, np.ndarray):
        arr = field
    elif isinstance(field, (SkewField, Alternating3Field)):
        arr = field.entries
    else:
        arr = field.values
    if arr.size == 0:
        return 1.0
    return max(1.0, float(np.max(np.abs(arr))))


def require_same_domain(*fields) -> GridDomain:
    domains = [f.domain for f in fields]
    first = domains[0]
    for d in domains[1:]:
        if d != first:
            raise ValueError("fields live on different domains")
    return first


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------

def sample(domain: GridDomain, evaluator: Callable) -> ScalarField:
    """Evaluate `evaluator(x1, ..., xm)` at every node.

    The evaluator receives full coordinate arrays (numpy broadcasting); a
    scalar return value is broadcast to the whole grid.
    """
    meshes = domain.meshes()
    values = np.asarray(evaluator(*meshes), dtype=float)
    values = np.broadcast_to(values, domain.counts)
    if not np.isfinite(values).all():
        raise ValueError("evaluator produced a non-finite value")
    return ScalarField(domain, values)


def sample_vector(domain: GridDomain, evaluators: Sequence[Callable]) -> VectorField:
    """Sample one evaluator per component."""
    if len(evaluators) != domain.m:
        raise ValueError("need exactly m component evaluators")
    comps = [sample(domain, ev).values for ev in evaluators]
    return VectorField(domain, np.stack(comps))


# --------------------------------------------------------------------------
# Stencils
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _derivative_matrix(n: int, h: float) -> np.ndarray:
    # Central differences inside, one-sided three-point rows on the faces.
    c = 0.5 / h
    mat = np.zeros((n, n))
    rows = np.arange(1, n - 1)
    mat[rows, rows - 1] = -c
    mat[rows, rows + 1] = c
    mat[0, 0], mat[0, 1], mat[0, 2] = -3.0 * c, 4.0 * c, -c
    mat[n - 1, n - 1], mat[n - 1, n - 2], mat[n - 1, n - 3] = 3.0 * c, -4.0 * c, c
    mat.setflags(write=False)
    return mat


def derivative_matrix(domain: GridDomain, axis: int) -> np.ndarray:
    """The 1-D differentiation matrix used along `axis` (read-only)."""
    return _derivative_matrix(domain.counts[axis], domain.spacing[axis])


def _apply_axis_matrix(mat: np.ndarray, values: np.ndarray,
                       axis: int) -> np.ndarray:
    # First and last axes reduce to plain matrix products; middle axes (m >= 3)
    # go through tensordot.
    if axis == 0:
        shape = values.shape
        return (mat @ values.reshape(shape[0], -1)).reshape(shape)
    if axis == values.ndim - 1:
        return values @ mat.T
    out = np.tensordot(mat, values, axes=(1, axis))
    return np.moveaxis(out, 0, axis)


def axis_derivative(domain: GridDomain, values: np.ndarray, axis: int) -> np.ndarray:
    """Apply the per-axis stencil to an array of shape domain.counts."""
    return _apply_axis_matrix(derivative_matrix(domain, axis), values, axis)


def axis_derivative_adjoint(domain: GridDomain, values: np.ndarray,
                            axis: int) -> np.ndarray:
    """Apply the transpose of the per-axis stencil (used by the solver)."""
    return _apply_axis_matrix(derivative_matrix(domain, axis).T, values, axis)


def gradient(f: ScalarField) -> VectorField:
    """Second-order discrete gradient; exact on per-axis quadratics."""
    domain = f.domain
    comps = [axis_derivative(domain, f.values, k) for k in range(domain.m)]
    return VectorField(domain, np.stack(comps))


def divergence(v: VectorField) -> ScalarField:
    """Sum of the per-axis stencils applied to matching components."""
    domain = v.domain
    acc = axis_derivative(domain, v.values[0], 0)
    for k in range(1, domain.m):
        acc = acc + axis_derivative(domain, v.values[k], k)
    return ScalarField(domain, acc)


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _trapezoid_vector(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    w.setflags(write=False)
    return w


def quadrature_weights(domain: GridDomain) -> np.ndarray:
    """Tensor-product trapezoid weight for every node, shape domain.counts."""
    out = _trapezoid_vector(domain.counts[0], domain.spacing[0])
    for axis in range(1, domain.m):
        w = _trapezoid_vector(domain.counts[axis], domain.spacing[axis])
        out = np.multiply.outer(out, w)
    return out


def integrate(f: ScalarField) -> float:
    """Tensor-product trapezoidal rule over the whole box."""
    acc = f.values
    for axis in range(f.domain.m - 1, -1, -1):
        w = _trapezoid_vector(f.domain.counts[axis], f.domain.spacing[axis])
        acc = acc @ w
    return float(acc)


def integrate_values(domain: GridDomain, values: np.ndarray) -> float:
    acc = values
    for axis in range(domain.m - 1, -1, -1):
        w = _trapezoid_vector(domain.counts[axis], domain.spacing[axis])
        acc = acc @ w
    return float(acc)
