"""The weighted-area functional: evaluation, first variation, line profiles,
Dirichlet minimization, and the uniqueness audit.

The functional is  integral( |grad(u) + F| + H*u )  over the box, discretized
with the shared node stencils and trapezoid quadrature so second-order
behaviour is uniform across the package. Minimization replaces |.| by
sqrt(|.|^2 + eps^2) and follows a decreasing eps schedule; each stage runs
gradient descent with a backtracking (Armijo) line search on the interior
nodes, boundary nodes frozen. The functional is convex, so the continuation
converges to the same minimum irrespective of eps path, within tolerance.

H enters linearly and can make the functional unbounded below; the solver
caps iterations and reports non-convergence instead of asserting existence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import (
    ScalarField,
    VectorField,
    axis_derivative,
    axis_derivative_adjoint,
    divergence,
    field_scale,
    gradient,
    integrate_values,
    quadrature_weights,
    require_same_domain,
)
from .horizontal import (
    DEFAULT_SINGULAR_TOL,
    curl_matrix,
    horizontal_normal,
    singular_set,
    weight,
)
from .integrability import DEFAULT_CLASSIFY_TOL, IntegrabilityLabel, classify_integrability
from .skewalg import DEFAULT_RANK_TOL


# --------------------------------------------------------------------------
# Constant antisymmetric coefficient maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewCoefficients:
    """Constant real coefficients a with a^T = -a, defining the linear map
    G -> (sum_k a[j,k] G_k)_j. The image is pointwise orthogonal to G."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = np.array(self.matrix, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("coefficients must be a square matrix")
        if not np.array_equal(arr, -arr.T):
            raise ValueError("coefficients must be exactly antisymmetric")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]


def pairwise_rotation(m: int) -> SkewCoefficients:
    """The block rotation coefficients a[2j,2j+1] = 1 = -a[2j+1,2j] that send
    (G_1, G_2, ...) to (G_2, -G_1, G_4, -G_3, ...); m must be even."""
    if m % 2 != 0:
        raise ValueError("pairwise rotation needs even m")
    a = np.zeros((m, m))
    for j in range(m // 2):
        a[2 * j, 2 * j + 1] = 1.0
        a[2 * j + 1, 2 * j] = -1.0
    return SkewCoefficients(a)


def skew_transform(g: VectorField, a: SkewCoefficients) -> VectorField:
    """Componentwise map (sum_k a[j,k] G_k)_j."""
    if a.m != g.domain.m:
        raise ValueError("coefficient dimension does not match the field")
    out = np.einsum("jk,k...->j...", a.matrix, g.values)
    return VectorField(g.domain, out)


def skew_divergence(f: VectorField, a: SkewCoefficients) -> ScalarField:
    """divergence of the transformed field, sum a[j,k] d_j F_k."""
    return divergence(skew_transform(f, a))


# --------------------------------------------------------------------------
# Functional and first variation
# --------------------------------------------------------------------------

def functional(u: ScalarField, f: VectorField,
               h: ScalarField | None = None) -> float:
    """integral( |grad(u) + F| + H*u ) by trapezoid quadrature."""
    domain = require_same_domain(u, f) if h is None else require_same_domain(u, f, h)
    d = weight(u, f).values
    if h is not None:
        d = d + h.values * u.values
    return integrate_values(domain, d)


def first_variation(u: ScalarField, phi: ScalarField, f: VectorField,
                    h: ScalarField | None = None,
                    tau: float = DEFAULT_SINGULAR_TOL) -> tuple[float, float]:
    """One-sided derivatives of eps -> functional(u + eps*phi) at 0.

    Both sides share integral( nu . grad(phi) + H*phi ); the singular region
    contributes +integral_S |grad(phi)| on the right and its negative on the
    left, so right >= left with equality iff the mask is empty.
    """
    domain = require_same_domain(u, phi, f)
    nu, mask = horizontal_normal(u, f, tau)
    gphi = gradient(phi).values
    common = np.einsum("k...,k...->...", nu.values, gphi)
    if h is not None:
        require_same_domain(u, h)
        common = common + h.values * phi.values
    mag = np.sqrt(np.sum(gphi ** 2, axis=0))
    singular_part = integrate_values(domain, np.where(mask.flags, mag, 0.0))
    base = integrate_values(domain, common)
    return base + singular_part, base - singular_part


@dataclass(frozen=True)
class LineProfile:
    """Functional values along the segment u + eps*(v - u) on a uniform
    eps grid, with raw second differences as the convexity report."""

    eps: np.ndarray
    values: np.ndarray

    @property
    def second_differences(self) -> np.ndarray:
        v = self.values
        if v.size < 3:
            return np.zeros(0)
        return v[2:] - 2.0 * v[1:-1] + v[:-2]

    @property
    def min_second_difference(self) -> float:
        d = self.second_differences
        return float(d.min()) if d.size else 0.0


def line_profile(u: ScalarField, v: ScalarField, f: VectorField,
                 h: ScalarField | None, eps_grid) -> LineProfile:
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size < 2:
        raise ValueError("eps grid must be a 1-D sequence with >= 2 points")
    steps = np.diff(eps)
    if np.max(np.abs(steps - steps[0])) > 1e-12 * max(1.0, abs(steps[0])):
        raise ValueError("eps grid must be uniform")
    domain = require_same_domain(u, v, f)
    direction = v.values - u.values
    values = []
    for e in eps:
        ue = ScalarField(domain, u.values + e * direction)
        values.append(functional(ue, f, h))
    return LineProfile(eps=eps, values=np.asarray(values))


# --------------------------------------------------------------------------
# Dirichlet minimization
# --------------------------------------------------------------------------

class SolverDivergenceError(RuntimeError):
    """Line-search step underflow; carries the failing stage diagnostics."""

    def __init__(self, eps: float, iteration: int, step: float,
                 objective: float, residual: float):
        self.eps = eps
        self.iteration = iteration
        self.step = step
        self.objective = objective
        self.residual = residual
        super().__init__(
            f"step underflow at eps={eps:g}, iteration {iteration}: "
            f"step={step:.3g}, objective={objective:.12g}, residual={residual:.3g}")


@dataclass(frozen=True)
class MinimizeOptions:
    """Continuation schedule and step control for the smoothed descent."""

    eps_schedule: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    max_iterations: int = 25000
    first_order_tol: float = 1e-5
    armijo: float = 1e-4
    shrink: float = 0.5
    min_step: float = 1e-18
    initial_step_scale: float = 0.1

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_schedule)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps schedule must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        if eps[-1] > 1e-6:
            raise ValueError("final eps must be <= 1e-6")
        if not (0 < self.shrink < 1 and 0 < self.armijo < 1):
            raise ValueError("bad step control parameters")
        object.__setattr__(self, "eps_schedule", eps)


@dataclass(frozen=True)
class StageLog:
    eps: float
    iterations: int
    objective: float
    residual: float
    converged: bool
    history: tuple[tuple[int, float, float], ...]


@dataclass(frozen=True)
class MinimizeResult:
    field: ScalarField
    converged: bool
    stages: tuple[StageLog, ...]

    def log_text(self) -> str:
        """Plain-text convergence log: stage, iteration, objective, residual."""
        lines = ["stage iteration objective residual"]
        for snum, stage in enumerate(self.stages):
            for it, obj, res in stage.history:
                lines.append(f"{snum} {it} {obj:.17g} {res:.17g}")
        return "\n".join(lines) + "\n"


class _SmoothedObjective:
    """Quadrature-weighted objective sum W*(sqrt(|grad u + F|^2 + eps^2) + H u)
    with its exact discrete gradient (boundary rows zeroed)."""

    def __init__(self, f: VectorField, h: ScalarField | None):
        self.domain = f.domain
        self.f_values = f.values
        self.h_values = None if h is None else h.values
        self.weights = quadrature_weights(self.domain)
        self.boundary = self.domain.boundary_mask()

    def _shifted_gradient(self, u: np.ndarray) -> np.ndarray:
        g = np.stack([axis_derivative(self.domain, u, k)
                      for k in range(self.domain.m)])
        return g + self.f_values

    def value(self, u: np.ndarray, eps: float) -> float:
        p = self._shifted_gradient(u)
        s = np.sqrt(np.sum(p * p, axis=0) + eps * eps)
        total = s if self.h_values is None else s + self.h_values * u
        return float(np.sum(self.weights * total))

    def value_and_grad(self, u: np.ndarray, eps: float) -> tuple[float, np.ndarray]:
        p = self._shifted_gradient(u)
        s = np.sqrt(np.sum(p * p, axis=0) + eps * eps)
        total = s if self.h_values is None else s + self.h_values * u
        value = float(np.sum(self.weights * total))
        scale = self.weights / s
        grad = np.zeros(self.domain.counts)
        for k in range(self.domain.m):
            grad += axis_derivative_adjoint(self.domain, scale * p[k], k)
        if self.h_values is not None:
            grad += self.weights * self.h_values
        grad[self.boundary] = 0.0
        return value, grad

    def residual(self, grad: np.ndarray) -> float:
        """Interior first-order residual: sup-norm of the objective gradient
        over interior nodes (boundary rows are zero already)."""
        return float(np.max(np.abs(grad)))


def first_order_residual(u: ScalarField, f: VectorField,
                         h: ScalarField | None = None,
                         eps: float = 1e-6) -> float:
    """Interior stationarity residual of the smoothed objective at u."""
    obj = _SmoothedObjective(f, h)
    _, grad = obj.value_and_grad(u.values, eps)
    return obj.residual(grad)


def minimize(f: VectorField, h: ScalarField | None, boundary: ScalarField,
             init: ScalarField, opts: MinimizeOptions | None = None
             ) -> MinimizeResult:
    """Minimize the functional over interior node values, boundary frozen.

    `boundary` supplies the Dirichlet data on the boundary nodes (its
    interior values are ignored); `init` must match it there exactly. Each
    eps stage descends until the interior first-order residual drops below
    first_order_tol * field_scale(boundary) or the iteration cap; the
    recorded objective sequence is non-increasing within every stage.
    """
    opts = opts or MinimizeOptions()
    domain = require_same_domain(f, boundary, init) if h is None else \
        require_same_domain(f, boundary, init, h)
    obj = _SmoothedObjective(f, h)
    bmask = obj.boundary
    if not np.array_equal(init.values[bmask], boundary.values[bmask]):
        raise ValueError("init does not match the boundary data on boundary nodes")

    u = np.array(init.values, dtype=float)
    stages: list[StageLog] = []
    all_converged = True
    bound = opts.first_order_tol * field_scale(boundary)
    # Step memory survives the continuation: consecutive stages differ only
    # in the smoothing, so the curvature information stays useful.
    step = None
    prev_du = None
    prev_dg = None

    for eps in opts.eps_schedule:
        value, grad = obj.value_and_grad(u, eps)
        res = obj.residual(grad)
        history = [(0, value, res)]
        it = 0
        while res > bound and it < opts.max_iterations:
            gnorm2 = float(np.sum(grad * grad))
            if gnorm2 == 0.0:
                break
            if prev_du is not None:
                denom = float(np.sum(prev_du * prev_dg))
                if denom > 0:
                    step = float(np.sum(prev_du * prev_du)) / denom
                # else keep the previous accepted step
            if step is None or not np.isfinite(step) or step <= 0:
                step = opts.initial_step_scale * field_scale(u) / np.sqrt(gnorm2)
            while True:
                trial = u - step * grad
                trial_value, trial_grad = obj.value_and_grad(trial, eps)
                if trial_value <= value - opts.armijo * step * gnorm2:
                    break
                step *= opts.shrink
                if step < opts.min_step:
                    raise SolverDivergenceError(eps=eps, iteration=it, step=step,
                                                objective=value, residual=res)
            prev_du = trial - u
            prev_dg = trial_grad - grad
            u, value, grad = trial, trial_value, trial_grad
            it += 1
            res = obj.residual(grad)
            history.append((it, value, res))
        converged = res <= bound
        all_converged = all_converged and converged
        stages.append(StageLog(eps=eps, iterations=it, objective=value,
                               residual=res, converged=converged,
                               history=tuple(history)))

    return MinimizeResult(field=ScalarField(domain, u), converged=all_converged,
                          stages=tuple(stages))


# --------------------------------------------------------------------------
# Uniqueness audit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UniquenessReport:
    """Measurements comparing two candidate minimizers; draws no conclusions.

    Hypothesis flags are computed only off the joint singular mask: the
    rank flag marks nodes where the curl matrix has rank >= 3, the
    nonintegrability flag marks nodes where either candidate's contact
    distribution is classified nonintegrable, and divb_sign records the
    pointwise sign of the transformed divergence.
    """

    normal_max: float
    normal_l1: float
    gradient_max: float
    gradient_l1: float
    rank_condition_flags: np.ndarray
    nonintegrable_flags: np.ndarray
    divb_sign: np.ndarray
    orthogonality_residual: float
    orthogonality_pointwise: float
    functional_gap: float
    joint_mask_fraction: float
    epsilon_mask_fractions: tuple[tuple[float, float], ...]

    @property
    def rank_condition_fraction(self) -> float:
        return float(self.rank_condition_flags.mean())

    @property
    def nonintegrable_fraction(self) -> float:
        return float(self.nonintegrable_flags.mean())

    @property
    def divb_positive_fraction(self) -> float:
        return float(np.mean(self.divb_sign > 0))


def _stacked_skew_rank(mats: np.ndarray, tol: float) -> np.ndarray:
    sym = -np.einsum("nij,njk->nik", mats, mats)
    ev = np.linalg.eigvalsh(sym)[:, ::-1]
    m = mats.shape[1]
    lams = np.stack([np.sqrt(np.clip(0.5 * (ev[:, 2 * j] + ev[:, 2 * j + 1]), 0, None))
                     for j in range(m // 2)], axis=1)
    top = lams[:, 0]
    counts = np.sum(lams > tol * top[:, None], axis=1)
    counts[top == 0.0] = 0
    return 2 * counts


def pointwise_skew_rank(field, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Numerical rank of a skew matrix field at every node (always even)."""
    ranks = _stacked_skew_rank(field.as_matrices(), tol)
    return ranks.reshape(field.domain.counts)


def uniqueness_audit(u: ScalarField, v: ScalarField, f: VectorField,
                     h: ScalarField | None, a: SkewCoefficients,
                     tau: float = DEFAULT_SINGULAR_TOL,
                     eta: float = DEFAULT_CLASSIFY_TOL) -> UniquenessReport:
    """Agreement metrics, per-node uniqueness-hypothesis flags, and the transformed
    orthogonality residual: the max over eps in {0, 1/2, 1} of the quadrature
    inner product |< (grad(u_eps) + F)^a , grad(v) - grad(u) >| (the pointwise
    sup of the integrand is reported alongside)."""
    domain = require_same_domain(u, v, f)
    nu_u, mask_u = horizontal_normal(u, f, tau)
    nu_v, mask_v = horizontal_normal(v, f, tau)
    joint = mask_u.flags | mask_v.flags
    off = ~joint

    normal_diff = np.sqrt(np.sum((nu_u.values - nu_v.values) ** 2, axis=0))
    normal_diff = np.where(off, normal_diff, 0.0)
    gu = gradient(u).values
    gv = gradient(v).values
    grad_diff = np.sqrt(np.sum((gu - gv) ** 2, axis=0))

    hfield = curl_matrix(f)
    ranks = pointwise_skew_rank(hfield)
    rank_flags = (ranks >= 3) & off

    ni_u = classify_integrability(u, f, tau, eta).labels
    ni_v = classify_integrability(v, f, tau, eta).labels
    noninteg = ((ni_u == int(IntegrabilityLabel.NONINTEGRABLE))
                | (ni_v == int(IntegrabilityLabel.NONINTEGRABLE))) & off

    db = skew_divergence(f, a).values
    db_tol = 1e-12 * field_scale(db)
    sign = np.zeros(domain.counts, dtype=np.int8)
    sign[db > db_tol] = 1
    sign[db < -db_tol] = -1

    direction = gv - gu
    weights_arr = quadrature_weights(domain)
    ortho = 0.0
    ortho_pointwise = 0.0
    eps_masks = []
    for e in (0.0, 0.5, 1.0):
        ue = ScalarField(domain, u.values + e * (v.values - u.values))
        ge = gradient(ue).values
        transformed = np.einsum("jk,k...->j...", a.matrix, ge + f.values)
        dots = np.einsum("k...,k...->...", transformed, direction)
        ortho = max(ortho, abs(float(np.sum(weights_arr * dots))))
        ortho_pointwise = max(ortho_pointwise, float(np.max(np.abs(dots))))
        eps_masks.append((e, singular_set(ue, f, tau).fraction))

    gap = abs(functional(u, f, h) - functional(v, f, h))

    rank_flags.setflags(write=False)
    noninteg.setflags(write=False)
    sign.setflags(write=False)
    return UniquenessReport(
        normal_max=float(normal_diff.max()),
        normal_l1=integrate_values(domain, normal_diff),
        gradient_max=float(grad_diff.max()),
        gradient_l1=integrate_values(domain, grad_diff),
        rank_condition_flags=rank_flags,
        nonintegrable_flags=noninteg,
        divb_sign=sign,
        orthogonality_residual=ortho,
        orthogonality_pointwise=ortho_pointwise,
        functional_gap=gap,
        joint_mask_fraction=float(joint.mean()),
        epsilon_mask_fractions=tuple(eps_masks),
    )
