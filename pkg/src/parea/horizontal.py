"""Pointwise geometry of the weighted gradient direction.

For a scalar field w and a vector field F, the weight is D = |grad(w) + F|
and the horizontal normal is the unit field nu = (grad(w) + F) / D, defined
off the singular set where D (nearly) vanishes. The curl matrix
h_ij = d_i F_j - d_j F_i and the tangential operator
delta_k = d_k - nu_k nu_j d_j tie the two together through a structure
identity whose discrete residual is computed here.

Masked nodes always carry zeros rather than non-finite values; consumers
must honour the mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import (
    GridDomain,
    ScalarField,
    SingularMask,
    SkewField,
    VectorField,
    axis_derivative,
    field_scale,
    gradient,
    integrate_values,
    pair_indices,
    require_same_domain,
)

DEFAULT_SINGULAR_TOL = 1e-6


def weight(w: ScalarField, f: VectorField) -> ScalarField:
    """Pointwise Euclidean norm of grad(w) + F (nonnegative)."""
    domain = require_same_domain(w, f)
    g = gradient(w)
    return ScalarField(domain, np.sqrt(np.sum((g.values + f.values) ** 2, axis=0)))


def singular_set(w: ScalarField, f: VectorField,
                 tau: float = DEFAULT_SINGULAR_TOL) -> SingularMask:
    """Flag nodes where the weight drops below tau * field_scale(weight)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    d = weight(w, f)
    flags = d.values < tau * field_scale(d)
    return SingularMask(d.domain, flags, tau)


def horizontal_normal(w: ScalarField, f: VectorField,
                      tau: float = DEFAULT_SINGULAR_TOL
                      ) -> tuple[VectorField, SingularMask]:
    """Unit field (grad(w) + F)/|grad(w) + F|; zero (and flagged) on the mask."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    domain = require_same_domain(w, f)
    g = gradient(w)
    hat = g.values + f.values
    d = np.sqrt(np.sum(hat ** 2, axis=0))
    flags = d < tau * max(1.0, float(d.max()))
    safe = np.where(flags, 1.0, d)
    nu = np.where(flags, 0.0, hat / safe)
    return VectorField(domain, nu), SingularMask(domain, flags, tau)


def curl_matrix(f: VectorField) -> SkewField:
    """Skew matrix field with entries d_i F_j - d_j F_i."""
    domain = f.domain
    entries = [
        axis_derivative(domain, f.values[j], i) - axis_derivative(domain, f.values[i], j)
        for i, j in pair_indices(domain.m)
    ]
    return SkewField(domain, np.stack(entries) if entries else
                     np.zeros((0,) + domain.counts))


def tangential_derivative(nu: VectorField, f: ScalarField) -> VectorField:
    """Component k of grad(f) minus its projection onto nu: d_k f - nu_k nu.grad(f)."""
    domain = require_same_domain(nu, f)
    g = gradient(f)
    along = np.sum(nu.values * g.values, axis=0)
    return VectorField(domain, g.values - nu.values * along)


def _component_gradients(domain: GridDomain, values: np.ndarray) -> np.ndarray:
    """dnu[i, j] = d_i values[j]; shape (m, m, *counts)."""
    m = domain.m
    out = np.empty((m, m) + domain.counts)
    for j in range(m):
        for i in range(m):
            out[i, j] = axis_derivative(domain, values[j], i)
    return out


def _curl_identity_residual(domain: GridDomain, nu: np.ndarray, d: np.ndarray,
                            h: SkewField, mask: np.ndarray | None) -> SkewField:
    """LHS - RHS of the identity
    delta_i nu_j - delta_j nu_i = (h_ij - nu_j nu_k h_ik - nu_i nu_k h_kj)/D,
    zeroed on masked nodes."""
    m = domain.m
    dnu = _component_gradients(domain, nu)
    # c[j] = nu_k d_k nu_j
    c = np.einsum("k...,kj...->j...", nu, dnu)
    # s[i] = nu_k h_ik  (note h_ik = -h_ki)
    hmat = np.stack([np.stack([h.entry(i, k) for k in range(m)]) for i in range(m)])
    s = np.einsum("k...,ik...->i...", nu, hmat)
    safe_d = np.where(mask, 1.0, d) if mask is not None else d
    entries = []
    for i, j in pair_indices(m):
        lhs = dnu[i, j] - dnu[j, i] - nu[i] * c[j] + nu[j] * c[i]
        rhs = (h.entry(i, j) - nu[j] * s[i] + nu[i] * s[j]) / safe_d
        res = lhs - rhs
        if mask is not None:
            res = np.where(mask, 0.0, res)
        entries.append(res)
    return SkewField(domain, np.stack(entries) if entries else
                     np.zeros((0,) + domain.counts))


def structure_identity_residual(u: ScalarField, f: VectorField,
                                tau: float = DEFAULT_SINGULAR_TOL) -> SkewField:
    """Discrete residual of the structure identity for the normal of u.

    Evaluated off the singular mask only; masked nodes carry 0. For smooth
    inputs with weight bounded below the max residual decays at second
    order under refinement.
    """
    domain = require_same_domain(u, f)
    nu, mask = horizontal_normal(u, f, tau)
    d = weight(u, f)
    h = curl_matrix(f)
    return _curl_identity_residual(domain, nu.values, d.values, h, mask.flags)


@dataclass(frozen=True)
class SingularStats:
    """Flagged fraction plus the largest fully-flagged discrete ball radius."""
    fraction: float
    ball_radius: int
    flagged: int
    total: int


def singular_stats(mask: SingularMask) -> SingularStats:
    """Fraction of flagged nodes and the largest radius r such that some full
    Chebyshev ball of radius r (entirely inside the grid) is all flagged."""
    flags = mask.flags
    flagged = int(flags.sum())
    total = flags.size
    max_r = min((n - 1) // 2 for n in mask.domain.counts)
    radius = 0
    r = 1
    while r <= max_r:
        eroded = ndimage.minimum_filter(flags, size=2 * r + 1,
                                        mode="constant", cval=False)
        if not eroded.any():
            break
        radius = r
        r += 1
    if flagged == 0:
        radius = 0
    return SingularStats(fraction=flagged / total, ball_radius=radius,
                         flagged=flagged, total=total)


@dataclass(frozen=True)
class ResidualNorms:
    """Max-norm and area-weighted L1 norm of a residual field's magnitude."""
    max: float
    l1: float


def _pointwise_magnitude(field) -> np.ndarray:
    if isinstance(field, ScalarField):
        return np.abs(field.values)
    if isinstance(field, VectorField):
        return np.sqrt(np.sum(field.values ** 2, axis=0))
    if isinstance(field, (SkewField,)):
        if field.entries.shape[0] == 0:
            return np.zeros(field.domain.counts)
        return np.max(np.abs(field.entries), axis=0)
    if field.entries.shape[0] == 0:
        return np.zeros(field.domain.counts)
    return np.max(np.abs(field.entries), axis=0)


def residual_norms(field, mask: SingularMask | None = None) -> ResidualNorms:
    """Report both the engineering max-norm and the integral L1 norm,
    restricted to unmasked nodes when a mask is given."""
    mag = _pointwise_magnitude(field)
    if mask is not None:
        mag = np.where(mask.flags, 0.0, mag)
    mx = float(mag.max()) if mag.size else 0.0
    l1 = integrate_values(field.domain, mag)
    return ResidualNorms(max=mx, l1=l1)
