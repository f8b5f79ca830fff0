"""Frobenius-type integrability of the distribution annihilated by the
contact form built from (w, F), and the first-order compatibility system a
prescribed (nu, D, F) triple must satisfy to come from a potential.

The classifying object is the alternating 3-tensor
T_kij = nu_k h_ij + nu_i h_jk + nu_j h_ki (h the curl matrix of F); the
distribution is integrable at a node iff T vanishes there. The weight
prefactor of the underlying 3-form is deliberately dropped: classification
is by vanishing and the weight is positive off the singular set. For m = 2
the tensor is empty and every unmasked node is integrable.

Two residuals probe the compatibility system: `tangential_curl_residual`
(the antisymmetrized tangential derivative of nu against the curl matrix)
and `normal_contraction_residual` (the contraction of nu against the
exterior derivative of the weighted normal form, expanded so only first
derivatives are needed). `weight_equation_residual` is the same condition
rewritten as a first-order system in D; for unit nu the two agree up to
sign and a discrete product-rule term.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .grids import (
    Alternating3Field,
    GridDomain,
    ScalarField,
    SkewField,
    VectorField,
    axis_derivative,
    divergence,
    field_scale,
    require_same_domain,
    triple_indices,
)
from .horizontal import (
    DEFAULT_SINGULAR_TOL,
    _component_gradients,
    _curl_identity_residual,
    curl_matrix,
    horizontal_normal,
)

DEFAULT_CLASSIFY_TOL = 1e-4


class IntegrabilityLabel(IntEnum):
    SINGULAR = 0
    INTEGRABLE = 1
    NONINTEGRABLE = 2


def frobenius_tensor(nu: VectorField, f: VectorField) -> Alternating3Field:
    """T_kij = nu_k h_ij + nu_i h_jk + nu_j h_ki on increasing triples."""
    domain = require_same_domain(nu, f)
    h = curl_matrix(f)
    v = nu.values
    entries = [
        v[k] * h.entry(i, j) + v[i] * h.entry(j, k) + v[j] * h.entry(k, i)
        for k, i, j in triple_indices(domain.m)
    ]
    stacked = (np.stack(entries) if entries
               else np.zeros((0,) + domain.counts))
    return Alternating3Field(domain, stacked)


@dataclass(frozen=True)
class ClassificationField:
    """Per-node integrability labels with the thresholds that produced them."""

    domain: GridDomain
    labels: np.ndarray
    tau: float
    eta: float

    def fraction(self, label: IntegrabilityLabel) -> float:
        return float(np.mean(self.labels == int(label)))

    @property
    def all_nonintegrable_off_mask(self) -> bool:
        off = self.labels != int(IntegrabilityLabel.SINGULAR)
        return bool(np.all(self.labels[off] == int(IntegrabilityLabel.NONINTEGRABLE)))


def classify_integrability(w: ScalarField, f: VectorField,
                           tau: float = DEFAULT_SINGULAR_TOL,
                           eta: float = DEFAULT_CLASSIFY_TOL) -> ClassificationField:
    """Label each node singular / integrable / nonintegrable.

    Off the mask a node is integrable iff the max tensor entry is below
    eta * field_scale(T). The threshold separates second-order discretization
    residuals of truly integrable data from order-one values at the shipped
    resolutions; it is resolution dependent.
    """
    if not (tau > 0 and eta > 0):
        raise ValueError("tau and eta must be positive")
    domain = require_same_domain(w, f)
    nu, mask = horizontal_normal(w, f, tau)
    tensor = frobenius_tensor(nu, f)
    if tensor.entries.shape[0] == 0:
        tmax = np.zeros(domain.counts)
    else:
        tmax = np.max(np.abs(tensor.entries), axis=0)
    scale = field_scale(tensor)
    labels = np.where(
        mask.flags,
        int(IntegrabilityLabel.SINGULAR),
        np.where(tmax < eta * scale,
                 int(IntegrabilityLabel.INTEGRABLE),
                 int(IntegrabilityLabel.NONINTEGRABLE)),
    ).astype(np.int8)
    return ClassificationField(domain=domain, labels=labels, tau=tau, eta=eta)


def _check_triple(nu: VectorField, d: ScalarField, f: VectorField) -> GridDomain:
    domain = require_same_domain(nu, d, f)
    if not np.all(d.values > 0):
        raise ValueError("weight must be positive on the evaluation region")
    return domain


def tangential_curl_residual(nu: VectorField, d: ScalarField,
                             f: VectorField) -> SkewField:
    """Residual of
    delta_i nu_j - delta_j nu_i = (h_ij - nu_j nu_k h_ik - nu_i nu_k h_kj)/D
    for a prescribed triple (nu, D, F) with D > 0 and nu unit."""
    domain = _check_triple(nu, d, f)
    h = curl_matrix(f)
    return _curl_identity_residual(domain, nu.values, d.values, h, None)


def normal_contraction_residual(nu: VectorField, d: ScalarField,
                                f: VectorField) -> VectorField:
    """Componentwise residual of the contracted-closedness condition on the
    weighted normal form:
    res_k = nu_k nu_i d_i D - d_k D + nu_j (d_j nu_k - d_k nu_j) D - nu_i h_ik.
    """
    domain = _check_triple(nu, d, f)
    m = domain.m
    v = nu.values
    dd = np.stack([axis_derivative(domain, d.values, k) for k in range(m)])
    dnu = _component_gradients(domain, v)
    h = curl_matrix(f)
    hmat = np.stack([np.stack([h.entry(i, k) for k in range(m)]) for i in range(m)])
    nu_dot_dd = np.einsum("i...,i...->...", v, dd)
    # a[k] = nu_j (d_j nu_k - d_k nu_j)
    a = (np.einsum("j...,jk...->k...", v, dnu)
         - np.einsum("j...,kj...->k...", v, dnu))
    # b[k] = nu_i h_ik
    b = np.einsum("i...,ik...->k...", v, hmat)
    res = v * nu_dot_dd - dd + a * d.values - b
    return VectorField(domain, res)


def weight_equation_residual(nu: VectorField, d: ScalarField,
                             f: VectorField) -> VectorField:
    """Residual of the first-order system in the weight:
    res_k = delta_k D - nu_j (d_j nu_k) D + nu_j h_jk."""
    domain = _check_triple(nu, d, f)
    m = domain.m
    v = nu.values
    dd = np.stack([axis_derivative(domain, d.values, k) for k in range(m)])
    dnu = _component_gradients(domain, v)
    h = curl_matrix(f)
    hmat = np.stack([np.stack([h.entry(j, k) for k in range(m)]) for j in range(m)])
    nu_dot_dd = np.einsum("i...,i...->...", v, dd)
    delta_d = dd - v * nu_dot_dd
    advect = np.einsum("j...,jk...->k...", v, dnu)
    twist = np.einsum("j...,jk...->k...", v, hmat)
    return VectorField(domain, delta_d - advect * d.values + twist)


def codazzi_residual_2d(nu: VectorField, d: ScalarField) -> ScalarField:
    """div(D * nu_perp) - 2 with nu_perp = (nu_2, -nu_1).

    The planar reduction of the contracted-closedness condition for the
    standard rotation field F = (-y, x); only defined for m = 2.
    """
    domain = require_same_domain(nu, d)
    if domain.m != 2:
        raise ValueError("codazzi_residual_2d requires m = 2")
    perp = np.stack([nu.values[1], -nu.values[0]])
    flux = VectorField(domain, d.values * perp)
    return ScalarField(domain, divergence(flux).values - 2.0)


def renormalize_normal(nu: VectorField) -> VectorField:
    """Rescale nu to unit length pointwise.

    File round-off must not masquerade as nonintegrability, so fields read
    from disk are renormalized before use; a pointwise norm below 0.5 is an
    error (the data is not a unit field).
    """
    norms = np.sqrt(np.sum(nu.values ** 2, axis=0))
    if np.any(norms < 0.5):
        raise ValueError("normal field norm below 0.5; not a unit field")
    return VectorField(nu.domain, nu.values / norms)
