"""Value-level linear algebra of real skew-symmetric matrices.

Skew matrices have purely imaginary eigenvalue pairs +-i*lambda, so their
rank is even and the whole spectrum can be read off the symmetric
positive-semidefinite matrix -S^2. All eigen-structure here is computed
that way (symmetric solvers are robust; a nonsymmetric solver is never
needed). Rank-two matrices factor as
S = lambda * (nu_perp nu^T - nu nu_perp^T) with nu_perp = S nu / |S nu|.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grids import pair_indices

DEFAULT_RANK_TOL = 1e-9


@dataclass(frozen=True)
class SkewMatrix:
    """Skew-symmetric matrix stored by its strict upper triangle."""

    m: int
    triangle: tuple[float, ...]

    def __post_init__(self):
        expected = len(pair_indices(self.m))
        if len(self.triangle) != expected:
            raise ValueError(
                f"need {expected} upper-triangle entries for m={self.m}")

    @property
    def matrix(self) -> np.ndarray:
        out = np.zeros((self.m, self.m))
        for entry, (i, j) in zip(self.triangle, pair_indices(self.m)):
            out[i, j] = entry
            out[j, i] = -entry
        return out

    @classmethod
    def from_matrix(cls, mat, tol: float = 1e-12) -> "SkewMatrix":
        arr = np.asarray(mat, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("matrix must be square")
        scale = max(1.0, float(np.max(np.abs(arr))))
        if np.max(np.abs(arr + arr.T)) > tol * scale:
            raise ValueError("matrix is not skew-symmetric")
        m = arr.shape[0]
        triangle = tuple(float(arr[i, j]) for i, j in pair_indices(m))
        return cls(m=m, triangle=triangle)


def _dense(s) -> np.ndarray:
    if isinstance(s, SkewMatrix):
        return s.matrix
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("matrix must be square")
    return arr


def write_skew_matrix(s, destination) -> None:
    """Text form: `SKEW m=<int>` then the upper-triangle entries."""
    if not isinstance(s, SkewMatrix):
        s = SkewMatrix.from_matrix(s)
    body = " ".join(format(x, ".17g") for x in s.triangle)
    Path(destination).write_text(f"SKEW m={s.m}\n{body}\n", encoding="ascii")


def read_skew_matrix(source) -> SkewMatrix:
    text = Path(source).read_text(encoding="ascii").split()
    if len(text) < 1 or text[0] != "SKEW" or not text[1].startswith("m="):
        raise ValueError("malformed skew matrix file")
    m = int(text[1][2:])
    entries = tuple(float(t) for t in text[2:])
    return SkewMatrix(m=m, triangle=entries)


def paired_spectrum(s) -> np.ndarray:
    """All lambda_j >= 0 (with multiplicity) from the eigenvalue pairs
    +-i*lambda_j, in descending order; length floor(m/2).

    The lambda_j are the singular values of S, which arrive in equal pairs;
    averaging each pair keeps exact zeros clean (going through -S^2 would
    bury them in eps * lambda_max^2 noise)."""
    mat = _dense(s)
    sigma = np.linalg.svd(mat, compute_uv=False)
    return np.asarray([0.5 * (sigma[2 * j] + sigma[2 * j + 1])
                       for j in range(mat.shape[0] // 2)])


def skew_rank(s, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank by thresholding the paired singular values at
    tol * largest; even by construction, 0 iff S vanishes within tolerance."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    lams = paired_spectrum(s)
    if lams.size == 0 or lams[0] == 0.0:
        return 0
    return 2 * int(np.sum(lams > tol * lams[0]))


def spectral_pairs(s, tol: float = DEFAULT_RANK_TOL) -> list[float]:
    """The positive imaginary parts lambda_j of the eigenvalue pairs,
    descending, with multiplicities; empty for the zero matrix."""
    lams = paired_spectrum(s)
    if lams.size == 0 or lams[0] == 0.0:
        return []
    return [float(x) for x in lams[lams > tol * lams[0]]]


def alignment_residual(s, nu) -> np.ndarray:
    """S - S nu nu^T - nu nu^T S; vanishes only if S is carried by nu
    (which forces rank(S) <= 2)."""
    mat = _dense(s)
    v = np.asarray(nu, dtype=float)
    outer = np.outer(v, v)
    return mat - mat @ outer - outer @ mat


@dataclass(frozen=True)
class Rank2Factorization:
    """S = lam * (nu_perp nu^T - nu nu_perp^T) with orthonormal nu, nu_perp."""

    nu: np.ndarray
    nu_perp: np.ndarray
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if abs(np.linalg.norm(self.nu) - 1.0) > 1e-12:
            raise ValueError("nu is not a unit vector")
        if abs(np.linalg.norm(self.nu_perp) - 1.0) > 1e-12:
            raise ValueError("nu_perp is not a unit vector")
        if abs(float(self.nu @ self.nu_perp)) > 1e-10:
            raise ValueError("nu and nu_perp are not orthogonal")

    def reconstruct(self) -> np.ndarray:
        return self.lam * (np.outer(self.nu_perp, self.nu)
                           - np.outer(self.nu, self.nu_perp))


def rank2_factorize(s, tol: float = DEFAULT_RANK_TOL) -> Rank2Factorization:
    """Factor a rank-2 skew matrix; nu is a unit eigenvector of -S^2 for the
    top eigenvalue lam^2 and nu_perp = S nu / |S nu| fixes the orientation."""
    mat = _dense(s)
    rank = skew_rank(mat, tol)
    if rank != 2:
        raise ValueError(f"rank2_factorize needs rank 2, got rank {rank}")
    sym = -(mat @ mat)
    ev, vecs = np.linalg.eigh(sym)
    lam = float(np.sqrt(max(ev[-1], 0.0)))
    nu = vecs[:, -1]
    snu = mat @ nu
    nu_perp = snu / np.linalg.norm(snu)
    return Rank2Factorization(nu=nu, nu_perp=nu_perp, lam=lam)


@dataclass(frozen=True)
class Rank2Audit:
    """Structure relations of a rank-2 skew matrix U probed with a vector nu:
    U^2 nu is nonzero, nu _|_ U nu _|_ U^2 nu, {U nu, U^2 nu} spans range(U),
    and both are eigenvectors of U^2 with eigenvalue rho = -|U^2 nu|^2/|U nu|^2.
    """

    rho: float
    u_nu_norm: float
    u2_nu_norm: float
    orthogonality: float
    span_residual: float
    eigen_residual: float
    passed: bool


def rank2_audit(u, nu, tol: float = DEFAULT_RANK_TOL) -> Rank2Audit:
    mat = _dense(u)
    v = np.asarray(nu, dtype=float)
    rank = skew_rank(mat, tol)
    if rank != 2:
        raise ValueError(f"rank2_audit needs rank 2, got rank {rank}")
    unu = mat @ v
    scale = max(1.0, float(np.max(np.abs(mat)))) * max(1.0, float(np.linalg.norm(v)))
    if np.linalg.norm(unu) <= tol * scale:
        raise ValueError("nu is (numerically) in the kernel of U")
    u2nu = mat @ unu
    n1 = float(np.linalg.norm(unu))
    n2 = float(np.linalg.norm(u2nu))
    rho = -(n2 ** 2) / (n1 ** 2)
    ortho = max(abs(float(v @ unu)), abs(float(unu @ u2nu))) / (scale ** 2)
    # range(U) against span{U nu, U^2 nu} via an orthonormal basis
    q, _ = np.linalg.qr(np.stack([unu, u2nu], axis=1))
    proj = mat - q @ (q.T @ mat)
    span_res = float(np.linalg.norm(proj) / np.linalg.norm(mat))
    e1 = np.linalg.norm(mat @ u2nu - rho * unu) / (abs(rho) * n1)
    e2 = np.linalg.norm(mat @ (mat @ u2nu) - rho * u2nu) / (abs(rho) * n2)
    eigen_res = float(max(e1, e2))
    passed = (n2 > 0 and ortho <= 1e-10 and span_res <= 1e-9
              and eigen_res <= 1e-9)
    return Rank2Audit(rho=rho, u_nu_norm=n1, u2_nu_norm=n2,
                      orthogonality=ortho, span_residual=span_res,
                      eigen_residual=eigen_res, passed=passed)
