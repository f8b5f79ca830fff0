import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parea.skewalg import (
    SkewMatrix,
    alignment_residual,
    rank2_audit,
    rank2_factorize,
    read_skew_matrix,
    skew_rank,
    spectral_pairs,
    write_skew_matrix,
)

ROT2 = np.array([[0.0, 2.0], [-2.0, 0.0]])


def block_diag(*lams):
    m = 2 * len(lams)
    out = np.zeros((m, m))
    for j, lam in enumerate(lams):
        out[2 * j, 2 * j + 1] = lam
        out[2 * j + 1, 2 * j] = -lam
    return out


def random_skew(rng, m):
    a = rng.standard_normal((m, m))
    return a - a.T


def random_rank2(rng, m):
    a = rng.standard_normal(m)
    b = rng.standard_normal(m)
    return np.outer(a, b) - np.outer(b, a)


class TestSkewRank:
    def test_zero(self):
        assert skew_rank(np.zeros((3, 3))) == 0

    def test_rotation(self):
        assert skew_rank(ROT2) == 2

    def test_two_blocks(self):
        # singular values are all 2 (hand check on the block form)
        assert skew_rank(block_diag(2.0, 2.0)) == 4

    def test_always_even_random(self):
        rng = np.random.default_rng(0)
        for m in range(2, 7):
            for _ in range(200):
                assert skew_rank(random_skew(rng, m)) % 2 == 0

    def test_rank2_detected(self):
        rng = np.random.default_rng(1)
        for m in range(2, 7):
            for _ in range(50):
                assert skew_rank(random_rank2(rng, m)) == 2


class TestSpectralPairs:
    def test_rotation(self):
        assert spectral_pairs(ROT2) == pytest.approx([2.0])

    def test_zero(self):
        assert spectral_pairs(np.zeros((4, 4))) == []

    def test_two_blocks(self):
        assert spectral_pairs(block_diag(3.0, 1.0)) == pytest.approx([3.0, 1.0])

    def test_repeated_pair_multiplicity(self):
        assert spectral_pairs(block_diag(2.0, 2.0)) == pytest.approx([2.0, 2.0])

    def test_trace_identity(self):
        rng = np.random.default_rng(2)
        for m in range(2, 7):
            for _ in range(100):
                s = random_skew(rng, m)
                lams = np.asarray(spectral_pairs(s))
                tr = np.trace(s @ s)
                assert 2 * np.sum(lams ** 2) == pytest.approx(-tr, rel=1e-9)


class TestAlignmentResidual:
    def test_zero_matrix(self):
        nu = np.array([1.0, 0.0, 0.0])
        assert np.all(alignment_residual(np.zeros((3, 3)), nu) == 0.0)

    def test_constructed_rank2_annihilated(self):
        # S = a nu_perp nu^T - a nu nu_perp^T is killed by its own nu
        rng = np.random.default_rng(3)
        for m in range(2, 7):
            nu = rng.standard_normal(m)
            nu /= np.linalg.norm(nu)
            raw = rng.standard_normal(m)
            perp = raw - (raw @ nu) * nu
            perp /= np.linalg.norm(perp)
            s = 1.7 * (np.outer(perp, nu) - np.outer(nu, perp))
            res = alignment_residual(s, nu)
            assert np.max(np.abs(res)) <= 1e-12 * np.max(np.abs(s))

    def test_rank4_never_annihilated(self):
        # a rank-4 matrix admits no annihilating unit vector
        s = block_diag(2.0, 2.0)
        rng = np.random.default_rng(4)
        best = np.inf
        for _ in range(10_000):
            nu = rng.standard_normal(4)
            nu /= np.linalg.norm(nu)
            best = min(best, np.max(np.abs(alignment_residual(s, nu))))
        assert best > 0.1


class TestRank2Factorize:
    def test_rotation_closed_form(self):
        fac = rank2_factorize(ROT2)
        assert fac.lam == pytest.approx(2.0, rel=1e-12)
        basis = np.stack([fac.nu, fac.nu_perp])
        assert np.allclose(basis @ basis.T, np.eye(2), atol=1e-12)

    def test_reconstruction_random(self):
        rng = np.random.default_rng(5)
        for m in range(2, 7):
            for _ in range(100):
                s = random_rank2(rng, m)
                fac = rank2_factorize(s)
                err = np.linalg.norm(s - fac.reconstruct())
                assert err <= 1e-10 * np.linalg.norm(s)

    def test_eigen_relation(self):
        rng = np.random.default_rng(6)
        s = random_rank2(rng, 5)
        fac = rank2_factorize(s)
        lhs = s @ (s @ fac.nu)
        assert np.allclose(lhs, -fac.lam ** 2 * fac.nu, rtol=1e-9, atol=1e-12)

    def test_rank4_rejected(self):
        with pytest.raises(ValueError, match="rank"):
            rank2_factorize(block_diag(2.0, 2.0))

    def test_extracted_nu_aligns(self):
        rng = np.random.default_rng(7)
        for m in range(2, 7):
            s = random_rank2(rng, m)
            fac = rank2_factorize(s)
            res = alignment_residual(s, fac.nu)
            assert np.max(np.abs(res)) <= 1e-10 * np.linalg.norm(s)


class TestRank2Audit:
    def test_rotation_hand_values(self):
        # U nu = (0, -2), U^2 nu = (-4, 0): rho = -16/4 = -4
        report = rank2_audit(ROT2, np.array([1.0, 0.0]))
        assert report.rho == pytest.approx(-4.0, rel=1e-12)
        assert report.u_nu_norm == pytest.approx(2.0)
        assert report.u2_nu_norm == pytest.approx(4.0)
        assert report.passed

    def test_rho_matches_factorization(self):
        rng = np.random.default_rng(8)
        for m in range(2, 7):
            s = random_rank2(rng, m)
            fac = rank2_factorize(s)
            probe = rng.standard_normal(m)
            report = rank2_audit(s, probe)
            assert report.rho == pytest.approx(-fac.lam ** 2, rel=1e-9)
            assert report.passed

    def test_kernel_probe_rejected(self):
        s = np.zeros((4, 4))
        s[0, 1], s[1, 0] = 1.0, -1.0
        with pytest.raises(ValueError, match="kernel"):
            rank2_audit(s, np.array([0.0, 0.0, 1.0, 0.0]))


class TestSkewMatrixType:
    def test_triangle_round_trip(self):
        s = SkewMatrix.from_matrix(block_diag(3.0, 1.0))
        assert np.array_equal(s.matrix, block_diag(3.0, 1.0))

    def test_rejects_non_skew(self):
        with pytest.raises(ValueError, match="skew"):
            SkewMatrix.from_matrix(np.eye(3))

    def test_file_round_trip(self, tmp_path):
        s = SkewMatrix.from_matrix(random_skew(np.random.default_rng(10), 5))
        path = tmp_path / "s.skew"
        write_skew_matrix(s, path)
        back = read_skew_matrix(path)
        assert back.m == 5
        assert np.array_equal(back.matrix, s.matrix)
        assert path.read_text().startswith("SKEW m=5\n")


@settings(max_examples=150, deadline=None, derandomize=True)
@given(
    m=st.integers(min_value=2, max_value=6),
    seed=st.integers(min_value=0, max_value=2 ** 31),
)
def test_rank_even_and_trace_identity(m, seed):
    rng = np.random.default_rng(seed)
    s = random_skew(rng, m)
    rank = skew_rank(s)
    assert rank % 2 == 0
    lams = np.asarray(spectral_pairs(s))
    assert 2 * np.sum(lams ** 2) == pytest.approx(-np.trace(s @ s), rel=1e-9)
