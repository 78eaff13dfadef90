import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdml.errors import BaseMismatch, DimMismatch, NotPositiveDefinite, NotSquare, NotSymmetric
from spdml.oracles import airm_dist_sq_geneig, random_invertible, random_spd, stein_dist_sq_slogdet
from spdml.spd import (
    Metric,
    SpdMatrix,
    TangentSymmetric,
    airm_dist_sq,
    airm_inner,
    dist_sq,
    logdet,
    make_spd,
    pairwise_dist_sq,
    spd_exp,
    spd_log,
    stein_dist_sq,
)


def spd_strategy(max_n=6):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_n))
        seed = draw(st.integers(0, 2**32 - 1))
        cond = draw(st.floats(1.0, 100.0))
        return random_spd(np.random.default_rng(seed), n, cond)

    return build()


class TestConstruction:
    def test_identity(self):
        X = make_spd(np.eye(2))
        assert X.dim == 2
        np.testing.assert_array_equal(X.values, np.eye(2))

    def test_indefinite_reports_smallest_eigenvalue(self):
        with pytest.raises(NotPositiveDefinite) as info:
            make_spd([[1.0, 2.0], [2.0, 1.0]])
        assert info.value.min_eigenvalue == pytest.approx(-1.0)

    def test_eigenvalues_from_characteristic_polynomial(self):
        # det([[2-l, 1], [1, 2-l]]) = (2-l)^2 - 1 -> l in {1, 3}
        X = make_spd([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(X.eigvals(), [1.0, 3.0], atol=1e-14)

    def test_not_square(self):
        with pytest.raises(NotSquare):
            make_spd(np.ones((2, 3)))

    def test_asymmetry_beyond_tolerance(self):
        with pytest.raises(NotSymmetric):
            make_spd([[2.0, 1.0], [1.1, 2.0]])

    def test_tiny_asymmetry_is_symmetrised(self):
        X = make_spd([[2.0, 1.0], [1.0 + 1e-12, 2.0]])
        assert np.array_equal(X.values, X.values.T)

    def test_semidefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            make_spd(np.diag([1.0, 0.0]))

    def test_threshold_is_scale_invariant(self):
        X = np.diag([1.0, 1e-10])
        make_spd(X)
        make_spd(1e8 * X)

    def test_immutable(self):
        X = make_spd(np.eye(3))
        with pytest.raises(ValueError):
            X.values[0, 0] = 5.0

    def test_nonfinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            make_spd([[np.nan, 0.0], [0.0, 1.0]])

    def test_tangent_must_be_symmetric(self):
        with pytest.raises(NotSymmetric):
            TangentSymmetric(make_spd(np.eye(2)), np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestLog:
    def test_identity(self):
        np.testing.assert_array_equal(spd_log(np.eye(3)), np.zeros((3, 3)))

    def test_diagonal(self):
        np.testing.assert_allclose(spd_log(np.diag([math.e, math.e**2])), np.diag([1.0, 2.0]), atol=1e-14)

    def test_two_by_two_roundtrip(self):
        X = np.array([[2.0, 1.0], [1.0, 2.0]])
        L = spd_log(X)
        # eigenvectors (1,1)/sqrt2 -> ln 3, (1,-1)/sqrt2 -> ln 1 = 0
        expected = 0.5 * math.log(3.0) * np.ones((2, 2))
        np.testing.assert_allclose(L, expected, atol=1e-14)
        np.testing.assert_allclose(spd_exp(L), X, rtol=1e-10)

    @given(spd_strategy(8))
    @settings(max_examples=50, deadline=None)
    def test_exp_log_roundtrip(self, X):
        err = np.linalg.norm(spd_exp(spd_log(X)) - X) / np.linalg.norm(X)
        assert err <= 1e-10


class TestInner:
    def test_identity_trace(self):
        P = make_spd(np.eye(2))
        v = TangentSymmetric(P, np.eye(2))
        assert airm_inner(P, v, v) == pytest.approx(2.0)

    def test_traceless(self):
        P = make_spd(np.eye(2))
        v = TangentSymmetric(P, np.array([[0.0, 1.0], [1.0, 0.0]]))
        w = TangentSymmetric(P, np.eye(2))
        assert airm_inner(P, v, w) == pytest.approx(0.0, abs=1e-15)

    def test_scaled_base(self):
        P = make_spd(2.0 * np.eye(2))
        v = TangentSymmetric(P, np.eye(2))
        assert airm_inner(P, v, v) == pytest.approx(0.5)

    def test_base_mismatch(self):
        P, Q = make_spd(np.eye(2)), make_spd(2 * np.eye(2))
        with pytest.raises(BaseMismatch):
            airm_inner(P, TangentSymmetric(Q, np.eye(2)), TangentSymmetric(P, np.eye(2)))

    def test_symmetric_and_positive(self, rng):
        P = make_spd(random_spd(rng, 4))
        a, b = rng.standard_normal((2, 4, 4))
        v, w = a + a.T, b + b.T
        assert airm_inner(P, v, w) == pytest.approx(airm_inner(P, w, v), rel=1e-12)
        assert airm_inner(P, v, v) > 0


class TestDistances:
    def test_airm_zero_at_equal(self, rng):
        X = random_spd(rng, 5)
        assert airm_dist_sq(X, X) == pytest.approx(0.0, abs=1e-20)

    def test_airm_diagonal(self):
        assert airm_dist_sq(np.eye(2), np.diag([4.0, 4.0])) == pytest.approx(2 * math.log(4) ** 2, rel=1e-14)
        assert airm_dist_sq(np.eye(2), np.diag([4.0, 4.0])) == pytest.approx(3.843624, abs=1e-6)

    def test_airm_matches_generalised_eigenvalues(self, rng):
        X, Y = random_spd(rng, 5), random_spd(rng, 5)
        assert airm_dist_sq(X, Y) == pytest.approx(airm_dist_sq_geneig(X, Y), rel=1e-9)

    def test_stein_zero_at_equal(self, rng):
        Y = random_spd(rng, 4)
        assert stein_dist_sq(Y, Y) == pytest.approx(0.0, abs=1e-13)

    def test_stein_diagonal(self):
        # per diagonal entry: ln((1 + 2)/2) - ln(2)/2
        expected = 2 * math.log(1.5) - math.log(2.0)
        assert stein_dist_sq(np.eye(2), 2 * np.eye(2)) == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(0.1177830, abs=1e-7)

    def test_stein_matches_slogdet(self, rng):
        X, Y = random_spd(rng, 6), random_spd(rng, 6)
        assert stein_dist_sq(X, Y) == pytest.approx(stein_dist_sq_slogdet(X, Y), rel=1e-10)

    def test_stein_affine_invariance(self, rng):
        X, Y = random_spd(rng, 4), random_spd(rng, 4)
        M = random_invertible(rng, 4)
        assert stein_dist_sq(M @ X @ M.T, M @ Y @ M.T) == pytest.approx(stein_dist_sq(X, Y), rel=1e-8)

    def test_dim_mismatch(self):
        for fn in (airm_dist_sq, stein_dist_sq):
            with pytest.raises(DimMismatch):
                fn(np.eye(2), np.eye(3))

    def test_logdet_large_no_overflow(self):
        X = 1e4 * np.eye(200)
        assert logdet(X) == pytest.approx(200 * math.log(1e4))

    def test_dispatch(self, rng):
        X, Y = random_spd(rng, 3), random_spd(rng, 3)
        assert dist_sq(X, Y, "airm") == airm_dist_sq(X, Y)
        assert dist_sq(X, Y, Metric.STEIN) == stein_dist_sq(X, Y)
        with pytest.raises(ValueError):
            Metric.parse("euclid")

    @pytest.mark.parametrize("metric", ["airm", "stein"])
    def test_pairwise_matches_scalar(self, rng, metric):
        S = np.stack([random_spd(rng, 4) for _ in range(5)])
        T = np.stack([random_spd(rng, 4) for _ in range(3)])
        D = pairwise_dist_sq(S, metric)
        E = pairwise_dist_sq(S, metric, T)
        for i in range(5):
            assert D[i, i] == 0.0
            for j in range(5):
                assert D[i, j] == pytest.approx(dist_sq(S[i], S[j], metric), rel=1e-9, abs=1e-14)
            for j in range(3):
                assert E[i, j] == pytest.approx(dist_sq(S[i], T[j], metric), rel=1e-9)
        np.testing.assert_array_equal(D, D.T)

    @given(spd_strategy(), spd_strategy())
    @settings(max_examples=60, deadline=None)
    def test_symmetric_nonnegative(self, X, Y):
        if X.shape != Y.shape:
            return
        for fn in (airm_dist_sq, stein_dist_sq):
            a, b = fn(X, Y), fn(Y, X)
            assert a >= 0 and b >= 0
            assert a == pytest.approx(b, rel=1e-8, abs=1e-12)

    @given(spd_strategy(), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_affine_invariance_property(self, X, seed):
        rng = np.random.default_rng(seed)
        n = X.shape[0]
        Y = random_spd(rng, n)
        M = random_invertible(rng, n)
        for fn in (airm_dist_sq, stein_dist_sq):
            d = fn(X, Y)
            assert fn(M @ X @ M.T, M @ Y @ M.T) == pytest.approx(d, rel=1e-8, abs=1e-12)

    def test_spdmatrix_inputs_accepted(self, rng):
        X, Y = random_spd(rng, 3), random_spd(rng, 3)
        assert airm_dist_sq(SpdMatrix(X), SpdMatrix(Y)) == pytest.approx(airm_dist_sq(X, Y))
