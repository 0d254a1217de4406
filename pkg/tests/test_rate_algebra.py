"""Composition math: projection, the three series truncations, baselines."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from word2rate.rate_algebra import (
    compose_cbow,
    compose_cmow,
    compose_fop,
    compose_fos,
    compose_hybrid,
    compose_sos,
    expand_fop_bruteforce,
    is_valid_rate_matrix,
    project_rate_matrix,
    random_rate_matrices,
    uniform_distribution,
)

Q_DOWN = np.array([[-1.0, 0.0], [1.0, 0.0]])  # moves mass 0 -> 1
Q_UP = np.array([[0.0, 1.0], [0.0, -1.0]])  # moves mass 1 -> 0
P2 = np.array([0.5, 0.5])


def finite_matrices(d, max_value=5.0):
    return arrays(
        np.float64,
        (d, d),
        elements=st.floats(-max_value, max_value, allow_nan=False, width=64),
    )


class TestUniformDistribution:
    def test_d2(self):
        np.testing.assert_array_equal(uniform_distribution(2), [0.5, 0.5])

    def test_d25_sums_to_one(self):
        p = uniform_distribution(25)
        assert p.shape == (25,)
        np.testing.assert_allclose(p, 0.04)
        assert math.isclose(p.sum(), 1.0, abs_tol=1e-15)

    def test_d1(self):
        np.testing.assert_array_equal(uniform_distribution(1), [1.0])

    def test_d0_rejected(self):
        with pytest.raises(ValueError):
            uniform_distribution(0)


class TestProjection:
    def test_hand_example(self):
        out = project_rate_matrix(np.array([[0.5, -0.3], [0.2, 0.4]]))
        np.testing.assert_array_equal(out, [[-0.2, 0.0], [0.2, 0.0]])

    def test_zero_matrix(self):
        out = project_rate_matrix(np.zeros((3, 3)))
        np.testing.assert_array_equal(out, np.zeros((3, 3)))

    def test_valid_matrix_is_fixed_point(self):
        rng = np.random.default_rng(3)
        q = random_rate_matrices(1, 4, rng)[0]
        np.testing.assert_array_equal(project_rate_matrix(q), q)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            project_rate_matrix(np.array([[np.inf, 0.0], [0.0, 0.0]]))

    def test_nonsquare_rejected(self):
        with pytest.raises(ValueError):
            project_rate_matrix(np.zeros((2, 3)))

    @given(finite_matrices(4))
    @settings(max_examples=60)
    def test_idempotent_and_valid(self, q):
        once = project_rate_matrix(q)
        twice = project_rate_matrix(once)
        np.testing.assert_array_equal(once, twice)
        assert is_valid_rate_matrix(once)


class TestComposeFos:
    def test_empty_is_identity(self):
        p = uniform_distribution(3)
        np.testing.assert_array_equal(compose_fos([], 0.5, p), p)

    def test_single_matrix_hand_value(self):
        np.testing.assert_allclose(
            compose_fos([Q_DOWN], 0.01, P2), [0.495, 0.505], atol=1e-15
        )

    def test_symmetric_matrix_fixes_uniform(self):
        q = np.array([[-1.0, 1.0], [1.0, -1.0]])
        for eps in (0.01, 0.5, 3.0):
            np.testing.assert_array_equal(compose_fos([q], eps, P2), P2)

    def test_exact_permutation_invariance(self):
        rng = np.random.default_rng(11)
        qs = list(random_rate_matrices(6, 5, rng, scale=0.3))
        p = uniform_distribution(5)
        base = compose_fos(qs, 0.07, p)
        for perm_seed in range(5):
            perm = np.random.default_rng(perm_seed).permutation(6)
            shuffled = [qs[i] for i in perm]
            np.testing.assert_array_equal(compose_fos(shuffled, 0.07, p), base)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            compose_fos([np.zeros((3, 3))], 0.1, P2)


class TestComposeFop:
    def test_single_matches_fos(self):
        np.testing.assert_array_equal(
            compose_fop([Q_DOWN], 0.01, P2), compose_fos([Q_DOWN], 0.01, P2)
        )

    def test_two_matrix_hand_value(self):
        np.testing.assert_allclose(
            compose_fop([Q_DOWN, Q_UP], 0.1, P2), [0.505, 0.495], atol=1e-15
        )

    def test_swapped_order_differs(self):
        np.testing.assert_allclose(
            compose_fop([Q_UP, Q_DOWN], 0.1, P2), [0.495, 0.505], atol=1e-15
        )

    def test_order_sensitivity_found_by_random_search(self):
        rng = np.random.default_rng(7)
        found = False
        for _ in range(50):
            a, b = random_rate_matrices(2, 3, rng, scale=1.0)
            p = uniform_distribution(3)
            delta = compose_fop([a, b], 0.1, p) - compose_fop([b, a], 0.1, p)
            if np.linalg.norm(delta) > 1e-9:
                found = True
                break
        assert found

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(13)
        p = uniform_distribution(4)
        for length in range(1, 9):
            qs = list(random_rate_matrices(length, 4, rng))
            fast = compose_fop(qs, 0.01, p)
            slow = expand_fop_bruteforce(qs, 0.01, p)
            np.testing.assert_allclose(fast, slow, atol=1e-12, rtol=0)


class TestComposeSos:
    def test_empty_is_identity(self):
        p = uniform_distribution(4)
        np.testing.assert_array_equal(compose_sos([], 0.1, p), p)

    def test_two_words_match_explicit_six_term_form(self):
        rng = np.random.default_rng(19)
        q1, q2 = random_rate_matrices(2, 5, rng, scale=0.5)
        p = uniform_distribution(5)
        eps = 0.01
        eye = np.eye(5)
        explicit = (
            eye
            + eps * q1
            + eps * q2
            + eps**2 * (q2 @ q1)
            + eps**2 / 2.0 * (q1 @ q1)
            + eps**2 / 2.0 * (q2 @ q2)
        ) @ p
        np.testing.assert_allclose(compose_sos([q1, q2], eps, p), explicit, atol=1e-12, rtol=0)

    def test_single_word_matches_truncated_exponential(self):
        # reference: high-order series for exp(eps*Q) @ p
        rng = np.random.default_rng(23)
        q = random_rate_matrices(1, 4, rng, scale=1.0)[0]
        p = uniform_distribution(4)

        def expm_apply(eps):
            v = p.copy()
            total = p.copy()
            for k in range(1, 30):
                v = (eps / k) * (q @ v)
                total = total + v
            return total

        errs = []
        for eps in (1e-1, 1e-2, 1e-3):
            errs.append(np.linalg.norm(compose_sos([q], eps, p) - expm_apply(eps)))
        # third-order remainder: each epsilon decade shrinks the error ~1000x
        assert 500 < errs[0] / errs[1] < 2000
        assert 500 < errs[1] / errs[2] < 2000


class TestBaselines:
    def test_cbow_sum(self):
        out = compose_cbow([np.array([1.0, 2.0]), np.array([3.0, 4.0])])
        np.testing.assert_array_equal(out, [4.0, 6.0])

    def test_cbow_empty_is_zero(self):
        np.testing.assert_array_equal(compose_cbow([], dim=3), np.zeros(3))

    def test_cbow_permutation_identical(self):
        rng = np.random.default_rng(2)
        vs = [rng.normal(size=4) for _ in range(5)]
        base = compose_cbow(vs)
        np.testing.assert_array_equal(compose_cbow(vs[::-1]), base)

    def test_cmow_single_unrolls(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(compose_cmow([m]), [1.0, 2.0, 3.0, 4.0])

    def test_cmow_identities(self):
        eye = np.eye(2)
        np.testing.assert_array_equal(compose_cmow([eye, eye, eye]), eye.reshape(-1))

    def test_cmow_hand_product_order(self):
        m1 = np.array([[1.0, 2.0], [3.0, 4.0]])
        m2 = np.array([[0.0, 1.0], [1.0, 0.0]])
        # first word rightmost: M2 @ M1
        np.testing.assert_array_equal(compose_cmow([m1, m2]), [3.0, 4.0, 1.0, 2.0])
        np.testing.assert_array_equal(compose_cmow([m2, m1]), [2.0, 1.0, 4.0, 3.0])

    def test_hybrid_concat(self):
        np.testing.assert_array_equal(
            compose_hybrid(np.array([1.0, 2.0]), np.array([3.0])), [1.0, 2.0, 3.0]
        )

    def test_hybrid_with_empty(self):
        a = np.array([1.0, 2.0])
        np.testing.assert_array_equal(compose_hybrid(a, np.array([])), a)


class TestBruteforceOracle:
    def test_one_word_two_terms(self):
        p = uniform_distribution(2)
        expected = p + 0.1 * (Q_DOWN @ p)
        np.testing.assert_allclose(
            expand_fop_bruteforce([Q_DOWN], 0.1, p), expected, atol=1e-15
        )

    def test_two_words_four_terms(self):
        rng = np.random.default_rng(5)
        q1, q2 = random_rate_matrices(2, 3, rng, scale=0.5)
        p = uniform_distribution(3)
        eps = 0.05
        expected = p + eps * (q1 @ p) + eps * (q2 @ p) + eps * eps * (q2 @ (q1 @ p))
        np.testing.assert_allclose(
            expand_fop_bruteforce([q1, q2], eps, p), expected, atol=1e-14, rtol=0
        )

    def test_too_long_rejected(self):
        p = uniform_distribution(2)
        with pytest.raises(ValueError):
            expand_fop_bruteforce([Q_DOWN] * 13, 0.1, p)


class TestConservationAndStochasticity:
    @pytest.mark.parametrize("d", [2, 5, 25])
    def test_entry_sums_preserved(self, d):
        rng = np.random.default_rng(d)
        p = uniform_distribution(d)
        for length in range(1, 9):
            qs = list(random_rate_matrices(length, d, rng))
            for eps in (0.01, 0.001):
                for compose in (compose_fos, compose_fop, compose_sos):
                    assert abs(compose(qs, eps, p).sum() - 1.0) < 1e-12

    def test_factor_is_stochastic_for_small_eps(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            q = random_rate_matrices(1, 6, rng, scale=0.8)[0]
            eps = 1.0 / np.abs(np.diag(q)).max()
            factor = np.eye(6) + eps * q
            assert np.all(factor >= 0.0)
            np.testing.assert_allclose(factor.sum(axis=0), 1.0, atol=1e-12)

    def test_fop_output_is_probability_vector_for_small_eps(self):
        rng = np.random.default_rng(37)
        p = uniform_distribution(5)
        for _ in range(20):
            qs = list(random_rate_matrices(6, 5, rng, scale=0.8))
            eps = 1.0 / max(np.abs(np.diag(q)).max() for q in qs)
            out = compose_fop(qs, eps, p)
            assert np.all(out >= 0.0)
            assert abs(out.sum() - 1.0) < 1e-12

    @given(st.integers(2, 6), st.integers(0, 10_000))
    @settings(max_examples=40)
    def test_conservation_property(self, d, seed):
        rng = np.random.default_rng(seed)
        qs = list(random_rate_matrices(4, d, rng, scale=1.0))
        p = uniform_distribution(d)
        for compose in (compose_fos, compose_fop, compose_sos):
            assert abs(compose(qs, 0.01, p).sum() - 1.0) < 1e-12
