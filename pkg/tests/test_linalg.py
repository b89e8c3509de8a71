import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twoscale.errors import DimensionMismatch, NonPositiveRate, NotHurwitz
from twoscale.linalg import (c_seq, is_spd, make_certificate, solve_lyapunov, spectral_norm,
                             varsigma, weighted_opnorm)


def random_hurwitz(rng, d):
    """A matrix whose negative is Hurwitz: shifted random Gaussian."""
    M = rng.standard_normal((d, d))
    shift = max(0.0, -np.linalg.eigvals(M).real.min()) + rng.uniform(0.1, 1.0)
    return M + shift * np.eye(d)


def random_spd(rng, d):
    G = rng.standard_normal((d, d))
    return G @ G.T + 0.5 * np.eye(d)


def kron_oracle(A):
    d = A.shape[0]
    eye = np.eye(d)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    return np.linalg.solve(K, eye.flatten(order="F")).reshape(d, d, order="F")


# ---- solve_lyapunov --------------------------------------------------------

def test_lyapunov_scalar():
    assert solve_lyapunov([[1.0]])[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_lyapunov_diagonal():
    Q = solve_lyapunov(np.diag([2.0, 3.0]))
    np.testing.assert_allclose(Q, np.diag([0.25, 1.0 / 6.0]), atol=1e-15)


def test_lyapunov_triangular_matches_kronecker_oracle():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    np.testing.assert_allclose(solve_lyapunov(A), kron_oracle(A), atol=1e-14)


def test_lyapunov_matches_scipy():
    from scipy.linalg import solve_continuous_lyapunov

    rng = np.random.default_rng(0)
    A = random_hurwitz(rng, 6)
    # scipy solves a X + X a^H = q; take a = A^T
    ref = solve_continuous_lyapunov(A.T, np.eye(6))
    np.testing.assert_allclose(solve_lyapunov(A), ref, atol=1e-10)


def test_lyapunov_rejects_non_hurwitz():
    with pytest.raises(NotHurwitz):
        solve_lyapunov(np.diag([1.0, -0.5]))
    with pytest.raises(NotHurwitz):
        solve_lyapunov([[0.0]])


def test_lyapunov_residual_random_draws():
    rng = np.random.default_rng(1)
    for _ in range(100):
        d = int(rng.integers(1, 9))
        A = random_hurwitz(rng, d)
        Q = solve_lyapunov(A)
        assert np.linalg.norm(A.T @ Q + Q @ A - np.eye(d), "fro") <= 1e-10 * d
        assert np.max(np.abs(Q - Q.T)) <= 1e-12
        assert is_spd(Q)


def test_lyapunov_rejects_non_square():
    with pytest.raises(DimensionMismatch):
        solve_lyapunov(np.ones((2, 3)))


# ---- weighted_opnorm --------------------------------------------------------

def test_opnorm_identity_same_weights():
    rng = np.random.default_rng(2)
    Q = random_spd(rng, 4)
    assert weighted_opnorm(np.eye(4), Q, Q) == pytest.approx(1.0, abs=1e-12)


def test_opnorm_scalar():
    assert weighted_opnorm([[3.0]], [[1.0]], [[1.0]]) == pytest.approx(3.0)


def test_opnorm_random_direction_oracle():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((3, 2))
    P, Q = random_spd(rng, 2), random_spd(rng, 3)
    x = rng.standard_normal((2, 10**4))
    x /= np.sqrt(np.einsum("ik,ij,jk->k", x, P, x))
    y = M @ x
    best = np.sqrt(np.einsum("ik,ij,jk->k", y, Q, y)).max()
    val = weighted_opnorm(M, P, Q)
    assert best <= val + 1e-12
    assert val - best <= 1e-6 * val


def test_opnorm_unweighted_is_spectral_norm():
    rng = np.random.default_rng(4)
    for _ in range(20):
        M = rng.standard_normal((4, 3))
        assert weighted_opnorm(M, np.eye(3), np.eye(4)) == pytest.approx(
            np.linalg.norm(M, 2), abs=1e-10)
        assert spectral_norm(M) == pytest.approx(np.linalg.norm(M, 2), abs=1e-10)


def test_opnorm_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        weighted_opnorm(np.ones((3, 2)), np.eye(3), np.eye(3))


# ---- certificates ----------------------------------------------------------

def test_certificate_scalar_classic_rule():
    c = make_certificate([[1.0]], rule="classic")
    assert c.Q[0, 0] == pytest.approx(0.5)
    assert c.a == pytest.approx(2.0)
    assert c.step_cap == pytest.approx(2.0)
    assert c.p == pytest.approx(1.0)


def test_certificate_diagonal_classic_rate():
    c = make_certificate(np.diag([2.0, 3.0]), rule="classic")
    assert c.a == pytest.approx(8.0)


def test_classic_rule_contraction_fails_for_small_q():
    # ||Q|| = 0.5 < 2: the textbook rate overstates the contraction
    c = make_certificate([[1.0]], rule="classic")
    s = 0.5 * c.step_cap
    assert c.contraction_factor(s) > 1.0 - c.a * s


def test_safe_rule_scalar():
    c = make_certificate([[1.0]])
    assert c.a == pytest.approx(0.5)
    assert c.step_cap == pytest.approx(1.0)
    assert c.contraction_factor(c.step_cap) <= 1.0 - c.a * c.step_cap + 1e-12


def test_safe_rule_agrees_with_classic_rule_for_large_q():
    A = np.diag([0.2, 0.25])  # ||Q|| = 2.5
    s, p = make_certificate(A), make_certificate(A, rule="classic")
    assert s.a == p.a and s.step_cap == p.step_cap


def test_contraction_grid_triangular():
    c = make_certificate(np.array([[2.0, 1.0], [0.0, 3.0]]))
    for i in range(1, 101):
        s = c.step_cap * i / 100
        assert c.contraction_factor(s) <= 1.0 - c.a * s + 1e-9


def test_contraction_grid_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        A = random_hurwitz(rng, int(rng.integers(1, 6)))
        c = make_certificate(A)
        assert c.p >= 1.0 and c.step_cap > 0 and c.a > 0
        for s in np.linspace(c.step_cap / 100, c.step_cap, 100):
            assert c.contraction_factor(s) <= 1.0 - c.a * s + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_contraction_property(d, seed):
    rng = np.random.default_rng(seed)
    c = make_certificate(random_hurwitz(rng, d))
    s = rng.uniform(0, c.step_cap)
    assert c.contraction_factor(s) <= 1.0 - c.a * s + 1e-9


# ---- c_seq ------------------------------------------------------------------

def test_c_seq_unit_limit():
    assert c_seq(2.0, varsigma=1.0, a22=1.0, a_delta=1.0) == pytest.approx(2.0)


def test_c_seq_hand_value():
    vs = varsigma(0.16, 0.4, 2.0, 1.0)
    assert vs == pytest.approx(1.1)
    assert c_seq(1.0, varsigma=vs, a22=2.0, a_delta=1.0) == pytest.approx(5.324)


def test_c_seq_second_branch():
    assert c_seq(0.5, varsigma=2.0, a22=3.0, a_delta=0.25) == pytest.approx(64.0)


def test_c_seq_rejects_nonpositive():
    with pytest.raises(NonPositiveRate):
        c_seq(0.0, varsigma=1.0, a22=1.0, a_delta=1.0)
