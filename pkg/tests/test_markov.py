import numpy as np
import pytest

from twoscale.errors import HurwitzViolated, NotErgodic, Reducible
from twoscale.markov import (ChainSampler, MarkovModel, check_ergodic, is_irreducible,
                             mean_fields, period, sample_chain, solve_poisson,
                             stationary_distribution)


def random_ergodic(rng, n, density=0.6):
    """Random irreducible aperiodic kernel: a cycle with self loop plus random edges."""
    P = rng.uniform(0, 1, (n, n)) * (rng.uniform(0, 1, (n, n)) < density)
    P[np.arange(n), (np.arange(n) + 1) % n] += rng.uniform(0.1, 1.0, n)
    P[0, 0] += 0.2
    return P / P.sum(axis=1, keepdims=True)


def scalar_model(P, values):
    n = len(values)
    z = np.zeros((n, 1))
    zz = np.zeros((n, 1, 1))
    A = np.asarray(values, dtype=float).reshape(n, 1, 1)
    return MarkovModel(P=P, obs_b1=z, obs_b2=z, obs_A11=A, obs_A12=zz, obs_A21=zz,
                       obs_A22=np.ones((n, 1, 1)))


# ---- stationary distribution --------------------------------------------------

def test_stationary_doubly_stochastic():
    np.testing.assert_allclose(stationary_distribution([[0.5, 0.5], [0.5, 0.5]]), [0.5, 0.5])


def test_stationary_two_state_balance():
    mu = stationary_distribution([[0.9, 0.1], [0.2, 0.8]])
    np.testing.assert_allclose(mu, [2 / 3, 1 / 3], atol=1e-15)


def test_stationary_iid_chain():
    mu0 = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(stationary_distribution(np.tile(mu0, (4, 1))), mu0, atol=1e-15)


def test_stationary_residual_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        P = random_ergodic(rng, int(rng.integers(2, 12)))
        mu = stationary_distribution(P)
        assert np.abs(mu @ P - mu).sum() <= 1e-12
        assert mu.min() >= 0 and mu.sum() == pytest.approx(1.0, abs=1e-15)


def test_stationary_reducible():
    with pytest.raises(Reducible):
        stationary_distribution(np.eye(2))


def test_ergodicity_checks():
    assert period([[0.0, 1.0], [1.0, 0.0]]) == 2
    with pytest.raises(NotErgodic):
        check_ergodic([[0.0, 1.0], [1.0, 0.0]])
    assert not is_irreducible(np.eye(3))
    assert check_ergodic([[0.5, 0.5], [1.0, 0.0]])
    with pytest.raises(ValueError):
        stationary_distribution([[0.5, 0.6], [0.5, 0.5]])


# ---- Poisson equation -----------------------------------------------------------

def test_poisson_iid_chain():
    mu = np.array([0.2, 0.5, 0.3])
    f = np.array([1.0, -2.0, 4.0])
    sol = solve_poisson(np.tile(mu, (3, 1)), f)
    np.testing.assert_allclose(sol.hat_f, f - mu @ f, atol=1e-14)


def test_poisson_constant_function():
    P = random_ergodic(np.random.default_rng(1), 4)
    sol = solve_poisson(P, np.full(4, 3.0))
    np.testing.assert_allclose(sol.hat_f, 0.0, atol=1e-14)
    assert sol.mean == pytest.approx(3.0)


def neumann_oracle(P, f, mu, K=10**4):
    g = f - mu @ f
    total = np.zeros_like(g)
    term = g.copy()
    for _ in range(K + 1):
        total += term
        term = P @ term
    return total


def test_poisson_neumann_three_state():
    P = np.array([[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]])
    f = np.array([1.0, 5.0, -2.0])
    mu = stationary_distribution(P)
    sol = solve_poisson(P, f)
    np.testing.assert_allclose(sol.hat_f, neumann_oracle(P, f, mu), atol=1e-8)


def _gap(P):
    ev = np.sort(np.abs(np.linalg.eigvals(P)))
    return 1.0 - ev[-2]


def test_poisson_random_chains():
    rng = np.random.default_rng(2)
    done = 0
    while done < 50:
        n = int(rng.integers(2, 8))
        P = random_ergodic(rng, n)
        f = rng.standard_normal((n, 2, 3))
        mu = stationary_distribution(P)
        sol = solve_poisson(P, f)
        resid = (f - sol.mean) - (sol.hat_f - np.tensordot(P, sol.hat_f, axes=1))
        assert np.abs(resid).max() <= 1e-10
        assert np.abs(np.tensordot(mu, sol.hat_f, axes=1)).max() <= 1e-12
        assert sol.bound >= np.linalg.norm(sol.hat_f, ord=2, axis=(1, 2)).max()
        if _gap(P) > 0.05:
            flat = f.reshape(n, -1)
            np.testing.assert_allclose(sol.hat_f.reshape(n, -1), neumann_oracle(P, flat, mu),
                                       atol=1e-8)
        done += 1


def test_poisson_accepts_model():
    P = random_ergodic(np.random.default_rng(3), 3)
    m = scalar_model(P, [1.0, 2.0, 3.0])
    sol = solve_poisson(m, m.obs_A11)
    assert sol.hat_f.shape == (3, 1, 1)


# ---- mean fields --------------------------------------------------------------

def test_mean_fields_single_state():
    m = scalar_model([[1.0]], [2.5])
    sys = mean_fields(m)
    assert sys.A11[0, 0] == 2.5


def test_mean_fields_cancellation():
    m = scalar_model([[0.5, 0.5], [0.5, 0.5]], [1.0, -1.0])
    assert mean_fields(m, check=False).A11[0, 0] == 0.0
    with pytest.raises(HurwitzViolated):
        mean_fields(m)


# ---- sampling -------------------------------------------------------------------

def test_sample_chain_absorbing():
    rng = np.random.default_rng(0)
    assert np.all(sample_chain(np.eye(3), 2, 50, rng) == 2)


def test_sample_chain_alternating():
    path = sample_chain([[0.0, 1.0], [1.0, 0.0]], 0, 6, np.random.default_rng(0))
    assert path.tolist() == [0, 1, 0, 1, 0, 1, 0]


def test_sample_chain_deterministic():
    P = random_ergodic(np.random.default_rng(4), 5)
    a = sample_chain(P, 0, 100, np.random.default_rng(9))
    b = sample_chain(P, 0, 100, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_sample_chain_visit_frequencies():
    P = random_ergodic(np.random.default_rng(5), 5)
    mu = stationary_distribution(P)
    path = sample_chain(P, 0, 10**6, np.random.default_rng(6))
    freq = np.bincount(path, minlength=5) / len(path)
    assert 0.5 * np.abs(freq - mu).sum() <= 5e-3


def test_sampler_matches_sample_chain():
    P = random_ergodic(np.random.default_rng(7), 6)
    rng = np.random.default_rng(8)
    path = sample_chain(P, 3, 200, rng)
    u = np.random.default_rng(8).random(200)
    s = ChainSampler(P)
    x = np.array([3])
    for k in range(200):
        x = s.step(x, u[k:k + 1])
        assert x[0] == path[k + 1]
