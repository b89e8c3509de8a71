"""Problem generators: random toy systems and Garnet MDPs evaluated with GTD."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ExhaustedResampling
from .markov import MarkovModel, check_ergodic, is_irreducible, period, stationary_distribution
from .noise import MartingaleNoiseSpec
from .system import LinearSystem, check_a1, fixed_point, from_solution, satisfies_a1

MAX_RESAMPLES = 100_000


@dataclass(frozen=True)
class ToyInstance:
    system: LinearSystem
    noise: MartingaleNoiseSpec
    theta_star: np.ndarray
    w_star: np.ndarray
    resamples: int


def _toy_draw(d, rng):
    T = rng.uniform(-1.0, 1.0, (d, d))
    Q, _ = np.linalg.qr(T)
    lam0 = rng.uniform(-1.0, 1.0, d)
    if np.any(lam0 <= 0.0):
        # A22 = Q^T diag(lam0) Q is similar to diag(lam0); the draw cannot pass
        return None
    R = rng.uniform(-1.0, 1.0, (d, d))
    lam1 = rng.uniform(-1.0, 1.0, d)
    theta = rng.uniform(-1.0, 1.0, d)
    w = rng.uniform(-1.0, 1.0, d)
    return from_solution(
        A11=R @ R.T + np.eye(d), A12=Q, A21=Q.T @ np.diag(lam1),
        A22=Q.T @ np.diag(lam0) @ Q, theta=theta, w=w,
    ), theta, w


def random_toy_instance(d, seed, scale_V=0.1, scale_W=0.5, max_resamples=MAX_RESAMPLES):
    """Random two-timescale system with a known solution.

    ``A12 = Q`` from the QR factorisation of a ``U[-1,1]`` matrix,
    ``A22 = Q^T Lambda0 Q``, ``A11 = R R^T + I``, ``A21 = Q^T Lambda1`` with
    diagonal ``Lambda0, Lambda1`` and ``R`` all ``U[-1,1]``; the solution
    ``(theta*, w*)`` is ``U[-1,1]`` and ``b1, b2`` are built from it.  Whole
    draws are rejected until both stability conditions hold.

    Since ``A12 A22^{-1} A21 = Lambda0^{-1} Lambda1``, acceptance needs every
    entry of ``Lambda0`` positive (probability ``2^-d``) and
    ``R R^T + I - Lambda0^{-1} Lambda1`` positive definite; for ``d = 10``
    roughly one draw in several thousand passes.
    """
    if int(d) < 1:
        raise ConfigError("dimension must be at least 1")
    d = int(d)
    rng = np.random.default_rng(seed)
    for attempt in range(max_resamples + 1):
        draw = _toy_draw(d, rng)
        if draw is None:
            continue
        sys, theta, w = draw
        if satisfies_a1(sys):
            noise = MartingaleNoiseSpec(scale_V=scale_V, scale_W=scale_W)
            return ToyInstance(system=sys, noise=noise, theta_star=theta, w_star=w,
                               resamples=attempt)
    raise ExhaustedResampling(f"no stable draw in {max_resamples + 1} attempts (d={d}, seed={seed})")


@dataclass(frozen=True)
class GarnetSpec:
    n_states: int = 30
    n_actions: int = 2
    branching: int = 2
    n_features: int = 8
    discount: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if min(self.n_states, self.n_actions, self.branching, self.n_features) < 1:
            raise ConfigError("Garnet sizes must be positive")
        if self.branching > self.n_states:
            raise ConfigError("branching cannot exceed the number of states")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class GtdProblem:
    """A finite MDP with a fixed policy and linear features.

    ``p[s, a, s']`` transition kernel, ``rewards[s, a]``, ``features[s]``,
    ``policy[s, a]``; ``p_pi`` is the induced state chain.
    """

    p: np.ndarray
    rewards: np.ndarray
    features: np.ndarray
    policy: np.ndarray
    discount: float
    resamples: int = 0

    @property
    def p_pi(self):
        return np.einsum("sa,sat->st", self.policy, self.p)

    @property
    def n_states(self):
        return self.p.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


def garnet_instance(spec, max_resamples=MAX_RESAMPLES):
    """Random Garnet MDP with uniform policy, ``U[0,1]`` rewards and features.

    The transition kernel is redrawn until the state chain under the
    uniform policy is irreducible and aperiodic.
    """
    rng = np.random.default_rng(spec.seed)
    nS, nA, b = spec.n_states, spec.n_actions, spec.branching
    policy = np.full((nS, nA), 1.0 / nA)
    for attempt in range(max_resamples + 1):
        p = np.zeros((nS, nA, nS))
        for s in range(nS):
            for a in range(nA):
                succ = rng.choice(nS, size=b, replace=False)
                weights = rng.uniform(0.0, 1.0, b)
                p[s, a, succ] = weights / weights.sum()
        p_pi = np.einsum("sa,sat->st", policy, p)
        if is_irreducible(p_pi) and period(p_pi) == 1:
            break
    else:
        raise ExhaustedResampling(f"no ergodic Garnet kernel in {max_resamples + 1} draws")
    features = rng.uniform(0.0, 1.0, (nS, spec.n_features))
    rewards = rng.uniform(0.0, 1.0, (nS, nA))
    return GtdProblem(p=p, rewards=rewards, features=features, policy=policy,
                      discount=spec.discount, resamples=attempt)


def _gtd_expectations(prob):
    """Stationary moments ``E[phi phi^T]``, ``E[phi' phi^T]``, ``E[phi r]``."""
    P = prob.p_pi
    check_ergodic(P)
    mu = stationary_distribution(P)
    phi = prob.features
    rbar = np.sum(prob.policy * prob.rewards, axis=1)
    D = np.diag(mu)
    Ephiphi = phi.T @ D @ phi
    # E[phi_{k+1} phi_k^T] = sum_s mu(s) (sum_s' p_pi(s'|s) phi(s')) phi(s)^T
    Enext = (P @ phi).T @ D @ phi
    Ephir = phi.T @ (mu * rbar)
    return Ephiphi, Enext, Ephir


def gtd_system(prob, check=True):
    """Exact stationary mean fields of GTD on ``prob``.

    ``A12 = -E[(phi_k - rho phi_{k+1}) phi_k^T]``, ``A21 = -A12^T``,
    ``A22 = I``, ``b2 = E[phi_k r_k]``, ``A11 = 0``, ``b1 = 0``.
    """
    Ephiphi, Enext, Ephir = _gtd_expectations(prob)
    rho = prob.discount
    d = prob.n_features
    A12 = -(Ephiphi - rho * Enext)
    A21 = -(rho * Enext.T - Ephiphi)
    sys = LinearSystem(b1=np.zeros(d), b2=Ephir, A11=np.zeros((d, d)), A12=A12, A21=A21,
                       A22=np.eye(d))
    if check:
        check_a1(sys)
    return sys


def gtd_triples(prob):
    """Reachable transitions ``(s, a, s')`` with positive stationary probability."""
    mu = stationary_distribution(prob.p_pi)
    mask = (mu[:, None, None] > 0) & (prob.policy[:, :, None] > 0) & (prob.p > 0)
    return np.argwhere(mask)


def gtd_markov_model(prob):
    """Chain on transitions ``x = (s, a, s')`` with per-transition GTD observations.

    The next transition starts from ``s'``; its law is
    ``pi(a'|s') p(s''|s', a')``.  The stationary law is
    ``mu(s) pi(a|s) p(s'|s,a)`` and the observation averages reproduce
    :func:`gtd_system` exactly.
    """
    trip = gtd_triples(prob)
    n = len(trip)
    s, a, s2 = trip[:, 0], trip[:, 1], trip[:, 2]
    prob_trip = prob.policy[s, a] * prob.p[s, a, s2]
    # transition from x=(s,a,s') to y=(s',a',s'') when y starts at s'
    P = np.where(s2[:, None] == s[None, :], prob_trip[None, :], 0.0)
    P /= P.sum(axis=1, keepdims=True)
    mu_s = stationary_distribution(prob.p_pi)
    mu = mu_s[s] * prob_trip
    mu /= mu.sum()
    phi, phi2 = prob.features[s], prob.features[s2]
    rho = prob.discount
    d = prob.n_features
    diff = phi - rho * phi2
    model = MarkovModel(
        P=P,
        obs_b1=np.zeros((n, d)),
        obs_b2=phi * prob.rewards[s, a][:, None],
        obs_A11=np.zeros((n, d, d)),
        obs_A12=-np.einsum("ni,nj->nij", diff, phi),
        obs_A21=-np.einsum("ni,nj->nij", phi, rho * phi2 - phi),
        obs_A22=np.broadcast_to(np.eye(d), (n, d, d)).copy(),
        mu=mu,
    )
    return model, trip


__all__ = [
    "ToyInstance", "random_toy_instance", "GarnetSpec", "GtdProblem", "garnet_instance",
    "gtd_system", "gtd_markov_model", "gtd_triples", "fixed_point",
]
