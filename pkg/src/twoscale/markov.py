"""Finite-state Markov noise: stationary laws, Poisson equations, sampling."""
from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    DimensionMismatch, NotErgodic, Reducible, SingularFundamentalMatrix,
)
from .system import LinearSystem, check_a1

ROW_TOL = 1e-12
OBS_NAMES = ("b1", "b2", "A11", "A12", "A21", "A22")


def _as_kernel(P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"kernel must be square, got {P.shape}")
    if np.any(P < 0.0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_TOL:
        raise ValueError("kernel rows must be probability vectors")
    return P


def _components(P):
    n, labels = connected_components(P > 0.0, directed=True, connection="strong")
    return n, labels


def closed_classes(P):
    """Communicating classes that cannot be left, as lists of state indices."""
    P = _as_kernel(P)
    n, labels = _components(P)
    adj = P > 0.0
    closed = []
    for c in range(n):
        members = np.flatnonzero(labels == c)
        outside = np.flatnonzero(labels != c)
        if not adj[np.ix_(members, outside)].any():
            closed.append(members.tolist())
    return closed


def is_irreducible(P):
    return _components(_as_kernel(P))[0] == 1


def period(P):
    """Period of an irreducible chain from BFS levels: gcd of level(u)+1-level(v) over edges."""
    P = _as_kernel(P)
    adj = P > 0.0
    order, pred = breadth_first_order(adj, 0, directed=True, return_predecessors=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        if level[u] >= 0 and level[v] >= 0:
            g = gcd(g, int(level[u] + 1 - level[v]))
    return abs(g)


def check_ergodic(P):
    """Raise ``NotErgodic`` unless the chain is irreducible and aperiodic."""
    if not is_irreducible(P):
        raise Reducible("chain is not irreducible")
    d = period(P)
    if d != 1:
        raise NotErgodic(f"chain is periodic with period {d}")
    return True


def stationary_distribution(P):
    """Unique invariant probability vector ``mu`` with ``mu P = mu``.

    Solves ``mu (I - P + 1 1^T) = 1^T``, which is non-singular exactly when the
    chain has a single closed class.  Transient states get zero mass.

    Raises
    ------
    Reducible
        If the chain has more than one closed class.
    """
    P = _as_kernel(P)
    if len(closed_classes(P)) != 1:
        raise Reducible("chain has several closed classes; invariant law is not unique")
    n = P.shape[0]
    M = np.eye(n) - P + np.ones((n, n))
    mu = np.linalg.solve(M.T, np.ones(n))
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    # one step of power iteration polishes the residual to machine precision
    mu = mu @ P
    return mu / mu.sum()


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """A finite chain with per-state observations of the linear system.

    ``obs_b1[x]`` is the vector observed in state ``x``; ``obs_A11[x]`` and so
    on are the matrices.  Arrays are stacked along the leading state axis.
    """

    P: np.ndarray
    obs_b1: np.ndarray
    obs_b2: np.ndarray
    obs_A11: np.ndarray
    obs_A12: np.ndarray
    obs_A21: np.ndarray
    obs_A22: np.ndarray
    mu: np.ndarray = field(default=None)

    def __post_init__(self):
        P = _as_kernel(self.P)
        object.__setattr__(self, "P", P)
        n = P.shape[0]
        for name in OBS_NAMES:
            arr = np.asarray(getattr(self, "obs_" + name), dtype=float)
            if arr.shape[0] != n:
                raise DimensionMismatch(f"obs_{name} has {arr.shape[0]} states, kernel has {n}")
            object.__setattr__(self, "obs_" + name, arr)
        if self.mu is None:
            object.__setattr__(self, "mu", stationary_distribution(P))

    @property
    def n_states(self):
        return self.P.shape[0]

    def observations(self, x):
        return {name: getattr(self, "obs_" + name)[x] for name in OBS_NAMES}


@dataclass(frozen=True)
class PoissonSolution:
    hat_f: np.ndarray
    bound: float
    mean: np.ndarray


def _state_norms(values):
    if values.ndim == 1:
        return np.abs(values)
    if values.ndim == 2:
        return np.linalg.norm(values, axis=1)
    return np.linalg.norm(values, ord=2, axis=(1, 2))


def solve_poisson(P, f, mu=None):
    """Centred solution of ``f(x) - E_mu f = fhat(x) - (P fhat)(x)``.

    ``fhat = (I - P + 1 mu^T)^{-1} (f - E_mu f)`` column by column, which also
    gives ``E_mu fhat = 0``.  ``f`` has the state index on axis 0 and any shape
    after it; the returned ``bound`` is ``max_x ||fhat(x)||`` (Euclidean for
    vectors, spectral for matrices).
    """
    if isinstance(P, MarkovModel):
        mu = P.mu if mu is None else mu
        P = P.P
    P = _as_kernel(P)
    n = P.shape[0]
    if mu is None:
        mu = stationary_distribution(P)
    f = np.asarray(f, dtype=float)
    if f.shape[0] != n:
        raise DimensionMismatch(f"f has {f.shape[0]} states, kernel has {n}")
    flat = f.reshape(n, -1)
    mean = mu @ flat
    Z = np.eye(n) - P + np.outer(np.ones(n), mu)
    if np.linalg.cond(Z) > 1e13:
        raise SingularFundamentalMatrix("fundamental matrix is numerically singular")
    hat = np.linalg.solve(Z, flat - mean)
    hat = hat.reshape(f.shape)
    return PoissonSolution(hat_f=hat, bound=float(_state_norms(hat).max()),
                           mean=mean.reshape(f.shape[1:]))


def mean_fields(model, check=True):
    """Stationary averages of the per-state observations as a ``LinearSystem``."""
    mu = model.mu
    fields = {name: np.tensordot(mu, getattr(model, "obs_" + name), axes=1) for name in OBS_NAMES}
    sys = LinearSystem(**fields)
    if check:
        check_a1(sys)
    return sys


class ChainSampler:
    """Inverse-CDF sampler over the rows of a kernel; vectorised across chains."""

    def __init__(self, P):
        P = _as_kernel(P)
        self.P = P
        cdf = np.cumsum(P, axis=1)
        cdf[:, -1] = 1.0
        self.cdf = cdf

    def step(self, x, u):
        """Next states for current states ``x`` and uniforms ``u`` (same shape)."""
        rows = self.cdf[x]
        nxt = (rows <= np.asarray(u)[..., None]).sum(axis=-1)
        return np.minimum(nxt, self.P.shape[0] - 1)

    def stationary_draw(self, mu, u):
        cdf = np.cumsum(mu)
        cdf[-1] = 1.0
        return np.minimum(np.searchsorted(cdf, u, side="right"), len(mu) - 1)


def sample_chain(P, x0, K, rng):
    """Trajectory ``X_0 = x0, X_1, ..., X_K`` (length ``K + 1``).

    ``X_{k+1}`` is drawn from row ``X_k`` by inverse CDF on one uniform from
    ``rng`` per step, so the path is a deterministic function of the stream.
    """
    if isinstance(P, MarkovModel):
        P = P.P
    sampler = ChainSampler(P)
    n = sampler.P.shape[0]
    if not 0 <= int(x0) < n:
        raise ValueError(f"initial state {x0} outside 0..{n - 1}")
    u = rng.random(K)
    out = np.empty(K + 1, dtype=np.int64)
    out[0] = x = int(x0)
    cdf = sampler.cdf
    for k in range(K):
        x = min(int(np.searchsorted(cdf[x], u[k], side="right")), n - 1)
        out[k + 1] = x
    return out
