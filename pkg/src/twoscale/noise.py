"""Noise models: affine Gaussian martingale noise and Markov-chain noise."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch


@dataclass(frozen=True)
class MartingaleNoiseSpec:
    """Affine Gaussian perturbation ``V = F + A_t theta + A_w w``.

    Every entry of ``F``, ``A_t`` and ``A_w`` is i.i.d. ``N(0, scale**2)``,
    drawn fresh at each step (``scale_V`` for the slow noise, ``scale_W`` for
    the fast one).  Optional explicit covariances override the ones implied by
    the scales at the fixed point.
    """

    scale_V: float = 0.1
    scale_W: float = 0.5
    sigma11: np.ndarray = None
    sigma12: np.ndarray = None
    sigma22: np.ndarray = None

    def __post_init__(self):
        if not (self.scale_V >= 0 and self.scale_W >= 0):
            raise ConfigError("noise scales must be nonnegative")
        for name in ("sigma11", "sigma22"):
            S = getattr(self, name)
            if S is not None:
                S = np.atleast_2d(np.asarray(S, dtype=float))
                if np.max(np.abs(S - S.T)) > 1e-10 or np.linalg.eigvalsh(0.5 * (S + S.T)).min() < -1e-12:
                    raise ConfigError(f"{name} must be symmetric positive semidefinite")
                object.__setattr__(self, name, S)
        if self.sigma12 is not None:
            object.__setattr__(self, "sigma12", np.atleast_2d(np.asarray(self.sigma12, dtype=float)))

    def variance_factor(self, theta, w):
        """``1 + ||theta||^2 + ||w||^2`` along the last axis."""
        theta = np.asarray(theta, dtype=float)
        w = np.asarray(w, dtype=float)
        return 1.0 + np.sum(theta * theta, axis=-1) + np.sum(w * w, axis=-1)

    def covariances_at(self, theta_star, w_star):
        """``(Sigma11, Sigma12, Sigma22)`` of the noise evaluated at the fixed point.

        For the affine Gaussian model the components of ``V`` are independent
        with variance ``scale_V**2 (1 + ||theta||^2 + ||w||^2)``, and ``V`` is
        independent of ``W``.
        """
        dt, dw = len(theta_star), len(w_star)
        f = float(self.variance_factor(theta_star, w_star))
        s11 = self.sigma11 if self.sigma11 is not None else self.scale_V**2 * f * np.eye(dt)
        s22 = self.sigma22 if self.sigma22 is not None else self.scale_W**2 * f * np.eye(dw)
        s12 = self.sigma12 if self.sigma12 is not None else np.zeros((dt, dw))
        return s11, s12, s22

    def moment_constants(self, d_theta, d_w):
        """``(m_V, m_W)`` with ``||E[V V^T]|| <= m_V (1 + ||E theta theta^T|| + ||E w w^T||)``.

        ``E[V V^T] = scale_V^2 (1 + E||theta||^2 + E||w||^2) I`` and
        ``E||theta||^2 <= d_theta ||E theta theta^T||``, so
        ``m_V = scale_V^2 max(d_theta, d_w)`` and likewise for ``m_W``.
        """
        d = max(d_theta, d_w, 1)
        return self.scale_V**2 * d, self.scale_W**2 * d


def draw_martingale_noise(spec, theta, w, rng, explicit=False):
    """One draw of ``(V_{k+1}, W_{k+1})`` at the current iterate.

    Parameters
    ----------
    spec : MartingaleNoiseSpec
    theta, w : ndarray
        Current iterates, either single vectors or batches along axis 0.
    rng : numpy.random.Generator
    explicit : bool
        If True, sample the perturbation matrices ``F, A_t, A_w`` literally
        (single iterate only).  Otherwise use the equivalent closed form:
        given the iterate, ``V`` is exactly ``N(0, scale_V^2 (1 + ||theta||^2
        + ||w||^2) I)``, which needs ``d`` normals instead of ``d (1 + 2d)``.
    """
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    if explicit:
        if theta.ndim != 1 or w.ndim != 1:
            raise DimensionMismatch("explicit sampling takes a single iterate")
        dt, dw = len(theta), len(w)
        sv, sw = spec.scale_V, spec.scale_W
        V = (sv * rng.standard_normal(dt) + sv * rng.standard_normal((dt, dt)) @ theta
             + sv * rng.standard_normal((dt, dw)) @ w)
        W = (sw * rng.standard_normal(dw) + sw * rng.standard_normal((dw, dt)) @ theta
             + sw * rng.standard_normal((dw, dw)) @ w)
        return V, W
    root = np.sqrt(spec.variance_factor(theta, w))[..., None]
    V = spec.scale_V * root * rng.standard_normal(theta.shape)
    W = spec.scale_W * root * rng.standard_normal(w.shape)
    return V, W


def markov_noise(model, sys, x, theta, w):
    """Noise at chain state ``x`` (the state reached at step ``k+1``).

    ``V = (b1~(x) - b1) - (A11~(x) - A11) theta - (A12~(x) - A12) w`` and the
    analogous expression for ``W``.  ``x``, ``theta`` and ``w`` may be batched
    along axis 0.
    """
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    dA11 = model.obs_A11[x] - sys.A11
    dA12 = model.obs_A12[x] - sys.A12
    dA21 = model.obs_A21[x] - sys.A21
    dA22 = model.obs_A22[x] - sys.A22
    V = (model.obs_b1[x] - sys.b1) - _matvec(dA11, theta) - _matvec(dA12, w)
    W = (model.obs_b2[x] - sys.b2) - _matvec(dA21, theta) - _matvec(dA22, w)
    return V, W


def _matvec(M, v):
    return np.einsum("...ij,...j->...i", M, v)
