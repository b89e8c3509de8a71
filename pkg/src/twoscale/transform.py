"""Change of variables that decouples the fast iterate from the slow one.

With ``L_0 = 0`` and

    L_{k+1} = (L_k - g_k A22 L_k + b_k A22^{-1} A21 (Delta - A12 L_k))
              (I - b_k (Delta - A12 L_k))^{-1},

the matrices ``B11^k = Delta - A12 L_k``,
``B22^k = (b_k/g_k)(L_{k+1} + A22^{-1} A21) A12 + A22`` and
``C_k = L_{k+1} + A22^{-1} A21`` turn the coupled iteration into

    t~_{k+1} = (I - b_k B11^k) t~_k - b_k A12 w~_k - b_k V_{k+1}
    w~_{k+1} = (I - g_k B22^k) w~_k - b_k C_k V_{k+1} - g_k W_{k+1}

for ``t~_k = theta_k - theta*`` and ``w~_k = w_k - w* + C_{k-1} t~_k``.  The
noise enters with a minus sign here, so the raw iteration driven by
``(V, W)`` corresponds to this one driven by ``(-V, -W)``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BoundViolated, ContractionViolated, InverseFailed
from .linalg import spectral_norm, sym_sqrt, weighted_opnorm

BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class TransformBounds:
    L_inf: float
    C_inf: float


def transform_bounds(sys, cert22, cert_delta):
    """``L_inf = a_Delta / (2 ||A12||_{Q22,Q_Delta})`` and the matching ``C_inf``.

    ``C_inf = sqrt(lam_max(Q22)/lam_min(Q_Delta)) L_inf + ||A22^{-1} A21||``.
    With ``A12 = 0`` the recursion reduces to a decoupled linear system; then
    ``L_inf`` is 0 if also ``A21 = 0`` (``L_k`` stays 0) and infinite
    otherwise.
    """
    n12 = weighted_opnorm(sys.A12, cert22.Q, cert_delta.Q)
    if n12 > 0:
        L_inf = cert_delta.a / (2.0 * n12)
    elif not np.any(sys.A21):
        L_inf = 0.0
    else:
        L_inf = float("inf")
    C_inf = np.sqrt(cert22.lam_max / cert_delta.lam_min) * L_inf + spectral_norm(sys.A22_inv_A21)
    return TransformBounds(L_inf=float(L_inf), C_inf=float(C_inf))


class TransformContext:
    """System data shared by every step of one transform run.

    Holds the certificates and cached square roots so that the optional
    ``paranoid`` checks cost one small eigensolve each.
    """

    def __init__(self, sys, cert22, cert_delta, paranoid=True):
        self.sys = sys
        self.cert22 = cert22
        self.cert_delta = cert_delta
        self.paranoid = paranoid
        self.bounds = transform_bounds(sys, cert22, cert_delta)

    @cached_property
    def _roots(self):
        Q22, Qd = self.cert22.Q, self.cert_delta.Q
        return sym_sqrt(Q22), sym_sqrt(Q22, inverse=True), sym_sqrt(Qd), sym_sqrt(Qd, inverse=True)

    def norm_L(self, L):
        s22, _, _, sd_inv = self._roots
        return spectral_norm(s22 @ L @ sd_inv)

    def norm_Qd(self, M):
        _, _, sd, sd_inv = self._roots
        return spectral_norm(sd @ M @ sd_inv)

    def norm_Q22(self, M):
        s22, s22_inv, _, _ = self._roots
        return spectral_norm(s22 @ M @ s22_inv)


@dataclass(frozen=True)
class TransformState:
    """Transform matrices after ``k`` steps.

    ``L = L_k`` and ``B11 = B11^k``; ``C = C_{k-1}`` and ``B22 = B22^{k-1}``
    are the matrices produced by the step that led here (for ``k = 0``,
    ``C = A22^{-1} A21`` and ``B22 = A22``).
    """

    L: np.ndarray
    k: int
    B11: np.ndarray
    B22: np.ndarray
    C: np.ndarray

    @classmethod
    def initial(cls, sys):
        L = np.zeros((sys.d_w, sys.d_theta))
        return cls(L=L, k=0, B11=sys.delta.copy(), B22=sys.A22.copy(), C=sys.A22_inv_A21.copy())


def _right_solve(X, M):
    """``X M^{-1}``."""
    return np.linalg.solve(M.T, X.T).T


def l_step(state, beta, gamma, sys, ctx=None):
    """Advance the transform from ``k`` to ``k + 1``.

    Parameters
    ----------
    state : TransformState
    beta, gamma : float
        Steps ``beta_k, gamma_k``.
    sys : LinearSystem
    ctx : TransformContext, optional
        Enables the bound and contraction checks when ``ctx.paranoid``.

    Raises
    ------
    InverseFailed
        ``I - beta B11`` is singular, which only happens for steps beyond the
        caps.
    BoundViolated, ContractionViolated
        A paranoid check failed.
    """
    d_t = sys.d_theta
    B11 = state.B11
    M = np.eye(d_t) - beta * B11
    if np.linalg.cond(M) > 1e12:
        raise InverseFailed(f"I - beta B11 is singular at k={state.k} (beta={beta:g})")
    G = sys.A22_inv_A21
    num = state.L - gamma * (sys.A22 @ state.L) + beta * (G @ B11)
    L_next = _right_solve(num, M)
    C = L_next + G
    B22 = (beta / gamma) * (C @ sys.A12) + sys.A22
    B11_next = sys.delta - sys.A12 @ L_next
    if ctx is not None and ctx.paranoid:
        _paranoid(ctx, state, L_next, C, B11, B22, beta, gamma)
    return TransformState(L=L_next, k=state.k + 1, B11=B11_next, B22=B22, C=C)


def _paranoid(ctx, state, L_next, C, B11, B22, beta, gamma):
    b = ctx.bounds
    k = state.k
    nL = ctx.norm_L(L_next)
    if nL > b.L_inf + BOUND_SLACK:
        raise BoundViolated(f"||L_{k + 1}|| = {nL:.6g} exceeds L_inf = {b.L_inf:.6g}")
    nC = spectral_norm(C)
    if nC > b.C_inf + BOUND_SLACK:
        raise BoundViolated(f"||C_{k}|| = {nC:.6g} exceeds C_inf = {b.C_inf:.6g}")
    d_t, d_w = B11.shape[0], B22.shape[0]
    c11 = ctx.norm_Qd(np.eye(d_t) - beta * B11)
    if c11 > 1.0 - beta * ctx.cert_delta.a / 2.0 + BOUND_SLACK:
        raise ContractionViolated(f"||I - beta B11|| = {c11:.6g} at k={k}")
    c22 = ctx.norm_Q22(np.eye(d_w) - gamma * B22)
    if c22 > 1.0 - gamma * ctx.cert22.a / 2.0 + BOUND_SLACK:
        raise ContractionViolated(f"||I - gamma B22|| = {c22:.6g} at k={k}")


def transformed_step(theta_t, w_t, state, beta, gamma, V, W, sys, next_state=None, ctx=None):
    """One step of the decoupled iteration.

    ``state`` is the transform at ``k``; ``next_state`` (computed with
    :func:`l_step` if omitted) supplies ``B22^k`` and ``C_k``.  Returns
    ``(t~_{k+1}, w~_{k+1}, next_state)``.
    """
    if next_state is None:
        next_state = l_step(state, beta, gamma, sys, ctx)
    theta_n = theta_t - beta * (state.B11 @ theta_t) - beta * (sys.A12 @ w_t) - beta * V
    w_n = w_t - gamma * (next_state.B22 @ w_t) - beta * (next_state.C @ V) - gamma * W
    return theta_n, w_n, next_state


def raw_step(theta, w, sys, beta, gamma, V, W):
    theta_n = theta + beta * (sys.b1 - sys.A11 @ theta - sys.A12 @ w + V)
    w_n = w + gamma * (sys.b2 - sys.A21 @ theta - sys.A22 @ w + W)
    return theta_n, w_n


@dataclass(frozen=True)
class EquivalenceReport:
    max_deviation: float
    max_tracking_gap: float
    max_L_ratio: float
    steps: int


def equivalence_oracle(sys, schedule, V_seq, W_seq, theta0, w0, fp=None, ctx=None):
    """Run the raw and the decoupled iteration on the same noise.

    The raw iteration consumes ``(V_k, W_k)``; the decoupled one consumes
    ``(-V_k, -W_k)`` (see module docstring).  Returns the maximum over
    ``k <= K`` of ``||theta_k - theta* - t~_k|| + ||w_k - w* + C_{k-1} t~_k - w~_k||``,
    together with the largest gap in the tracking identity
    ``w_k - A22^{-1}(b2 - A21 theta_k) = w~_k - L_k t~_k`` and, when ``ctx``
    is given, the largest ``||L_k|| / L_inf``.
    """
    from .system import fixed_point

    if fp is None:
        fp = fixed_point(sys)
    V_seq = np.asarray(V_seq, dtype=float)
    W_seq = np.asarray(W_seq, dtype=float)
    K = V_seq.shape[0]
    theta = np.array(theta0, dtype=float)
    w = np.array(w0, dtype=float)
    state = TransformState.initial(sys)
    tt = theta - fp.theta_star
    wt = w - fp.w_star + state.C @ tt
    dev = gap = lratio = 0.0
    for k in range(K + 1):
        d1 = np.linalg.norm(theta - fp.theta_star - tt)
        d2 = np.linalg.norm(w - fp.w_star + state.C @ tt - wt)
        dev = max(dev, d1 + d2)
        track = w - sys.tracking_target(theta)
        gap = max(gap, float(np.linalg.norm(track - (wt - state.L @ tt))))
        if ctx is not None and np.isfinite(ctx.bounds.L_inf) and ctx.bounds.L_inf > 0:
            lratio = max(lratio, ctx.norm_L(state.L) / ctx.bounds.L_inf)
        if k == K:
            break
        beta, gamma = schedule.eval(k)
        theta, w = raw_step(theta, w, sys, beta, gamma, V_seq[k], W_seq[k])
        tt, wt, state = transformed_step(tt, wt, state, beta, gamma, -V_seq[k], -W_seq[k], sys,
                                         ctx=ctx)
    return EquivalenceReport(max_deviation=float(dev), max_tracking_gap=gap,
                             max_L_ratio=float(lratio), steps=K)
