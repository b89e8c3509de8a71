"""Weighted operator norms and Lyapunov certificates.

For a symmetric positive definite ``Q`` the vector norm is
``||x||_Q = sqrt(x^T Q x)`` and the induced operator norm from
``(R^n, ||.||_P)`` to ``(R^m, ||.||_Q)`` is

    ||M||_{P,Q} = || Q^{1/2} M P^{-1/2} ||_2 .

The Lyapunov solver targets the equation ``A^T Q + Q A = I`` used to certify
that ``-A`` is Hurwitz.  It vectorises the equation into a dense
``d^2 x d^2`` linear system, which costs ``O(d^6)`` and is meant for the small
systems (``d <= 100``) handled in this package.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IllConditioned, NonPositiveRate, NotHurwitz

HURWITZ_MARGIN = 1e-9
EIG_FLOOR = 1e-14
SYMMETRY_TOL = 1e-10


def _as_square(A, name="A"):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {A.shape}")
    return A


def is_spd(Q, tol=SYMMETRY_TOL):
    """True when ``Q`` is symmetric (to ``tol``) with strictly positive spectrum."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        return False
    if np.max(np.abs(Q - Q.T), initial=0.0) > tol * max(1.0, np.max(np.abs(Q))):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() > 0.0)


def spectral_norm(M):
    """Largest singular value, computed from the eigenvalues of ``M^T M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    G = M.T @ M
    lam = np.linalg.eigvalsh(0.5 * (G + G.T))
    return float(np.sqrt(max(lam[-1], 0.0)))


def sym_sqrt(Q, inverse=False):
    """Symmetric square root (or inverse square root) of an SPD matrix.

    Eigenvalues are floored at ``EIG_FLOOR`` so nearly singular inputs do not
    produce NaNs.
    """
    Q = _as_square(Q, "Q")
    lam, U = np.linalg.eigh(0.5 * (Q + Q.T))
    lam = np.maximum(lam, EIG_FLOOR)
    root = np.sqrt(lam)
    if inverse:
        root = 1.0 / root
    return (U * root) @ U.T


def weighted_opnorm(M, P, Q):
    """Operator norm of ``M`` from the ``P``-weighted to the ``Q``-weighted norm.

    Parameters
    ----------
    M : array_like, shape (m, n)
    P : array_like, shape (n, n)
        SPD weight on the input space.
    Q : array_like, shape (m, m)
        SPD weight on the output space.

    Returns
    -------
    float
        ``max_{||x||_P = 1} ||M x||_Q``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    P = _as_square(P, "P")
    Q = _as_square(Q, "Q")
    m, n = M.shape
    if P.shape[0] != n or Q.shape[0] != m:
        raise DimensionMismatch(
            f"M is {m}x{n} but P is {P.shape[0]}x{P.shape[0]} and Q is {Q.shape[0]}x{Q.shape[0]}"
        )
    return spectral_norm(sym_sqrt(Q) @ M @ sym_sqrt(P, inverse=True))


def check_hurwitz(A, margin=HURWITZ_MARGIN, name="A"):
    """Raise ``NotHurwitz`` unless every eigenvalue of ``A`` has real part >= margin.

    That is the condition for ``-A`` to be Hurwitz with a numerical margin.
    """
    A = _as_square(A, name)
    re_min = float(np.linalg.eigvals(A).real.min())
    if not re_min >= margin:
        raise NotHurwitz(f"-{name} is not Hurwitz: min Re(eig({name})) = {re_min:.3e} < {margin:g}")
    return re_min


def solve_lyapunov(A, margin=HURWITZ_MARGIN):
    """Solve ``A^T Q + Q A = I`` for the symmetric positive definite ``Q``.

    Uses column-major vectorisation,
    ``(I kron A^T + A^T kron I) vec(Q) = vec(I)``.

    Raises
    ------
    NotHurwitz
        If some eigenvalue of ``A`` has real part below ``margin``.
    IllConditioned
        If the residual ``||A^T Q + Q A - I||_F`` exceeds ``1e-10 * d`` or the
        solution is not positive definite.
    """
    A = _as_square(A)
    check_hurwitz(A, margin)
    d = A.shape[0]
    eye = np.eye(d)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    vecQ = np.linalg.solve(K, eye.reshape(-1, order="F"))
    Q = vecQ.reshape(d, d, order="F")
    Q = 0.5 * (Q + Q.T)
    resid = np.linalg.norm(A.T @ Q + Q @ A - eye, "fro")
    if not resid <= 1e-10 * d:
        raise IllConditioned(f"Lyapunov residual {resid:.3e} exceeds {1e-10 * d:.1e}")
    if np.linalg.eigvalsh(Q).min() <= 0.0:
        raise IllConditioned("Lyapunov solution is not positive definite")
    return Q


@dataclass(frozen=True)
class LyapunovCertificate:
    """Contraction certificate for ``I - step * A`` in the ``Q``-norm.

    For every ``0 <= step <= step_cap``,
    ``||I - step * A||_Q <= 1 - a * step``.
    """

    A: np.ndarray
    Q: np.ndarray
    a: float
    step_cap: float
    p: float
    norm_Q: float
    norm_A_Q: float
    lam_min: float
    lam_max: float
    rule: str = "safe"

    def contraction_factor(self, step):
        return weighted_opnorm(np.eye(self.A.shape[0]) - step * self.A, self.Q, self.Q)


def make_certificate(A, rule="safe", margin=HURWITZ_MARGIN):
    """Build the Lyapunov certificate of ``A``.

    With ``rule="classic"`` the rate and cap are the textbook choices
    ``a = 1/(2||Q||^2)`` and ``step_cap = ||A||_Q^{-2} ||Q||^{-2} / 2``.  Those
    only imply the contraction ``||I - s A||_Q <= 1 - a s`` when
    ``||Q|| >= 2``; for smaller ``||Q||`` (e.g. ``A = [1]``) the inequality
    fails for every ``s > 0``.

    The default ``rule="safe"`` takes ``a = min(1/(2||Q||^2), 1/(4||Q||))``
    and ``step_cap = min(classic cap, 1/(2 ||Q|| ||A||_Q^2))``, which coincide
    with the classic values whenever ``||Q|| >= 2`` and always certify the
    contraction.
    """
    if rule not in ("safe", "classic"):
        raise ValueError(f"unknown certificate rule {rule!r}")
    A = _as_square(A)
    Q = solve_lyapunov(A, margin)
    lam = np.linalg.eigvalsh(Q)
    lam_min, lam_max = float(lam[0]), float(lam[-1])
    norm_Q = lam_max
    norm_A_Q = weighted_opnorm(A, Q, Q)
    a = 1.0 / (2.0 * norm_Q**2)
    cap = 0.5 / (norm_A_Q**2 * norm_Q**2)
    if rule == "safe":
        a = min(a, 1.0 / (4.0 * norm_Q))
        cap = min(cap, 1.0 / (2.0 * norm_Q * norm_A_Q**2))
    return LyapunovCertificate(
        A=A, Q=Q, a=a, step_cap=cap, p=lam_max / lam_min, norm_Q=norm_Q,
        norm_A_Q=norm_A_Q, lam_min=lam_min, lam_max=lam_max, rule=rule,
    )


def varsigma(beta0, gamma0, a22, a_delta):
    """Bound on consecutive step ratios, ``1 + max(gamma0 a22 / 8, beta0 a_delta / 16)``."""
    return 1.0 + max(gamma0 * a22 / 8.0, beta0 * a_delta / 16.0)


def c_seq(a, *, varsigma, a22, a_delta):
    """Constant bounding ``sum_j step_j^2 prod_{l>j} (1 - a step_l)`` by ``c_seq * step_{k+1}``.

    ``max((2/a) vs max(1, a22/(4 a_delta)), (4/a) vs^3)`` with ``vs`` the step
    ratio bound returned by :func:`varsigma`.
    """
    if not a > 0:
        raise NonPositiveRate(f"rate must be positive, got {a!r}")
    if not (varsigma > 0 and a22 > 0 and a_delta > 0):
        raise NonPositiveRate("varsigma, a22 and a_delta must be positive")
    first = (2.0 / a) * varsigma * max(1.0, a22 / (4.0 * a_delta))
    second = (4.0 / a) * varsigma**3
    return max(first, second)
