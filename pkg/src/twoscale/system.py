"""Mean-field linear systems and their fixed points."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, HurwitzViolated, SingularA22, SingularDelta
from .linalg import HURWITZ_MARGIN


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Coupled linear equations ``A11 t + A12 w = b1``, ``A21 t + A22 w = b2``.

    ``t`` (theta) is the slow variable of dimension ``d_theta`` and ``w`` the
    fast one of dimension ``d_w``.
    """

    b1: np.ndarray
    b2: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray

    def __post_init__(self):
        b1 = np.atleast_1d(np.asarray(self.b1, dtype=float))
        b2 = np.atleast_1d(np.asarray(self.b2, dtype=float))
        dt, dw = b1.shape[0], b2.shape[0]
        shapes = {
            "A11": (dt, dt), "A12": (dt, dw), "A21": (dw, dt), "A22": (dw, dw),
        }
        for name, shape in shapes.items():
            M = np.array(np.atleast_2d(getattr(self, name)), dtype=float)
            if M.shape != shape:
                raise DimensionMismatch(f"{name} has shape {M.shape}, expected {shape}")
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        for name, v in (("b1", b1), ("b2", b2)):
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def d_theta(self):
        return self.b1.shape[0]

    @property
    def d_w(self):
        return self.b2.shape[0]

    @cached_property
    def A22_inv_A21(self):
        return np.linalg.solve(self.A22, self.A21)

    @cached_property
    def delta(self):
        """Schur complement ``A11 - A12 A22^{-1} A21``."""
        return self.A11 - self.A12 @ self.A22_inv_A21

    def residual(self, theta, w):
        r1 = self.A11 @ theta + self.A12 @ w - self.b1
        r2 = self.A21 @ theta + self.A22 @ w - self.b2
        return r1, r2

    def tracking_target(self, theta):
        """``A22^{-1}(b2 - A21 theta)``; accepts a batch of thetas along axis 0."""
        theta = np.asarray(theta, dtype=float)
        rhs = self.b2 - theta @ self.A21.T
        return np.linalg.solve(self.A22, rhs.T).T

    def same_as(self, other, atol=0.0):
        return all(
            np.allclose(getattr(self, n), getattr(other, n), rtol=0.0, atol=atol)
            for n in ("b1", "b2", "A11", "A12", "A21", "A22")
        )


@dataclass(frozen=True)
class FixedPoint:
    theta_star: np.ndarray
    w_star: np.ndarray


def _cond_ok(M):
    c = np.linalg.cond(M)
    return bool(np.isfinite(c) and c < 1e14)


def fixed_point(sys):
    """Unique solution of the coupled linear system.

    ``theta* = Delta^{-1}(b1 - A12 A22^{-1} b2)`` and
    ``w* = A22^{-1}(b2 - A21 theta*)``.
    """
    if not _cond_ok(sys.A22):
        raise SingularA22("A22 is numerically singular")
    delta = sys.delta
    if not _cond_ok(delta):
        raise SingularDelta("Delta is numerically singular")
    rhs = sys.b1 - sys.A12 @ np.linalg.solve(sys.A22, sys.b2)
    theta = np.linalg.solve(delta, rhs)
    w = np.linalg.solve(sys.A22, sys.b2 - sys.A21 @ theta)
    return FixedPoint(theta_star=theta, w_star=w)


def check_a1(sys, margin=HURWITZ_MARGIN):
    """Raise ``HurwitzViolated`` unless ``-A22`` and ``-Delta`` are Hurwitz."""
    eig22 = np.linalg.eigvals(sys.A22).real.min()
    if not eig22 >= margin:
        raise HurwitzViolated(f"-A22 not Hurwitz (min Re eig(A22) = {eig22:.3e})")
    eigd = np.linalg.eigvals(sys.delta).real.min()
    if not eigd >= margin:
        raise HurwitzViolated(f"-Delta not Hurwitz (min Re eig(Delta) = {eigd:.3e})")
    return sys


def satisfies_a1(sys, margin=HURWITZ_MARGIN):
    try:
        check_a1(sys, margin)
    except (HurwitzViolated, np.linalg.LinAlgError):
        return False
    return True


def from_solution(A11, A12, A21, A22, theta, w):
    """System whose right-hand sides are built so that ``(theta, w)`` solves it."""
    A11, A12, A21, A22 = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A11, A12, A21, A22))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    return LinearSystem(
        b1=A11 @ theta + A12 @ w, b2=A21 @ theta + A22 @ w,
        A11=A11, A12=A12, A21=A21, A22=A22,
    )
