"""Step-size schedules and the conditions they must satisfy.

Three families are supported:

* ``constant``: ``beta_k = beta``, ``gamma_k = gamma``;
* ``piecewise_constant``: levels that change at increasing breakpoints;
* ``polynomial``: ``beta_k = c_beta / (k + k0_beta)`` and
  ``gamma_k = c_gamma / (k + k0_gamma)**sigma`` with ``sigma`` in ``[0.5, 1]``.
"""
from dataclasses import dataclass, field, asdict
from math import floor, ceil

import numpy as np

from .errors import ConfigError
from .linalg import weighted_opnorm, varsigma as _varsigma

KINDS = ("constant", "piecewise_constant", "polynomial")
TOL = 1e-12


@dataclass(frozen=True)
class StepSchedule:
    """Parametric ``(beta_k, gamma_k)`` family.

    Build instances with :meth:`constant`, :meth:`piecewise` or
    :meth:`polynomial` rather than the raw constructor.
    """

    kind: str
    beta: float = None
    gamma: float = None
    breakpoints: tuple = ()
    beta_levels: tuple = ()
    gamma_levels: tuple = ()
    c_beta: float = None
    c_gamma: float = None
    k0_beta: float = None
    k0_gamma: float = None
    sigma: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant":
            if not (self.beta > 0 and self.gamma > 0):
                raise ConfigError("constant steps must be positive")
        elif self.kind == "piecewise_constant":
            bp = tuple(int(b) for b in self.breakpoints)
            object.__setattr__(self, "breakpoints", bp)
            object.__setattr__(self, "beta_levels", tuple(float(x) for x in self.beta_levels))
            object.__setattr__(self, "gamma_levels", tuple(float(x) for x in self.gamma_levels))
            if len(self.beta_levels) != len(bp) + 1 or len(self.gamma_levels) != len(bp) + 1:
                raise ConfigError("piecewise schedule needs one more level than breakpoints")
            if any(b <= 0 for b in bp) or list(bp) != sorted(set(bp)):
                raise ConfigError("breakpoints must be positive and strictly increasing")
            if min(self.beta_levels + self.gamma_levels) <= 0:
                raise ConfigError("step levels must be positive")
        else:
            if not (self.c_beta > 0 and self.c_gamma > 0):
                raise ConfigError("c_beta and c_gamma must be positive")
            if not (self.k0_beta >= 0 and self.k0_gamma >= 0):
                raise ConfigError("offsets must be nonnegative")
            if not 0.5 <= self.sigma <= 1.0:
                raise ConfigError("sigma must lie in [0.5, 1]")
            if self.k0_beta == 0 or self.k0_gamma == 0:
                raise ConfigError("offsets must be positive so that the first step is finite")

    # ---- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, beta, gamma):
        return cls("constant", beta=float(beta), gamma=float(gamma))

    @classmethod
    def piecewise(cls, breakpoints, beta_levels, gamma_levels):
        return cls("piecewise_constant", breakpoints=tuple(breakpoints),
                   beta_levels=tuple(beta_levels), gamma_levels=tuple(gamma_levels))

    @classmethod
    def polynomial(cls, c_beta, k0_beta, c_gamma, k0_gamma, sigma):
        return cls("polynomial", c_beta=float(c_beta), k0_beta=float(k0_beta),
                   c_gamma=float(c_gamma), k0_gamma=float(k0_gamma), sigma=float(sigma))

    # ---- evaluation -------------------------------------------------------

    def eval(self, k):
        """``(beta_k, gamma_k)``; ``k`` may be an integer or an integer array."""
        k_arr = np.asarray(k)
        if np.any(k_arr < 0):
            raise ValueError("iteration index must be nonnegative")
        if self.kind == "constant":
            beta = np.full(k_arr.shape, self.beta)
            gamma = np.full(k_arr.shape, self.gamma)
        elif self.kind == "piecewise_constant":
            idx = np.searchsorted(np.asarray(self.breakpoints), k_arr, side="right")
            beta = np.asarray(self.beta_levels)[idx]
            gamma = np.asarray(self.gamma_levels)[idx]
        else:
            kf = k_arr.astype(float)
            beta = self.c_beta / (kf + self.k0_beta)
            gamma = self.c_gamma / (kf + self.k0_gamma) ** self.sigma
        if k_arr.ndim == 0:
            return float(beta), float(gamma)
        return beta, gamma

    @property
    def head(self):
        return self.eval(0)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in asdict(self).items() if v not in (None, ())}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise ConfigError("schedule needs a 'kind'")
        try:
            return cls(kind, **d)
        except TypeError as exc:
            raise ConfigError(f"bad schedule fields: {exc}") from None

    def sup_ratio(self, horizon):
        """``sup_k beta_k / gamma_k`` over ``k >= 0``.

        Exact for constant and piecewise schedules.  For the polynomial family
        ``log(beta_k/gamma_k)`` has a single critical point at
        ``k* = (sigma k0_beta - k0_gamma) / (1 - sigma)``, a maximum, so the
        supremum over integers is attained at ``0`` or next to ``k*``, or in
        the ``k -> inf`` limit when ``sigma = 1``.  ``horizon`` is unused for
        these families and kept for a uniform interface.
        """
        if self.kind == "constant":
            return self.beta / self.gamma
        if self.kind == "piecewise_constant":
            return max(b / g for b, g in zip(self.beta_levels, self.gamma_levels))
        cands = [0]
        if self.sigma < 1.0:
            kstar = (self.sigma * self.k0_beta - self.k0_gamma) / (1.0 - self.sigma)
            if kstar > 0:
                cands += [floor(kstar), ceil(kstar)]
        ks = np.asarray(cands)
        b, g = self.eval(ks)
        best = float(np.max(b / g))
        if self.sigma == 1.0:
            best = max(best, self.c_beta / self.c_gamma)
        return best


def reference_toy_schedule(sigma=2.0 / 3.0):
    """Schedule constants used for the random toy experiments."""
    return StepSchedule.polynomial(c_beta=140.0, k0_beta=1e4, c_gamma=300.0, k0_gamma=1e7,
                                   sigma=sigma)


def reference_garnet_schedule(sigma=2.0 / 3.0):
    """Schedule constants used for the Garnet experiments."""
    return StepSchedule.polynomial(c_beta=2300.0, k0_beta=8e5, c_gamma=120.0, k0_gamma=2e5,
                                   sigma=sigma)


@dataclass(frozen=True)
class StepCaps:
    gamma0: float
    beta0: float
    kappa: float


def stepsize_caps(sys, cert22, cert_delta):
    """Base caps ``(gamma_inf, beta_inf, kappa_inf)`` on steps and their ratio.

    ``gamma_inf`` is the step cap of the ``A22`` certificate, ``beta_inf`` the
    smaller of the ``Delta`` step cap and ``1/(2||Delta||_Q + a_Delta)``, and
    ``kappa_inf`` bounds ``beta_k/gamma_k`` so that the slow-fast coupling
    stays contractive.
    """
    Q22, Qd = cert22.Q, cert_delta.Q
    a22, ad = cert22.a, cert_delta.a
    gamma0 = cert22.step_cap
    beta0 = min(cert_delta.step_cap, 1.0 / (2.0 * cert_delta.norm_A_Q + ad))
    coupling = (weighted_opnorm(sys.A12, Q22, Qd)
                * weighted_opnorm(sys.A22_inv_A21, Qd, Q22))
    first = (a22 / 2.0) / (coupling + ad / 2.0)
    first *= min(1.0, (ad / 2.0) / (cert_delta.norm_A_Q + ad / 2.0))
    kappa = min(first, a22 / (4.0 * ad))
    return StepCaps(gamma0=gamma0, beta0=beta0, kappa=kappa)


@dataclass
class ScheduleCertificate:
    """Outcome of :func:`validate`; failures are recorded, never raised."""

    kappa: float
    varsigma: float
    rho0: float
    caps: StepCaps
    horizon: int
    k_pass: int = None
    a2_failures: dict = field(default_factory=dict)
    tail_ok: bool = True
    monotone: bool = True
    checks: dict = field(default_factory=dict)
    admissible: bool = False
    beta_cap: float = None
    gamma_cap: float = None

    @property
    def a2_ok_horizon(self):
        """``"all"`` when every inequality holds on the horizon, else the first passing index."""
        return "all" if self.k_pass == 0 else self.k_pass

    def to_dict(self):
        d = asdict(self)
        d["a2_ok_horizon"] = self.a2_ok_horizon
        return d


def a2_ratio_checks(schedule, a22, a_delta, ks):
    """Boolean arrays for the three step-ratio inequalities at indices ``ks``.

    ``gamma_k/gamma_{k+1} <= 1 + (a22/8) gamma_{k+1}``,
    ``beta_k/beta_{k+1} <= 1 + (a_delta/16) beta_{k+1}``,
    ``gamma_k/gamma_{k+1} <= 1 + (a_delta/16) beta_{k+1}``.
    """
    ks = np.asarray(ks)
    b0, g0 = schedule.eval(ks)
    b1, g1 = schedule.eval(ks + 1)
    c1 = g0 / g1 <= 1.0 + (a22 / 8.0) * g1 + TOL
    c2 = b0 / b1 <= 1.0 + (a_delta / 16.0) * b1 + TOL
    c3 = g0 / g1 <= 1.0 + (a_delta / 16.0) * b1 + TOL
    return c1, c2, c3


def _polynomial_tail(schedule, a22, a_delta):
    """Whether each ratio inequality holds for all large ``k``."""
    s = schedule.sigma
    cb = schedule.c_beta * a_delta / 16.0
    t1 = s < 1.0 or schedule.c_gamma * a22 / 8.0 > 1.0
    t2 = cb > 1.0
    t3 = s < cb
    return t1 and t2 and t3


def validate(schedule, cert22, cert_delta, horizon, caps=None, sys=None):
    """Check a schedule against the step-size assumptions.

    Scans the three ratio inequalities on ``0 <= k < horizon`` (with an exact
    tail argument for the polynomial family), computes the supremum ratio
    ``kappa``, the smallest ``rho0`` with ``gamma_{k-1}^2 <= rho0 beta_k``,
    and compares the head of the schedule with the caps.

    ``caps`` defaults to :func:`stepsize_caps` (needs ``sys``).  Pass refined
    caps to fold in noise-dependent tightenings.
    """
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if caps is None:
        if sys is None:
            raise ConfigError("either caps or sys is required")
        caps = stepsize_caps(sys, cert22, cert_delta)
    a22, ad = cert22.a, cert_delta.a
    ks = np.arange(horizon)
    beta, gamma = schedule.eval(np.arange(horizon + 1))
    monotone = bool(np.all(np.diff(beta) <= 0) and np.all(np.diff(gamma) <= 0)
                    and beta.min() > 0 and gamma.min() > 0)
    c1, c2, c3 = a2_ratio_checks(schedule, a22, ad, ks)
    ok = c1 & c2 & c3
    bad = np.flatnonzero(~ok)
    k_pass = 0 if bad.size == 0 else int(bad[-1]) + 1
    failures = {}
    for name, c in (("gamma_fast", c1), ("beta_slow", c2), ("gamma_slow", c3)):
        idx = np.flatnonzero(~c)
        if idx.size:
            failures[name] = {"count": int(idx.size), "first": int(idx[0]), "last": int(idx[-1])}
    tail_ok = _polynomial_tail(schedule, a22, ad) if schedule.kind == "polynomial" else True
    kappa = max(schedule.sup_ratio(horizon), float(np.max(beta / gamma)))
    rho0 = float(np.max(gamma[:-1] ** 2 / beta[1:])) if horizon >= 1 else float("nan")
    beta0, gamma0 = schedule.head
    vs = _varsigma(beta0, gamma0, a22, ad)
    checks = {
        "monotone": monotone,
        "a2_ratios": k_pass == 0,
        "a2_tail": tail_ok,
        "kappa": kappa <= caps.kappa * (1 + TOL),
        "beta0": beta0 <= caps.beta0 * (1 + TOL),
        "gamma0": gamma0 <= caps.gamma0 * (1 + TOL),
    }
    return ScheduleCertificate(
        kappa=kappa, varsigma=vs, rho0=rho0, caps=caps, horizon=int(horizon), k_pass=k_pass,
        a2_failures=failures, tail_ok=tail_ok, monotone=monotone, checks=checks,
        admissible=all(checks.values()), beta_cap=caps.beta0, gamma_cap=caps.gamma0,
    )


def admissible_polynomial(cert22, cert_delta, caps, sigma, margin=0.9):
    """A polynomial schedule that passes :func:`validate` against ``caps``.

    Uses a common offset ``k0`` (so the ratio ``beta_k/gamma_k`` peaks at
    ``k = 0``), ``c_beta = 32 / a_Delta`` (so both slow ratio inequalities
    hold with room), ``gamma_0 = margin * gamma_inf`` and the smallest ``k0``
    meeting the remaining conditions.
    """
    a22, ad = cert22.a, cert_delta.a
    c_beta = 32.0 / ad
    g0 = margin * caps.gamma0
    k0 = max(
        8.0 * sigma / (a22 * g0) + 1.0,
        c_beta / (margin * min(caps.beta0, caps.kappa * g0)),
        2.0,
    )
    k0 = float(ceil(k0))
    return StepSchedule.polynomial(c_beta=c_beta, k0_beta=k0, c_gamma=g0 * k0**sigma,
                                   k0_gamma=k0, sigma=sigma)
