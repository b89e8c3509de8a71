"""Closed-form quantities from the finite-time analysis.

* the exact leading term ``I_k`` of ``E||theta_k - theta*||^2`` and its
  two-sided bound ``E3 Tr(Sigma) <= I_k / beta_k <= E4 Tr(Sigma)``;
* the chain of constants behind the martingale-noise error envelopes, with
  a provenance trace listing every constant, its formula and its inputs.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, NonPositiveInput, ScheduleNotAdmissible, StepTooLarge
from .linalg import c_seq as _c_seq, spectral_norm, varsigma as _varsigma
from .schedules import StepCaps

LOG2 = np.log(2.0)


# ---- leading term ---------------------------------------------------------

def sigma_effective(S11, S12, S22, A12, A22):
    """``S11 + G S22 G^T + S12 G^T + G S21`` with ``G = A12 A22^{-1}`` and ``S21 = S12^T``."""
    S11 = np.atleast_2d(np.asarray(S11, dtype=float))
    S12 = np.atleast_2d(np.asarray(S12, dtype=float))
    S22 = np.atleast_2d(np.asarray(S22, dtype=float))
    A12 = np.atleast_2d(np.asarray(A12, dtype=float))
    A22 = np.atleast_2d(np.asarray(A22, dtype=float))
    dt, dw = A12.shape
    if S11.shape != (dt, dt) or S12.shape != (dt, dw) or S22.shape != (dw, dw) or A22.shape != (dw, dw):
        raise DimensionMismatch("covariance and coupling shapes do not conform")
    G = np.linalg.solve(A22.T, A12.T).T
    S = S11 + G @ S22 @ G.T + S12 @ G.T + G @ S12.T
    return 0.5 * (S + S.T)


def leading_term(Sigma, delta, schedule, checkpoints):
    """``I_k`` at the requested indices.

    Uses ``M_k = (I - b_k Delta) M_{k-1} (I - b_k Delta)^T + b_k^2 Sigma``
    with ``M_{-1} = 0`` and ``I_k = Tr M_k``, which telescopes the double
    product in ``O(d^3)`` per step.

    Raises
    ------
    StepTooLarge
        If ``beta_k ||Delta|| >= 1`` for some ``k`` up to the last checkpoint.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    cps = np.atleast_1d(np.asarray(checkpoints, dtype=np.int64))
    if cps.size == 0:
        return np.array([])
    if np.any(np.diff(cps) < 0) or cps[0] < 0:
        raise ConfigError("checkpoints must be nondecreasing and nonnegative")
    K = int(cps[-1])
    beta, _ = schedule.eval(np.arange(K + 1))
    nd = spectral_norm(delta)
    if np.any(beta * nd >= 1.0):
        k = int(np.flatnonzero(beta * nd >= 1.0)[0])
        raise StepTooLarge(f"beta_{k} ||Delta|| = {beta[k] * nd:.4g} >= 1")
    d = delta.shape[0]
    eye = np.eye(d)
    M = np.zeros((d, d))
    out = np.empty(cps.size)
    ci = 0
    for k in range(K + 1):
        T = eye - beta[k] * delta
        M = T @ M @ T.T + beta[k] ** 2 * Sigma
        while ci < cps.size and cps[ci] == k:
            out[ci] = np.trace(M)
            ci += 1
    return out


def leading_term_naive(Sigma, delta, schedule, k):
    """Direct ``O(k^2)`` evaluation of ``I_k`` from its double-product definition."""
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    beta, _ = schedule.eval(np.arange(k + 1))
    d = delta.shape[0]
    total = 0.0
    for j in range(k + 1):
        P = np.eye(d)
        for ell in range(j + 1, k + 1):
            P = (np.eye(d) - beta[ell] * delta) @ P
        total += beta[j] ** 2 * np.trace(P @ Sigma @ P.T)
    return total


def k0_expansion(delta, schedule, limit=10**9, block=10**6):
    """``min{l : sum_{j<l} beta_j >= log(2) / (2 ||Delta||)}``."""
    target = LOG2 / (2.0 * spectral_norm(delta))
    acc = 0.0
    start = 0
    while start < limit:
        beta, _ = schedule.eval(np.arange(start, min(start + block, limit)))
        csum = acc + np.cumsum(beta)
        hit = np.flatnonzero(csum >= target)
        if hit.size:
            return int(start + hit[0] + 1)
        acc = float(csum[-1])
        start += block
    raise ConfigError(f"partial sums of beta stay below {target:.4g} up to k={limit}")


@dataclass
class ExpansionResult:
    checkpoints: np.ndarray
    I: np.ndarray
    Sigma_eff: np.ndarray
    E3: float
    E4: float
    k0_exp: int

    def ratios(self, schedule):
        """``I_k / (beta_k Tr Sigma)`` at the checkpoints."""
        beta, _ = schedule.eval(self.checkpoints)
        return self.I / (beta * np.trace(self.Sigma_eff))


def expansion_bounds(delta, cert_delta, schedule, a22):
    """``(E3, E4, k0_exp)`` with ``E3 = 1/(8||Delta||)`` and ``E4 = p_Delta c_seq(a_Delta)``."""
    beta0, gamma0 = schedule.head
    vs = _varsigma(beta0, gamma0, a22, cert_delta.a)
    E3 = 1.0 / (8.0 * spectral_norm(delta))
    E4 = cert_delta.p * _c_seq(cert_delta.a, varsigma=vs, a22=a22, a_delta=cert_delta.a)
    return E3, E4, k0_expansion(delta, schedule)


def expansion(sys, noise_cov, cert22, cert_delta, schedule, checkpoints):
    """Leading term, effective covariance and sandwich constants in one call."""
    S11, S12, S22 = noise_cov
    Sigma = sigma_effective(S11, S12, S22, sys.A12, sys.A22)
    E3, E4, k0 = expansion_bounds(sys.delta, cert_delta, schedule, cert22.a)
    cps = np.asarray(checkpoints, dtype=np.int64)
    return ExpansionResult(checkpoints=cps, I=leading_term(Sigma, sys.delta, schedule, cps),
                           Sigma_eff=Sigma, E3=E3, E4=E4, k0_exp=k0)


def expansion_caps(sys, caps, bounds, a22, a_delta, beta0, gamma0):
    """``(beta_exp, kappa_exp)``: the extra step and ratio caps of the expansion."""
    vs = _varsigma(beta0, gamma0, a22, a_delta)
    beta_exp = min(caps.beta0, 1.0 / (4.0 * spectral_norm(sys.delta)))
    denom = spectral_norm(sys.A12) * bounds.C_inf * _c_seq(a22, varsigma=vs, a22=a22, a_delta=a_delta)
    kappa_exp = min(caps.kappa, 0.5 / denom) if denom > 0 else caps.kappa
    return beta_exp, kappa_exp


# ---- martingale constant chain --------------------------------------------

@dataclass(frozen=True)
class InitMoments:
    """Operator norms of the initial second moments in transformed coordinates."""

    M_theta: float
    M_w: float
    M_theta_w: float
    V0: float


def init_moments(sys, fp, init):
    """Closed-form ``M^t_0, M^w_0, M^tw_0`` and ``V0`` for an :class:`InitSpec`.

    With ``t~_0 = theta_0 - theta*`` and ``w~_0 = w_0 - w* + G t~_0``,
    ``G = A22^{-1} A21``.  For i.i.d. ``U[-r, r]`` entries (variance
    ``v = r^2/3``): ``E[t~ t~^T] = v I + theta* theta*^T``,
    ``E[w~ w~^T] = v (I + G G^T) + m m^T`` with ``m = -(w* + G theta*)``, and
    ``E[t~ w~^T] = v G^T - theta* m^T``.
    """
    G = sys.A22_inv_A21
    t, w = fp.theta_star, fp.w_star
    if init.kind == "uniform":
        v = init.radius**2 / 3.0
        m = -(w + G @ t)
        Ett = v * np.eye(len(t)) + np.outer(t, t)
        Eww = v * (np.eye(len(w)) + G @ G.T) + np.outer(m, m)
        Etw = v * G.T - np.outer(t, m)
    else:
        if init.kind == "fixed":
            tt = np.asarray(init.theta0, dtype=float) - t
            wt = np.asarray(init.w0, dtype=float) - w + G @ tt
        else:
            tt, wt = np.zeros_like(t), np.zeros_like(w)
        Ett, Eww, Etw = np.outer(tt, tt), np.outer(wt, wt), np.outer(tt, wt)
    return InitMoments(M_theta=spectral_norm(Ett), M_w=spectral_norm(Eww),
                       M_theta_w=spectral_norm(Etw), V0=init.V0(fp))


@dataclass
class MartingaleConstants:
    m_tilde_V: float
    m_tilde_W: float
    m_tilde_VW: float
    K_C: float
    Cw0: float
    Cw1: float
    Cw2: float
    Ctw0: float
    Ctw1: float
    Ctw2: float
    Ct0: float
    Ct1: float
    Ct2: float
    C0_w: float
    C1_what: float
    C0_theta_mtg: float
    C1_theta_mtg: float
    C0_what_mtg: float
    a_delta: float
    gamma_mtg: float = None
    trace: list = field(default_factory=list)

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if k != "trace"}


class _Trace:
    def __init__(self):
        self.entries = []
        self.values = {}

    def __call__(self, name, formula, value, **inputs):
        value = float(value)
        self.entries.append({"name": name, "formula": formula,
                             "inputs": {k: float(v) for k, v in inputs.items()}, "value": value})
        self.values[name] = value
        return value


def martingale_constants(sys, fp, cert22, cert_delta, bounds, head, m_V, m_W, moments):
    """Evaluate the constant chain of the martingale-noise envelopes.

    Parameters
    ----------
    sys : LinearSystem
    fp : FixedPoint
    cert22, cert_delta : LyapunovCertificate
        Certificates of ``A22`` and ``Delta``.
    bounds : TransformBounds
    head : tuple
        ``(beta0, gamma0, kappa)`` of the schedule.
    m_V, m_W : float
        Noise moment constants.
    moments : InitMoments

    Returns
    -------
    MartingaleConstants
        Every intermediate constant, in dependency order, plus a provenance
        ``trace``.
    """
    beta0, gamma0, kappa = (float(x) for x in head)
    for name, v in (("m_V", m_V), ("m_W", m_W), ("beta0", beta0), ("gamma0", gamma0),
                    ("kappa", kappa)):
        if not v > 0:
            raise NonPositiveInput(f"{name} must be positive, got {v!r}")
    for name, v in (("M_theta", moments.M_theta), ("M_w", moments.M_w),
                    ("M_theta_w", moments.M_theta_w), ("V0", moments.V0)):
        if not v >= 0:
            raise NonPositiveInput(f"{name} must be nonnegative, got {v!r}")
    a22, ad = cert22.a, cert_delta.a
    if not (gamma0 * a22 / 2.0 < 1.0 and beta0 * ad / 2.0 < 1.0):
        raise NonPositiveInput("initial steps too large for the constant chain")
    tr = _Trace()
    dt, dw = sys.d_theta, sys.d_w
    L_inf, C_inf = bounds.L_inf, bounds.C_inf
    n12 = spectral_norm(sys.A12)
    p22, pd = cert22.p, cert_delta.p
    p22d = np.sqrt(p22 * pd)
    vs = tr("varsigma", "1 + max(gamma0 a22/8, beta0 aD/16)",
            _varsigma(beta0, gamma0, a22, ad), gamma0=gamma0, beta0=beta0, a22=a22, aD=ad)

    def cs(a):
        return _c_seq(a, varsigma=vs, a22=a22, a_delta=ad)

    cs22h = tr("cseq_a22/2", "c_seq(a22/2)", cs(a22 / 2.0), a22=a22, varsigma=vs)
    csdh = tr("cseq_aD/2", "c_seq(aD/2)", cs(ad / 2.0), aD=ad, varsigma=vs)
    csdq = tr("cseq_aD/4", "c_seq(aD/4)", cs(ad / 4.0), aD=ad, varsigma=vs)
    ts = float(fp.theta_star @ fp.theta_star)
    ws = float(fp.w_star @ fp.w_star)
    factor = tr("m_factor", "(1 + 2||t* t*^T|| + 3||w* w*^T||) v (2 + 3 C_inf^2) v 3",
                max(1.0 + 2.0 * ts + 3.0 * ws, 2.0 + 3.0 * C_inf**2, 3.0),
                theta_star_sq=ts, w_star_sq=ws, C_inf=C_inf)
    mV = tr("m_tilde_V", "m_V * m_factor", m_V * factor, m_V=m_V, m_factor=factor)
    mW = tr("m_tilde_W", "m_W * m_factor", m_W * factor, m_W=m_W, m_factor=factor)
    mVW = tr("m_tilde_VW", "sqrt(dt dw)/2 (m_tilde_W + m_tilde_V)",
             np.sqrt(dt * dw) / 2.0 * (mW + mV), d_theta=dt, d_w=dw)
    KC = tr("K_C", "max(C_inf^2, 1) + sqrt(dt dw) C_inf",
            max(C_inf**2, 1.0) + np.sqrt(dt * dw) * C_inf, C_inf=C_inf)
    noise = mV + kappa**2 * mW
    Cw0 = tr("Cw0", "p22 M^w_0", p22 * moments.M_w, p22=p22, M_w0=moments.M_w)
    Cw1 = tr("Cw1", "p22 (m~V + kappa^2 m~W) K_C c_seq(a22/2)", p22 * noise * KC * cs22h,
             p22=p22, kappa=kappa, K_C=KC)
    Cw2 = tr("Cw2", "p22 K_C (m~V + kappa^2 m~W)", p22 * KC * noise, p22=p22, K_C=KC)
    cross = mVW + kappa * C_inf * mV
    damp = gamma0 / (1.0 - gamma0 * a22 / 2.0)
    Ctw0 = tr("Ctw0", "p22D (M^tw_0 + ||A12|| 2 Cw0/aD + (m~VW + kappa C_inf m~V) 2 gamma0 Cw0/(aD (1 - gamma0 a22/2)))",
              p22d * (moments.M_theta_w + n12 * 2.0 * Cw0 / ad + cross * 2.0 * damp * Cw0 / ad),
              p22D=p22d, M_tw0=moments.M_theta_w, norm_A12=n12, Cw0=Cw0)
    Ctw1 = tr("Ctw1", "p22D c_seq(a22/2) (Cw1 (||A12|| + gamma0/(1 - gamma0 a22/2) X) + X), X = m~VW + C_inf kappa m~V",
              p22d * cs22h * (Cw1 * (n12 + damp * cross) + cross), p22D=p22d, Cw1=Cw1, X=cross)
    Ctw2 = tr("Ctw2", "p22D ((2 Cw2/aD)(||A12|| + gamma0/(1 - gamma0 a22/2) X) + kappa X)",
              p22d * ((2.0 * Cw2 / ad) * (n12 + damp * cross) + kappa * cross),
              p22D=p22d, Cw2=Cw2, X=cross)
    Ct0 = tr("Ct0", "pD (M^t_0 + 4 ||A12|| Ctw0/aD)", pd * (moments.M_theta + 4.0 * n12 * Ctw0 / ad),
             pD=pd, M_t0=moments.M_theta, Ctw0=Ctw0)
    slow = 1.0 - beta0 * ad / 2.0
    Ct1 = tr("Ct1", "pD (m~V c_seq(aD/2) + 2 ||A12|| Ctw1 c_seq(a22/2) + (||A12||^2 + m~V)(gamma0 Cw1 + Cw0/(1 - beta0 aD/2)) c_seq(a22/2))",
             pd * (mV * csdh + 2.0 * n12 * Ctw1 * cs22h
                   + (n12**2 + mV) * (gamma0 * Cw1 + Cw0 / slow) * cs22h),
             pD=pd, Ctw1=Ctw1, Cw1=Cw1, Cw0=Cw0)
    Ct2 = tr("Ct2", "pD (16 varsigma ||A12|| Ctw2/a22 + m~V + (||A12||^2 + m~V)(8 Cw2 varsigma/a22)/(1 - beta0 aD/2))",
             pd * (16.0 * vs * n12 * Ctw2 / a22 + mV + (n12**2 + mV) * (8.0 * Cw2 * vs / a22) / slow),
             pD=pd, Ctw2=Ctw2, Cw2=Cw2)
    ratio = L_inf**2 * cert22.lam_max / cert_delta.lam_min
    C1t = tr("C1_theta_mtg", "Ct1 c_seq(aD/4) aD/2", Ct1 * csdq * ad / 2.0, Ct1=Ct1)
    C0w = tr("C0_w", "2 (L_inf^2 lmax(Q22)/lmin(QD) Ct0 + c_seq(a22/2) Cw2 Ct0/(1 - beta0 aD/4) + Cw0)",
             2.0 * (ratio * Ct0 + cs22h * Cw2 * Ct0 / (1.0 - beta0 * ad / 4.0) + Cw0),
             L_inf=L_inf, Ct0=Ct0, Cw2=Cw2, Cw0=Cw0)
    C1w = tr("C1_what_mtg", "2 (kappa L_inf^2 lmax(Q22)/lmin(QD) c_seq(aD/4) aD/2 Ct1 + Cw1 + c_seq(aD/4) aD/2 Cw2 c_seq(a22/2) Ct1)",
             2.0 * (kappa * ratio * csdq * ad / 2.0 * Ct1 + Cw1 + csdq * ad / 2.0 * Cw2 * cs22h * Ct1),
             kappa=kappa, L_inf=L_inf, Ct1=Ct1, Cw1=Cw1, Cw2=Cw2)
    V0 = moments.V0
    C0t = tr("C0_theta_mtg", "Ct0 / V0", Ct0 / V0 if V0 > 0 else 0.0, Ct0=Ct0, V0=V0)
    C0wm = tr("C0_what_mtg", "C0_w / V0", C0w / V0 if V0 > 0 else 0.0, C0_w=C0w, V0=V0)
    return MartingaleConstants(
        m_tilde_V=mV, m_tilde_W=mW, m_tilde_VW=mVW, K_C=KC, Cw0=Cw0, Cw1=Cw1, Cw2=Cw2,
        Ctw0=Ctw0, Ctw1=Ctw1, Ctw2=Ctw2, Ct0=Ct0, Ct1=Ct1, Ct2=Ct2, C0_w=C0w, C1_what=C1w,
        C0_theta_mtg=C0t, C1_theta_mtg=C1t, C0_what_mtg=C0wm, a_delta=ad, trace=tr.entries,
    )


def refined_gamma_cap(sys, fp, cert22, cert_delta, bounds, caps, m_V, m_W, moments):
    """``gamma_mtg = gamma_inf ^ 1/(a22/2 + (2/a22) p22 (m~V + kappa^2 m~W)) ^ aD/(4 Ct2)``.

    ``Ct2`` itself depends on the schedule head; it is evaluated once at the
    base caps ``(beta_inf, gamma_inf, kappa_inf)``.  Every constant in the
    chain is nondecreasing in those three inputs, so the resulting cap is
    valid for any schedule whose head lies below the caps.
    """
    head = (caps.beta0, caps.gamma0, caps.kappa)
    c = martingale_constants(sys, fp, cert22, cert_delta, bounds, head, m_V, m_W, moments)
    a22, ad = cert22.a, cert_delta.a
    second = 1.0 / (a22 / 2.0 + (2.0 / a22) * cert22.p * (c.m_tilde_V + caps.kappa**2 * c.m_tilde_W))
    third = ad / (4.0 * c.Ct2)
    return min(caps.gamma0, second, third)


def refined_caps(sys, fp, cert22, cert_delta, bounds, caps, m_V, m_W, moments):
    """Base caps with ``gamma`` tightened to ``gamma_mtg`` (``beta_mtg = beta_inf``)."""
    g = refined_gamma_cap(sys, fp, cert22, cert_delta, bounds, caps, m_V, m_W, moments)
    return StepCaps(gamma0=g, beta0=caps.beta0, kappa=caps.kappa)


@dataclass
class Envelope:
    checkpoints: np.ndarray
    theta: np.ndarray
    track: np.ndarray


def martingale_envelope(constants, schedule, checkpoints, d_theta, d_w, cert=None):
    """Upper envelopes of ``E||theta_k - theta*||^2`` and of the tracking error.

    ``d_theta (C0 V0 Pi_k + C1 beta_k)`` and ``d_w (C0^w Pi_k + C1^w gamma_k)``
    with ``Pi_k = prod_{l<k} (1 - beta_l a_Delta/4)`` maintained
    incrementally (clamped at 0 on underflow).

    Parameters
    ----------
    cert : ScheduleCertificate, optional
        When given, the envelope is refused unless the certificate is
        admissible.
    """
    if cert is not None and not cert.admissible:
        failed = [k for k, v in cert.checks.items() if not v]
        raise ScheduleNotAdmissible(f"schedule fails: {', '.join(failed)}")
    cps = np.atleast_1d(np.asarray(checkpoints, dtype=np.int64))
    K = int(cps[-1])
    beta, gamma = schedule.eval(np.arange(K + 1))
    ad = constants.a_delta
    log_factors = np.log1p(-beta[:K] * ad / 4.0) if K > 0 else np.zeros(0)
    log_pi = np.concatenate([[0.0], np.cumsum(log_factors)])
    pi = np.exp(log_pi[cps])
    env_t = d_theta * (constants.Ct0 * pi + constants.C1_theta_mtg * beta[cps])
    env_w = d_w * (constants.C0_w * pi + constants.C1_what * gamma[cps])
    return Envelope(checkpoints=cps, theta=env_t, track=env_w)
