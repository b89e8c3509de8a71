"""Monte Carlo engine for the coupled iteration.

``theta_{k+1} = theta_k + beta_k (b1 - A11 theta_k - A12 w_k + V_{k+1})``
``w_{k+1}     = w_k + gamma_k (b2 - A21 theta_k - A22 w_k + W_{k+1})``

Replicas are simulated in fixed-size chunks of vectorised state.  Each
replica owns a random stream derived from ``(master_seed, replica)`` and
draws its noise in blocks, so a replica's trajectory never depends on how
replicas are grouped or on the number of worker threads.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, NonFinite, ScheduleNotAdmissible
from .markov import ChainSampler, MarkovModel
from .noise import MartingaleNoiseSpec
from .system import fixed_point

CHUNK = 256
BLOCK = 1024


def sa_step(theta, w, sys, beta, gamma, V, W, iteration=None):
    """One step of the coupled iteration; ``theta``/``w`` may be batched along axis 0."""
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        theta_n = theta + beta * (sys.b1 - theta @ sys.A11.T - w @ sys.A12.T + V)
        w_n = w + gamma * (sys.b2 - theta @ sys.A21.T - w @ sys.A22.T + W)
    if not (np.all(np.isfinite(theta_n)) and np.all(np.isfinite(w_n))):
        raise NonFinite("iterate overflowed", iteration=iteration)
    return theta_n, w_n


def gtd_online_step(theta, w, phi, phi_next, r, rho, beta, gamma):
    """GTD update from one observed transition.

    ``theta' = theta + beta (phi - rho phi') <phi, w>`` and
    ``w' = w + gamma (phi delta - w)`` with
    ``delta = r + rho <theta, phi'> - <theta, phi>``.  Inputs may be batched
    along axis 0.
    """
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    pw = np.sum(phi * w, axis=-1, keepdims=True)
    delta = (np.asarray(r, dtype=float)[..., None] if np.ndim(r) else r) \
        + rho * np.sum(theta * phi_next, axis=-1, keepdims=True) \
        - np.sum(theta * phi, axis=-1, keepdims=True)
    theta_n = theta + beta * (phi - rho * phi_next) * pw
    w_n = w + gamma * (phi * delta - w)
    return theta_n, w_n


def geometric_checkpoints(K, per_decade=8, start=1):
    """Iteration indices ``round(10**(j/per_decade))`` in ``[start, K]``, plus ``K``."""
    if K < 1:
        raise ConfigError("K must be at least 1")
    n = int(np.floor(per_decade * np.log10(K))) + 1
    ks = np.unique(np.round(10.0 ** (np.arange(n) / per_decade)).astype(np.int64))
    ks = ks[(ks >= start) & (ks <= K)]
    return np.unique(np.append(ks, K))


@dataclass
class MomentSeries:
    """Checkpointed ensemble averages of squared errors."""

    checkpoints: np.ndarray
    m_theta: np.ndarray
    m_w: np.ndarray
    m_track: np.ndarray
    stderr_theta: np.ndarray
    stderr_w: np.ndarray
    stderr_track: np.ndarray
    replicas: int
    V0: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("checkpoints", "m_theta", "m_w", "m_track",
                     "stderr_theta", "stderr_w", "stderr_track"):
            setattr(self, name, np.asarray(getattr(self, name)))

    def field(self, name):
        return getattr(self, name)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d

    def equals(self, other):
        names = ("checkpoints", "m_theta", "m_w", "m_track",
                 "stderr_theta", "stderr_w", "stderr_track")
        return (self.replicas == other.replicas and self.V0 == other.V0
                and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names))


def replica_rng(master_seed, replica):
    """Stream for one replica; independent of how many replicas run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed),
                                                        spawn_key=(int(replica),)))


@dataclass(frozen=True)
class InitSpec:
    """Initial iterate distribution.

    ``kind="uniform"``: i.i.d. ``U[-radius, radius]`` entries; ``"fixed"``:
    the given ``theta0``/``w0``; ``"star"``: the fixed point.
    """

    kind: str = "uniform"
    radius: float = 1.0
    theta0: tuple = None
    w0: tuple = None

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed", "star"):
            raise ConfigError(f"unknown init kind {self.kind!r}")

    def draw(self, rng, d_t, d_w, fp):
        if self.kind == "uniform":
            u = rng.uniform(-self.radius, self.radius, d_t + d_w)
            return u[:d_t], u[d_t:]
        if self.kind == "fixed":
            return np.asarray(self.theta0, dtype=float), np.asarray(self.w0, dtype=float)
        return fp.theta_star.copy(), fp.w_star.copy()

    def V0(self, fp):
        """``E[||theta0 - theta*||^2 + ||w0 - w*||^2]`` in closed form."""
        t, w = fp.theta_star, fp.w_star
        if self.kind == "uniform":
            var = self.radius**2 / 3.0
            return float(var * (len(t) + len(w)) + t @ t + w @ w)
        if self.kind == "fixed":
            dt = np.asarray(self.theta0) - t
            dw = np.asarray(self.w0) - w
            return float(dt @ dt + dw @ dw)
        return 0.0


class _MartingaleDriver:
    """Affine Gaussian noise, using the stacked state ``x = (theta, w)``.

    The iteration becomes ``x' = x + h * (b - A x + s * sqrt(1 + ||x||^2) z)``
    with block matrix ``A``, step vector ``h = (beta, .., gamma, ..)`` and
    per-coordinate noise scale ``s``.
    """

    stacked = True

    def __init__(self, sys, noise):
        self.sys = sys
        self.noise = noise
        dt, dw = sys.d_theta, sys.d_w
        self.d = dt + dw
        self.dt = dt
        self.A_T = np.block([[sys.A11, sys.A12], [sys.A21, sys.A22]]).T.copy()
        self.b = np.concatenate([sys.b1, sys.b2])
        self.scale = np.concatenate([np.full(dt, noise.scale_V), np.full(dw, noise.scale_W)])
        self.is_beta = np.arange(self.d) < dt

    def block(self, rngs, n):
        return np.stack([r.standard_normal((n, self.d)) for r in rngs], axis=1)

    def start(self, rngs):
        return None

    def step(self, x, beta, gamma, draws, j, state):
        h = np.where(self.is_beta, beta, gamma)
        root = np.sqrt(1.0 + np.einsum("ri,ri->r", x, x))[:, None]
        drift = self.b - x @ self.A_T + (root * self.scale) * draws[j]
        return x + h * drift, state


class _MarkovDriver:
    """Iteration driven by per-state observations along a chain started from ``mu``."""

    stacked = False

    def __init__(self, model):
        self.model = model
        self.sampler = ChainSampler(model.P)

    def block(self, rngs, n):
        return np.stack([r.random(n) for r in rngs], axis=1)

    def start(self, rngs):
        u = np.array([r.random() for r in rngs])
        return self.sampler.stationary_draw(self.model.mu, u)

    def step(self, theta, w, beta, gamma, draws, j, x):
        m = self.model
        x = self.sampler.step(x, draws[j])
        mv = _batched_matvec
        theta_n = theta + beta * (m.obs_b1[x] - mv(m.obs_A11[x], theta) - mv(m.obs_A12[x], w))
        w_n = w + gamma * (m.obs_b2[x] - mv(m.obs_A21[x], theta) - mv(m.obs_A22[x], w))
        return theta_n, w_n, x


def _batched_matvec(M, v):
    return np.einsum("rij,rj->ri", M, v)


def _run_chunk(driver, sys, fp, schedule, init, K, checkpoints, master_seed, replicas):
    rngs = [replica_rng(master_seed, r) for r in replicas]
    starts = [init.draw(r, sys.d_theta, sys.d_w, fp) for r in rngs]
    theta = np.array([s[0] for s in starts], dtype=float)
    w = np.array([s[1] for s in starts], dtype=float)
    state = driver.start(rngs)
    n_rep = len(replicas)
    out = np.empty((3, len(checkpoints), n_rep))
    ci = 0
    beta_all, gamma_all = schedule.eval(np.arange(K))

    def record(i):
        out[0, i] = np.sum((theta - fp.theta_star) ** 2, axis=1)
        out[1, i] = np.sum((w - fp.w_star) ** 2, axis=1)
        out[2, i] = np.sum((w - sys.tracking_target(theta)) ** 2, axis=1)

    if checkpoints[0] == 0:
        record(0)
        ci = 1
    k = 0
    stacked = getattr(driver, "stacked", False)
    x = np.concatenate([theta, w], axis=1) if stacked else None
    dt = sys.d_theta
    while k < K:
        n = min(BLOCK, K - k)
        draws = driver.block(rngs, n)
        for j in range(n):
            if stacked:
                x, state = driver.step(x, beta_all[k], gamma_all[k], draws, j, state)
            else:
                theta, w, state = driver.step(theta, w, beta_all[k], gamma_all[k], draws, j, state)
            k += 1
            if ci < len(checkpoints) and checkpoints[ci] == k:
                if stacked:
                    theta, w = x[:, :dt], x[:, dt:]
                record(ci)
                ci += 1
        if stacked:
            theta, w = x[:, :dt], x[:, dt:]
        bad = ~(np.all(np.isfinite(theta), axis=1) & np.all(np.isfinite(w), axis=1))
        if bad.any():
            r = int(np.flatnonzero(bad)[0])
            raise NonFinite(f"replica {replicas[r]} diverged by iteration {k}",
                            iteration=k, replica=int(replicas[r]))
    return out


def run_ensemble(problem, schedule, K, replicas, master_seed, noise=None, init=None,
                 checkpoints=None, threads=1, chunk=CHUNK, certificate=None, override=False):
    """Simulate ``replicas`` independent trajectories and average squared errors.

    Parameters
    ----------
    problem : LinearSystem, MarkovModel or GtdProblem
        A ``LinearSystem`` is driven by martingale noise from ``noise``; a
        ``MarkovModel`` by its per-state observations along a chain started
        from its stationary law, with the mean fields as reference system.
        A ``GtdProblem`` runs on its transition chain.
    schedule : StepSchedule
    K : int
        Number of steps.
    replicas : int
    master_seed : int
    noise : MartingaleNoiseSpec, optional
    init : InitSpec, optional
        Defaults to ``U[-1, 1]`` entries.
    checkpoints : array_like, optional
        Increasing indices in ``[0, K]``; defaults to :func:`geometric_checkpoints`.
    threads : int
        Worker threads; affects wall time only.
    chunk : int
        Replicas per vectorised batch.  Part of the numerical definition of
        the run, so keep it fixed when comparing outputs.
    certificate : ScheduleCertificate, optional
        When given and not admissible, the run is refused unless
        ``override`` is set.
    override : bool

    Returns
    -------
    MomentSeries
    """
    from .markov import mean_fields
    from .problems import GtdProblem, gtd_markov_model

    if replicas < 1 or K < 1:
        raise ConfigError("need at least one replica and one step")
    if certificate is not None and not certificate.admissible and not override:
        failed = sorted(k for k, v in certificate.checks.items() if not v)
        raise ScheduleNotAdmissible(f"schedule fails {failed}; pass override=True to run anyway")
    init = init or InitSpec()
    if isinstance(problem, GtdProblem):
        problem, _ = gtd_markov_model(problem)
    if isinstance(problem, MarkovModel):
        sys = mean_fields(problem, check=False)
        driver = _MarkovDriver(problem)
        regime = "markov"
    else:
        sys = problem
        driver = _MartingaleDriver(sys, noise if noise is not None else MartingaleNoiseSpec())
        regime = "martingale"
    fp = fixed_point(sys)
    cps = geometric_checkpoints(K) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0 or np.any(np.diff(cps) <= 0) or cps[0] < 0 or cps[-1] > K:
        raise ConfigError("checkpoints must be increasing and lie in [0, K]")
    # divergence is detected per block and reported as NonFinite
    def job(g):
        with np.errstate(over="ignore", invalid="ignore"):
            return _run_chunk(driver, sys, fp, schedule, init, K, cps, master_seed, g)

    groups = [np.arange(s, min(s + chunk, replicas)) for s in range(0, replicas, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(job, groups))
    else:
        parts = [job(g) for g in groups]
    sq = np.concatenate(parts, axis=2)
    mean = sq.mean(axis=2)
    se = sq.std(axis=2, ddof=1) / np.sqrt(replicas) if replicas > 1 else np.zeros_like(mean)
    return MomentSeries(
        checkpoints=cps, m_theta=mean[0], m_w=mean[1], m_track=mean[2],
        stderr_theta=se[0], stderr_w=se[1], stderr_track=se[2], replicas=int(replicas),
        V0=init.V0(fp), meta={"regime": regime, "K": int(K), "master_seed": int(master_seed),
                              "chunk": int(chunk)},
    )
