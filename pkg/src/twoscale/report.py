"""Experiment configuration, rate fits and result serialisation."""
import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientPoints, NonPositiveValue
from .problems import GarnetSpec
from .schedules import StepSchedule
from .simulator import InitSpec, MomentSeries, geometric_checkpoints
from .system import LinearSystem

SEED_ENV = "TWOSCALE_SEED"


# ---- rate fitting ---------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple


def rate_fit(k, values, window=None, min_points=5):
    """Least-squares fit of ``log(value)`` on ``log(k)`` inside ``window``.

    ``window = (k_lo, k_hi)`` defaults to the last decade of ``k``.
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = (k[-1] / 10.0, k[-1])
    lo, hi = window
    m = (k >= lo) & (k <= hi)
    if m.sum() < min_points:
        raise InsufficientPoints(f"{int(m.sum())} points in window {window}, need {min_points}")
    if np.any(y[m] <= 0) or np.any(k[m] <= 0):
        raise NonPositiveValue("log-log fit needs positive values")
    x, z = np.log(k[m]), np.log(y[m])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, z, rcond=None)
    resid = z - A @ np.array([slope, intercept])
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - float(resid @ resid) / ss_tot))
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=r2,
                   window=(float(k[m][0]), float(k[m][-1])))


def normalized_curves(series, schedule):
    """Raw and step-normalised columns: ``m_theta/beta_k``, ``m_w/gamma_k``, ``m_track/gamma_k``."""
    beta, gamma = schedule.eval(series.checkpoints)
    return {
        "k": series.checkpoints,
        "m_theta": series.m_theta, "m_theta_norm": series.m_theta / beta,
        "m_w": series.m_w, "m_w_norm": series.m_w / gamma,
        "m_track": series.m_track, "m_track_norm": series.m_track / gamma,
    }


# ---- CSV ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path_or_buf, columns):
    """Write equal-length columns; floats use 17 significant digits (exact round trip)."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    own = isinstance(path_or_buf, (str, os.PathLike))
    f = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(columns[c][i]) for c in names])
    finally:
        if own:
            f.close()


def read_csv(path_or_text):
    if isinstance(path_or_text, (str, os.PathLike)) and os.path.exists(path_or_text):
        with open(path_or_text, newline="") as f:
            text = f.read()
    else:
        text = path_or_text
    rows = list(csv.reader(io.StringIO(text)))
    names, data = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in data]
        out[name] = np.array([int(c) for c in col]) if name == "k" else np.array([float(c) for c in col])
    return out


def series_columns(series, schedule=None, leading=None):
    cols = {"k": series.checkpoints}
    if schedule is not None:
        cols.update({k: v for k, v in normalized_curves(series, schedule).items() if k != "k"})
    else:
        cols.update({"m_theta": series.m_theta, "m_w": series.m_w, "m_track": series.m_track})
    if leading is not None:
        cols["I_k"] = leading
    cols.update({"stderr_theta": series.stderr_theta, "stderr_w": series.stderr_w,
                 "stderr_track": series.stderr_track})
    return cols


def series_from_columns(cols, replicas, V0):
    return MomentSeries(checkpoints=cols["k"], m_theta=cols["m_theta"], m_w=cols["m_w"],
                        m_track=cols["m_track"], stderr_theta=cols["stderr_theta"],
                        stderr_w=cols["stderr_w"], stderr_track=cols["stderr_track"],
                        replicas=replicas, V0=V0)


# ---- JSON documents -------------------------------------------------------

def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def dump_json(obj, path=None):
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as f:
            f.write(text + "\n")
    return text


def system_to_dict(sys):
    return {name: getattr(sys, name).tolist() for name in ("b1", "b2", "A11", "A12", "A21", "A22")}


def system_from_dict(d):
    try:
        return LinearSystem(**{name: d[name] for name in ("b1", "b2", "A11", "A12", "A21", "A22")})
    except KeyError as exc:
        raise ConfigError(f"system document is missing {exc}") from None


# ---- experiment configuration --------------------------------------------

PROBLEM_KINDS = ("toy", "garnet", "system_file")


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``problem`` holds exactly one of ``toy`` (``{"d", "seed"}``), ``garnet``
    (Garnet fields) or ``system_file`` (path to a system document).
    """

    problem_kind: str
    problem: dict
    schedule: StepSchedule
    regime: str = "martingale"
    scale_V: float = 0.1
    scale_W: float = 0.5
    K: int = 10**5
    replicas: int = 100
    checkpoints: np.ndarray = None
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)
    out: str = "out"
    threads: int = 1
    override: bool = False
    rule: str = "safe"

    def __post_init__(self):
        if self.checkpoints is None:
            self.checkpoints = geometric_checkpoints(self.K)
        cps = np.asarray(self.checkpoints, dtype=np.int64)
        if cps.size == 0 or cps[-1] > self.K or np.any(np.diff(cps) <= 0) or cps[0] < 0:
            raise ConfigError("checkpoints must be increasing, nonnegative and at most K")
        self.checkpoints = cps

    def to_dict(self):
        return {
            "problem": {self.problem_kind: self.problem},
            "schedule": self.schedule.to_dict(),
            "noise": {"regime": self.regime, "scale_V": self.scale_V, "scale_W": self.scale_W},
            "K": self.K, "replicas": self.replicas, "checkpoints": self.checkpoints.tolist(),
            "seed": self.seed,
            "init": {k: v for k, v in self.init.__dict__.items() if v is not None},
            "out": self.out, "threads": self.threads,
            "override_admissibility": self.override, "certificate_rule": self.rule,
        }


def _require(d, key, kind, where):
    if key not in d:
        raise ConfigError(f"missing '{key}' in {where}")
    v = d[key]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ConfigError(f"'{key}' in {where} must be an integer")
        return int(v)
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{key}' in {where} must be a number")
        return float(v)
    return v


def parse_config(doc, env=None):
    """Build an :class:`ExperimentConfig` from a parsed JSON document.

    The ``TWOSCALE_SEED`` entry of ``env`` (default ``os.environ``)
    overrides the document's seed.
    """
    env = os.environ if env is None else env
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    prob = doc.get("problem")
    if not isinstance(prob, dict):
        raise ConfigError("config needs a 'problem' object")
    kinds = [k for k in PROBLEM_KINDS if k in prob]
    if len(kinds) != 1 or len(prob) != 1:
        raise ConfigError(f"'problem' must hold exactly one of {PROBLEM_KINDS}")
    kind = kinds[0]
    body = prob[kind]
    if kind == "toy":
        body = {"d": _require(body, "d", int, "problem.toy"),
                "seed": _require(body, "seed", int, "problem.toy")}
        if body["d"] < 1:
            raise ConfigError("problem.toy.d must be at least 1")
    elif kind == "garnet":
        if not isinstance(body, dict):
            raise ConfigError("problem.garnet must be an object")
        try:
            GarnetSpec(**body)
        except TypeError as exc:
            raise ConfigError(f"bad garnet fields: {exc}") from None
    else:
        if not isinstance(body, str):
            raise ConfigError("problem.system_file must be a path")
    sched = doc.get("schedule")
    if not isinstance(sched, dict):
        raise ConfigError("config needs a 'schedule' object")
    try:
        schedule = StepSchedule.from_dict(sched)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    noise = doc.get("noise", {})
    if not isinstance(noise, dict):
        raise ConfigError("'noise' must be an object")
    regime = noise.get("regime", "markov" if kind == "garnet" else "martingale")
    if regime not in ("martingale", "markov"):
        raise ConfigError(f"unknown noise regime {regime!r}")
    if regime == "markov" and kind != "garnet":
        raise ConfigError("markov noise needs a garnet problem")
    K = _require(doc, "K", int, "config")
    if K < 1:
        raise ConfigError("K must be at least 1")
    replicas = _require(doc, "replicas", int, "config") if "replicas" in doc else 100
    if replicas < 1:
        raise ConfigError("replicas must be at least 1")
    cps = doc.get("checkpoints")
    if isinstance(cps, dict):
        cps = geometric_checkpoints(K, per_decade=int(cps.get("per_decade", 8)))
    elif cps is not None and not isinstance(cps, list):
        raise ConfigError("'checkpoints' must be a list or a policy object")
    seed = _require(doc, "seed", int, "config") if "seed" in doc else 0
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    init_doc = doc.get("init", {})
    try:
        init = InitSpec(**init_doc)
    except TypeError as exc:
        raise ConfigError(f"bad init fields: {exc}") from None
    threads = _require(doc, "threads", int, "config") if "threads" in doc else 1
    override = doc.get("override_admissibility", False)
    if not isinstance(override, bool):
        raise ConfigError("'override_admissibility' must be true or false")
    rule = doc.get("certificate_rule", "safe")
    if rule not in ("safe", "classic"):
        raise ConfigError("'certificate_rule' must be 'safe' or 'classic'")
    return ExperimentConfig(
        problem_kind=kind, problem=body, schedule=schedule, regime=regime,
        scale_V=float(noise.get("scale_V", 0.1)), scale_W=float(noise.get("scale_W", 0.5)),
        K=K, replicas=replicas, checkpoints=cps, seed=seed, init=init,
        out=str(doc.get("out", "out")), threads=max(1, threads), override=override, rule=rule,
    )


def load_config(path, env=None):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc, env)
