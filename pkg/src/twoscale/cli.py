"""Command-line entry point.

Subcommands: ``gen``, ``certify``, ``simulate``, ``theory``, ``rates`` and
``reproduce``.  Each prints a one-line JSON summary on stdout and writes its
documents under ``--out``.  Exit codes: 0 success, 2 configuration error,
3 assumption failure, 4 numerical failure.
"""
import argparse
import json
import os
import sys as _sys
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__
from .errors import (AssumptionError, ConfigError, NumericalError, ScheduleNotAdmissible,
                     TwoScaleError)
from .linalg import make_certificate
from .markov import MarkovModel
from .noise import MartingaleNoiseSpec
from .problems import GarnetSpec, garnet_instance, gtd_markov_model, gtd_system, random_toy_instance
from .report import (dump_json, to_jsonable, load_config, parse_config, rate_fit,
                     series_columns, system_from_dict, system_to_dict, write_csv)
from .schedules import StepSchedule, stepsize_caps, validate
from .simulator import geometric_checkpoints, run_ensemble
from .system import check_a1, fixed_point
from .theory import (expansion, expansion_caps, init_moments,
                     martingale_constants, refined_caps, martingale_envelope)
from .transform import transform_bounds

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_NUMERICAL = 0, 2, 3, 4
SIGMAS = {"0.5": 0.5, "0.67": 2.0 / 3.0, "0.75": 0.75}
CERT_HORIZON = 10**6

# Scaled schedules of the end-to-end pipelines, keyed by sigma.  They keep
# the slow step well inside the stable range of each problem while letting
# the rates emerge within 10^6 iterations.
TOY_GAMMA = {0.5: 1.9, 2.0 / 3.0: 3.5, 0.75: 4.8}
GARNET_GAMMA0 = 0.027


def toy_reproduce_schedule(sigma):
    """``beta_k = 2/(k+100)``, ``gamma_k = c/(k+40)^sigma``."""
    return StepSchedule.polynomial(2.0, 100.0, TOY_GAMMA[sigma], 40.0, sigma)


def garnet_reproduce_schedule(sigma):
    """``beta_k = 300/(k+8000)``, ``gamma_k = c/(k+2000)^sigma`` with ``gamma_0`` fixed."""
    return StepSchedule.polynomial(300.0, 8e3, GARNET_GAMMA0 * 2e3**sigma, 2e3, sigma)


def reproduce_config(problem, sigma):
    """Default configuration document of ``reproduce``."""
    if problem == "toy":
        sched = toy_reproduce_schedule(sigma)
        return {"problem": {"toy": {"d": 10, "seed": 7}}, "schedule": sched.to_dict(),
                "noise": {"regime": "martingale", "scale_V": 0.1, "scale_W": 0.5},
                "K": 10**6, "replicas": 200, "seed": 11, "override_admissibility": True}
    sched = garnet_reproduce_schedule(sigma)
    return {"problem": {"garnet": {"seed": 15}}, "schedule": sched.to_dict(),
            "noise": {"regime": "markov"}, "K": 10**6, "replicas": 100, "seed": 11,
            "override_admissibility": True}


# ---- problem construction -------------------------------------------------

@dataclass
class Built:
    """A configured problem: reference system, fixed point and noise source."""

    sys: object
    fp: object
    noise: MartingaleNoiseSpec = None
    model: MarkovModel = None
    instance: dict = None

    @property
    def driver_problem(self):
        return self.model if self.model is not None else self.sys


def build_problem(cfg):
    kind, body = cfg.problem_kind, cfg.problem
    noise = MartingaleNoiseSpec(scale_V=cfg.scale_V, scale_W=cfg.scale_W)
    if kind == "toy":
        inst = random_toy_instance(body["d"], body["seed"], cfg.scale_V, cfg.scale_W)
        extra = {"kind": "toy", "d": body["d"], "seed": body["seed"], "resamples": inst.resamples}
        return Built(sys=inst.system, fp=fixed_point(inst.system), noise=inst.noise,
                     instance=extra)
    if kind == "garnet":
        prob = garnet_instance(GarnetSpec(**body))
        sys = gtd_system(prob)
        model = gtd_markov_model(prob)[0] if cfg.regime == "markov" else None
        extra = {"kind": "garnet", "spec": body, "resamples": prob.resamples,
                 "p": prob.p, "rewards": prob.rewards, "features": prob.features,
                 "policy": prob.policy, "discount": prob.discount}
        return Built(sys=sys, fp=fixed_point(sys), noise=None if model else noise, model=model,
                     instance=extra)
    try:
        with open(body) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read system file: {exc}") from None
    try:
        sys = system_from_dict(doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    check_a1(sys)
    return Built(sys=sys, fp=fixed_point(sys), noise=noise,
                 instance={"kind": "system_file", "path": body})


def certificates(cfg, sys):
    cert22 = make_certificate(sys.A22, rule=cfg.rule)
    cert_d = make_certificate(sys.delta, rule=cfg.rule)
    return cert22, cert_d


def _cert_doc(c):
    return {"a": c.a, "step_cap": c.step_cap, "p": c.p, "norm_Q": c.norm_Q,
            "norm_A_Q": c.norm_A_Q, "lam_min_Q": c.lam_min, "lam_max_Q": c.lam_max,
            "rule": c.rule, "Q": c.Q}


def _horizon(cfg):
    return int(min(cfg.K, CERT_HORIZON))


# ---- subcommands ----------------------------------------------------------

def cmd_gen(cfg, built, out):
    doc = dict(system_to_dict(built.sys))
    doc.update(theta_star=built.fp.theta_star, w_star=built.fp.w_star, instance=built.instance)
    path = os.path.join(out, "instance.json")
    _write(out, lambda: dump_json(doc, path))
    return {"instance": path, "d_theta": built.sys.d_theta, "d_w": built.sys.d_w}


def certify_document(cfg, built):
    sys = built.sys
    cert22, cert_d = certificates(cfg, sys)
    caps = stepsize_caps(sys, cert22, cert_d)
    bounds = transform_bounds(sys, cert22, cert_d)
    base = validate(cfg.schedule, cert22, cert_d, _horizon(cfg), caps=caps)
    beta_exp, kappa_exp = expansion_caps(sys, caps, bounds, cert22.a, cert_d.a, *cfg.schedule.head)
    doc = {
        "lyapunov": {"A22": _cert_doc(cert22), "Delta": _cert_doc(cert_d)},
        "caps": asdict(caps), "transform_bounds": asdict(bounds),
        "expansion_caps": {"beta_exp": beta_exp, "kappa_exp": kappa_exp},
        "schedule": cfg.schedule.to_dict(), "certificate": base.to_dict(),
    }
    refined = None
    if built.noise is not None:
        moments = init_moments(sys, built.fp, cfg.init)
        m_V, m_W = built.noise.moment_constants(sys.d_theta, sys.d_w)
        rcaps = refined_caps(sys, built.fp, cert22, cert_d, bounds, caps, m_V, m_W, moments)
        refined = validate(cfg.schedule, cert22, cert_d, _horizon(cfg), caps=rcaps)
        doc["refined_caps"] = asdict(rcaps)
        doc["refined_certificate"] = refined.to_dict()
    return doc, base, refined


def cmd_certify(cfg, built, out):
    doc, base, refined = certify_document(cfg, built)
    path = os.path.join(out, "certificate.json")
    _write(out, lambda: dump_json(doc, path))
    summary = {"certificate": path, "admissible": base.admissible, "kappa": base.kappa,
               "varsigma": base.varsigma, "failed": sorted(k for k, v in base.checks.items() if not v)}
    if refined is not None:
        summary["admissible_refined"] = refined.admissible
    return summary


def _simulate(cfg, built):
    cert22, cert_d = certificates(cfg, built.sys)
    cert = validate(cfg.schedule, cert22, cert_d, _horizon(cfg), sys=built.sys)
    series = run_ensemble(built.driver_problem, cfg.schedule, cfg.K, cfg.replicas, cfg.seed,
                          noise=built.noise, init=cfg.init, checkpoints=cfg.checkpoints,
                          threads=cfg.threads, certificate=cert, override=cfg.override)
    return series, cert


def _series_meta(cfg, series, cert):
    return {"config": cfg.to_dict(), "replicas": series.replicas, "V0": series.V0,
            "meta": series.meta, "admissible": cert.admissible,
            "overridden": bool(cfg.override and not cert.admissible)}


def cmd_simulate(cfg, built, out):
    series, cert = _simulate(cfg, built)
    csv_path = os.path.join(out, "moments.csv")
    meta_path = os.path.join(out, "moments.json")

    def emit():
        write_csv(csv_path, series_columns(series, cfg.schedule))
        dump_json(_series_meta(cfg, series, cert), meta_path)

    _write(out, emit)
    return {"moments": csv_path, "K": cfg.K, "replicas": series.replicas,
            "m_theta_final": series.m_theta[-1], "m_track_final": series.m_track[-1]}


def theory_documents(cfg, built):
    if built.noise is None:
        raise ConfigError("theory needs the martingale noise regime")
    sys, fp, sched = built.sys, built.fp, cfg.schedule
    cert22, cert_d = certificates(cfg, sys)
    caps = stepsize_caps(sys, cert22, cert_d)
    bounds = transform_bounds(sys, cert22, cert_d)
    cps = cfg.checkpoints
    exp = expansion(sys, built.noise.covariances_at(fp.theta_star, fp.w_star), cert22, cert_d,
                    sched, cps)
    moments = init_moments(sys, fp, cfg.init)
    m_V, m_W = built.noise.moment_constants(sys.d_theta, sys.d_w)
    rcaps = refined_caps(sys, fp, cert22, cert_d, bounds, caps, m_V, m_W, moments)
    cert = validate(sched, cert22, cert_d, _horizon(cfg), caps=rcaps)
    beta0, gamma0 = sched.head
    const = martingale_constants(sys, fp, cert22, cert_d, bounds, (beta0, gamma0, cert.kappa),
                                 m_V, m_W, moments)
    beta, gamma = sched.eval(cps)
    cols = {"k": cps, "beta": beta, "gamma": gamma, "I_k": exp.I, "I_over_beta": exp.I / beta}
    envelope_note = None
    try:
        env = martingale_envelope(const, sched, cps, sys.d_theta, sys.d_w, cert=cert)
        cols["envelope_theta"] = env.theta
        cols["envelope_track"] = env.track
    except ScheduleNotAdmissible as exc:
        envelope_note = str(exc)
    doc = {
        "Sigma_eff": exp.Sigma_eff, "trace_Sigma": float(np.trace(exp.Sigma_eff)),
        "E3": exp.E3, "E4": exp.E4, "k0_exp": exp.k0_exp,
        "refined_caps": asdict(rcaps), "admissible_refined": cert.admissible,
        "constants": const.as_dict(), "envelope": envelope_note or "computed",
    }
    return cols, doc, const.trace


def cmd_theory(cfg, built, out):
    cols, doc, trace = theory_documents(cfg, built)
    csv_path = os.path.join(out, "theory.csv")

    def emit():
        write_csv(csv_path, cols)
        dump_json(doc, os.path.join(out, "theory.json"))
        dump_json(trace, os.path.join(out, "provenance.json"))

    _write(out, emit)
    return {"theory": csv_path, "E3": doc["E3"], "E4": doc["E4"], "k0_exp": doc["k0_exp"],
            "envelope": "envelope_theta" in cols}


def fit_rates(series):
    return {name: asdict(rate_fit(series.checkpoints, getattr(series, name)))
            for name in ("m_theta", "m_w", "m_track")}


def cmd_rates(cfg, built, out):
    series, cert = _simulate(cfg, built)
    fits = fit_rates(series)

    def emit():
        write_csv(os.path.join(out, "moments.csv"), series_columns(series, cfg.schedule))
        dump_json({"fits": fits, **_series_meta(cfg, series, cert)}, os.path.join(out, "rates.json"))

    _write(out, emit)
    return {f"slope_{name}": f["slope"] for name, f in fits.items()}


def cmd_reproduce(cfg, built, out, problem):
    series, cert = _simulate(cfg, built)
    leading = None
    if built.noise is not None:
        cert22, cert_d = certificates(cfg, built.sys)
        cov = built.noise.covariances_at(built.fp.theta_star, built.fp.w_star)
        leading = expansion(built.sys, cov, cert22, cert_d, cfg.schedule, series.checkpoints).I
    else:
        leading = np.full(len(series.checkpoints), np.nan)
    fits = fit_rates(series)
    tag = f"_sigma{cfg.schedule.sigma:.2f}" if cfg.schedule.kind == "polynomial" else ""
    csv_path = os.path.join(out, f"reproduce_{problem}{tag}.csv")

    def emit():
        write_csv(csv_path, series_columns(series, cfg.schedule, leading=leading))
        dump_json({"fits": fits, **_series_meta(cfg, series, cert)},
                  csv_path[:-4] + ".json")

    _write(out, emit)
    return {"csv": csv_path, **{f"slope_{n}": f["slope"] for n, f in fits.items()}}


# ---- plumbing -------------------------------------------------------------

def _write(out, fn):
    os.makedirs(out, exist_ok=True)
    fn()


def _parser():
    p = argparse.ArgumentParser(prog="twoscale", description="Linear two-timescale SA experiments.")
    p.add_argument("--version", action="version", version=f"twoscale {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("gen", "emit a problem instance"),
                        ("certify", "check Lyapunov certificates, caps and schedule"),
                        ("simulate", "run a Monte Carlo ensemble"),
                        ("theory", "leading term, sandwich constants and envelopes"),
                        ("rates", "simulate and fit log-log slopes"),
                        ("reproduce", "end-to-end toy or Garnet pipeline")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--seed", type=int, help="master seed (overrides config and TWOSCALE_SEED)")
        s.add_argument("--threads", type=int, help="worker threads (wall time only)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--sigma", choices=sorted(SIGMAS), help="exponent of the fast step")
        s.add_argument("--K", type=int, help="number of iterations")
        s.add_argument("--replicas", type=int, help="number of replicas")
        if name in ("simulate", "rates", "reproduce"):
            s.add_argument("--override", action="store_true",
                           help="run even if the schedule fails the admissibility checks")
        if name == "reproduce":
            s.add_argument("--problem", choices=("toy", "garnet"), default="toy")
    return p


def resolve_config(args, env=None):
    env = os.environ if env is None else env
    sigma = SIGMAS[args.sigma] if args.sigma else None
    if args.command == "reproduce":
        if args.config:
            cfg = load_config(args.config, env)
        else:
            cfg = parse_config(reproduce_config(args.problem, sigma or 2.0 / 3.0), env)
    else:
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config, env)
    if sigma is not None and (args.config or args.command != "reproduce"):
        if cfg.schedule.kind != "polynomial":
            raise ConfigError("--sigma needs a polynomial schedule")
        cfg.schedule = replace(cfg.schedule, sigma=sigma)
    if args.K is not None or args.replicas is not None:
        K = args.K if args.K is not None else cfg.K
        if K < 1 or (args.replicas is not None and args.replicas < 1):
            raise ConfigError("K and replicas must be positive")
        if args.K is not None:
            cfg.checkpoints = geometric_checkpoints(K)
        cfg = replace(cfg, K=K, replicas=args.replicas or cfg.replicas)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = max(1, args.threads)
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "override", False):
        cfg.override = True
    return cfg


def run(argv=None, env=None):
    """Parse ``argv``, execute, and return ``(exit_code, summary)``."""
    args = _parser().parse_args(argv)
    summary = {"command": args.command}
    try:
        cfg = resolve_config(args, env)
        built = build_problem(cfg)
        handler = {"gen": cmd_gen, "certify": cmd_certify, "simulate": cmd_simulate,
                   "theory": cmd_theory, "rates": cmd_rates}.get(args.command)
        if handler is None:
            result = cmd_reproduce(cfg, built, cfg.out, args.problem)
        else:
            result = handler(cfg, built, cfg.out)
        summary.update(status="ok", seed=cfg.seed, **result)
        code = EXIT_OK
    except ConfigError as exc:
        summary.update(status="config_error", error=type(exc).__name__, message=str(exc))
        code = EXIT_CONFIG
    except AssumptionError as exc:
        summary.update(status="assumption_failure", error=type(exc).__name__, message=str(exc))
        code = EXIT_ASSUMPTION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        summary.update(status="numerical_failure", error=type(exc).__name__, message=str(exc))
        code = EXIT_NUMERICAL
    except (TwoScaleError, ValueError) as exc:
        summary.update(status="config_error", error=type(exc).__name__, message=str(exc))
        code = EXIT_CONFIG
    return code, summary


def main(argv=None):
    code, summary = run(argv)
    print(json.dumps(to_jsonable(summary), sort_keys=True))
    if code:
        print(f"twoscale {summary['command']}: {summary['message']}", file=_sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
