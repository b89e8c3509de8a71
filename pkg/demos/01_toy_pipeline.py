"""From a random coupled system to fitted convergence rates.

Run with ``python demos/01_toy_pipeline.py``; takes about half a minute.
"""
# %% Build a toy instance.
# The generator draws a d=10 coupled linear system with a known solution and
# affine Gaussian noise whose variance grows with the iterate norm.
import numpy as np

from twoscale.linalg import make_certificate
from twoscale.problems import random_toy_instance
from twoscale.report import rate_fit
from twoscale.schedules import StepSchedule, stepsize_caps, validate
from twoscale.simulator import run_ensemble

inst = random_toy_instance(10, 7)
sys = inst.system
print(f"instance drawn after {inst.resamples} resamples")
print(f"||theta*|| = {np.linalg.norm(inst.theta_star):.3f}, "
      f"||w*|| = {np.linalg.norm(inst.w_star):.3f}")

# %% Stability certificates.
# Lyapunov certificates for A22 and Delta give the contraction rates a22 and
# a_Delta.  The base caps on the initial steps follow from them.
c22, cd = make_certificate(sys.A22), make_certificate(sys.delta)
caps = stepsize_caps(sys, c22, cd)
print(f"a22 = {c22.a:.3g}, a_Delta = {cd.a:.3g}")
print(f"caps: gamma0 <= {caps.gamma0:.3g}, beta0 <= {caps.beta0:.3g}, "
      f"beta/gamma <= {caps.kappa:.3g}")

# %% A practical schedule.
# beta_k = 2/(k+100) and gamma_k = 3.5/(k+40)^(2/3) are far above the
# worst-case caps, so the certificate lists the failed checks.  The
# simulator refuses such a schedule unless asked explicitly.
sched = StepSchedule.polynomial(2.0, 100.0, 3.5, 40.0, 2.0 / 3.0)
cert = validate(sched, c22, cd, 10**5, caps=caps)
print("admissible:", cert.admissible,
      "| failed:", sorted(k for k, v in cert.checks.items() if not v))

# %% Monte Carlo ensemble.
series = run_ensemble(sys, sched, 10**5, 50, master_seed=11, noise=inst.noise,
                      certificate=cert, override=True)
for name in ("m_theta", "m_track"):
    fit = rate_fit(series.checkpoints, getattr(series, name))
    print(f"{name}: slope {fit.slope:+.3f} over k in [{fit.window[0]:.0f}, {fit.window[1]:.0f}]")
# The slow error decays like beta_k ~ 1/k and the tracking error like gamma_k.
