"""Gradient TD on a random Garnet MDP, driven by its own Markov chain.

Run with ``python demos/03_garnet_gtd.py``; takes about a minute.
"""
# %% Draw the MDP.
# 30 states, 2 actions, branching factor 2, 8 features.  The generator
# redraws the kernel until the chain under the uniform policy is ergodic.
import numpy as np

from twoscale.problems import GarnetSpec, garnet_instance, gtd_markov_model, gtd_system
from twoscale.report import rate_fit
from twoscale.schedules import StepSchedule
from twoscale.simulator import run_ensemble
from twoscale.system import fixed_point

prob = garnet_instance(GarnetSpec(seed=15))
sys = gtd_system(prob)
fp = fixed_point(sys)
print(f"kernel resamples: {prob.resamples}")
print(f"||w*|| = {np.linalg.norm(fp.w_star):.1e}  (the correction iterate vanishes at the solution)")
eig = np.linalg.eigvalsh(0.5 * (sys.delta + sys.delta.T))
print(f"Delta symmetric part spectrum in [{eig.min():.2e}, {eig.max():.2e}]")

# %% Observations along the chain.
# Each (s, a, s') transition is one chain state.  Its observation matrices
# average to the GTD mean fields under the stationary law.
model, triples = gtd_markov_model(prob)
print(f"transition chain has {len(triples)} states")

# %% Ensemble.
# Small Delta eigenvalues make the slow rate emerge late, so the slow step
# starts large and the fast step small.
sched = StepSchedule.polynomial(300.0, 8e3, 0.027 * 2e3**0.5, 2e3, 0.5)
series = run_ensemble(prob, sched, 2 * 10**5, 20, master_seed=11)
for name in ("m_theta", "m_track"):
    fit = rate_fit(series.checkpoints, getattr(series, name))
    print(f"{name}: final {getattr(series, name)[-1]:.3e}, last-decade slope {fit.slope:+.3f}")
