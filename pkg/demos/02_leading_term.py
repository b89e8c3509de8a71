"""The exact leading term of the slow-iterate error and its two-sided bound.

Run with ``python demos/02_leading_term.py``; takes a few seconds.
"""
# %% Effective covariance.
# The slow iterate sees the fast-timescale noise through G = A12 A22^{-1}.
# The combined covariance Sigma drives the leading term I_k.
import numpy as np

from twoscale.linalg import make_certificate
from twoscale.problems import random_toy_instance
from twoscale.schedules import reference_toy_schedule
from twoscale.theory import expansion

inst = random_toy_instance(10, 7)
sys = inst.system
cov = inst.noise.covariances_at(inst.theta_star, inst.w_star)
c22, cd = make_certificate(sys.A22), make_certificate(sys.delta)
sched = reference_toy_schedule(2.0 / 3.0)

ks = np.arange(10**5 + 1)
res = expansion(sys, cov, c22, cd, sched, ks)
print(f"Tr(Sigma) = {np.trace(res.Sigma_eff):.4g}")

# %% Sandwich.
# From k0_exp on, I_k / (beta_k Tr Sigma) stays between E3 and E4.
ratio = res.ratios(sched)[res.k0_exp:]
print(f"k0_exp = {res.k0_exp}")
print(f"E3 = {res.E3:.4g} <= min ratio {ratio.min():.4g}, max ratio {ratio.max():.4g} "
      f"<= E4 = {res.E4:.4g}")

# %% Shape of the curve.
for k in (10, 100, 1000, 10**4, 10**5):
    print(f"k = {k:>6}: I_k = {res.I[k]:.4e}, I_k/beta_k = {res.I[k] / sched.eval(k)[0]:.4f}")
