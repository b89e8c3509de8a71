"""Decoupling the two timescales with the L_k transform.

Run with ``python demos/04_transform.py``; takes a few seconds.
"""
# %% The transform.
# theta~ = theta - theta* and w~ = w - w* + C_{k-1} theta~ turn the coupled
# recursion into one whose slow block is driven by B11 = Delta - A12 L_k.
# Fed the same noise, both recursions produce the same trajectory.
import numpy as np

from twoscale.linalg import make_certificate
from twoscale.problems import random_toy_instance
from twoscale.schedules import admissible_polynomial, stepsize_caps
from twoscale.transform import TransformContext, equivalence_oracle, transform_bounds

inst = random_toy_instance(10, 7)
sys = inst.system
c22, cd = make_certificate(sys.A22), make_certificate(sys.delta)
caps = stepsize_caps(sys, c22, cd)
bounds = transform_bounds(sys, c22, cd)
print(f"uniform bounds: ||L_k|| <= {bounds.L_inf:.3g}, ||C_k|| <= {bounds.C_inf:.3g}")

# %% Equivalence under an admissible schedule.
# With paranoid checks on, every step also verifies ||L_k|| <= L_inf.
sched = admissible_polynomial(c22, cd, caps, 2.0 / 3.0)
rng = np.random.default_rng(0)
K = 10**4
rep = equivalence_oracle(sys, sched, 0.1 * rng.standard_normal((K, 10)),
                         0.5 * rng.standard_normal((K, 10)), rng.uniform(-1, 1, 10),
                         rng.uniform(-1, 1, 10), ctx=TransformContext(sys, c22, cd, paranoid=True))
print(f"max deviation between the two recursions: {rep.max_deviation:.2e}")
print(f"largest ||L_k|| / L_inf: {rep.max_L_ratio:.3f}")
