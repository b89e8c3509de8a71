import numpy as np
import pytest

from twoscale.errors import BoundViolated, InverseFailed
from twoscale.linalg import make_certificate
from twoscale.problems import random_toy_instance
from twoscale.schedules import StepSchedule, admissible_polynomial, stepsize_caps
from twoscale.system import LinearSystem, fixed_point
from twoscale.transform import (TransformContext, TransformState, equivalence_oracle, l_step,
                                transform_bounds, transformed_step)


@pytest.fixture(scope="module")
def toy():
    sys = random_toy_instance(10, 7).system
    c22, cd = make_certificate(sys.A22), make_certificate(sys.delta)
    return sys, c22, cd, stepsize_caps(sys, c22, cd)


def scalar_system(A11=2.0, A12=1.0, A21=1.0, A22=1.0, b1=0.5, b2=-0.3):
    return LinearSystem(b1=[b1], b2=[b2], A11=[[A11]], A12=[[A12]], A21=[[A21]], A22=[[A22]])


def test_decoupled_transform_stays_zero():
    rng = np.random.default_rng(0)
    sys = LinearSystem(b1=rng.standard_normal(2), b2=rng.standard_normal(3),
                       A11=np.eye(2) * 2, A12=rng.standard_normal((2, 3)),
                       A21=np.zeros((3, 2)), A22=np.eye(3))
    state = TransformState.initial(sys)
    for k in range(50):
        state = l_step(state, 0.01, 0.1, sys)
        assert not state.L.any() and not state.C.any()
        np.testing.assert_array_equal(state.B11, sys.delta)


def test_decoupled_equivalence_exact():
    rng = np.random.default_rng(1)
    sys = LinearSystem(b1=rng.standard_normal(2), b2=rng.standard_normal(3),
                       A11=np.eye(2) * 2, A12=rng.standard_normal((2, 3)) * 0.1,
                       A21=np.zeros((3, 2)), A22=np.eye(3))
    K = 500
    rep = equivalence_oracle(sys, StepSchedule.constant(0.01, 0.1), rng.standard_normal((K, 2)),
                             rng.standard_normal((K, 3)), np.ones(2), np.ones(3))
    assert rep.max_deviation <= 1e-12


def test_scalar_reference_recursion():
    sys = scalar_system()
    assert sys.delta[0, 0] == pytest.approx(1.0)
    gamma = 0.2
    beta = gamma / 10
    state = TransformState.initial(sys)
    L = 0.0
    for _ in range(200):
        # L' = (L - g A22 L + b A22^{-1} A21 (Delta - A12 L)) / (1 - b (Delta - A12 L))
        L = (L - gamma * L + beta * (1.0 - L)) / (1.0 - beta * (1.0 - L))
        state = l_step(state, beta, gamma, sys)
        assert state.L[0, 0] == pytest.approx(L, abs=1e-14)
        assert state.C[0, 0] == pytest.approx(L + 1.0, abs=1e-14)
        assert state.B22[0, 0] == pytest.approx(0.1 * (L + 1.0) + 1.0, abs=1e-14)


def test_transformed_step_fixed_point():
    sys = scalar_system()
    state = TransformState.initial(sys)
    t, w, _ = transformed_step(np.zeros(1), np.zeros(1), state, 0.01, 0.1, np.zeros(1),
                               np.zeros(1), sys)
    assert not t.any() and not w.any()


def test_transformed_step_arithmetic():
    sys = scalar_system(A11=1.0, A12=0.0, A21=0.0)
    state = TransformState.initial(sys)
    t, _, _ = transformed_step(np.ones(1), np.zeros(1), state, 0.1, 0.1, np.ones(1),
                               np.zeros(1), sys)
    assert t[0] == pytest.approx(0.8)


def test_inverse_failed():
    sys = scalar_system(A11=1.0, A12=0.0, A21=0.0)
    with pytest.raises(InverseFailed):
        l_step(TransformState.initial(sys), 1.0, 0.1, sys)


def test_bound_violation_detected(toy):
    sys, c22, cd, _ = toy
    ctx = TransformContext(sys, c22, cd, paranoid=True)
    with pytest.raises(BoundViolated):
        l_step(TransformState.initial(sys), 0.014, 0.1, sys, ctx)


def test_transform_bounds_zero_coupling():
    sys = scalar_system(A11=1.0, A12=0.0, A21=0.0)
    c = make_certificate([[1.0]])
    b = transform_bounds(sys, c, c)
    assert b.L_inf == 0.0 and b.C_inf == 0.0


def test_toy_admissible_l_bound(toy):
    sys, c22, cd, caps = toy
    sched = admissible_polynomial(c22, cd, caps, 2.0 / 3.0)
    ctx = TransformContext(sys, c22, cd, paranoid=True)
    rng = np.random.default_rng(2)
    K = 10**4
    rep = equivalence_oracle(sys, sched, rng.standard_normal((K, 10)),
                             rng.standard_normal((K, 10)), rng.uniform(-1, 1, 10),
                             rng.uniform(-1, 1, 10), ctx=ctx)
    assert rep.max_L_ratio <= 1.0
    assert rep.max_deviation <= 1e-8
    assert rep.max_tracking_gap <= 1e-8


def test_zero_noise_from_fixed_point(toy):
    sys = toy[0]
    fp = fixed_point(sys)
    K = 200
    rep = equivalence_oracle(sys, StepSchedule.constant(1e-3, 1e-2), np.zeros((K, 10)),
                             np.zeros((K, 10)), fp.theta_star, fp.w_star)
    assert rep.max_deviation <= 1e-12
