import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twoscale.errors import ConfigError
from twoscale.linalg import make_certificate
from twoscale.problems import random_toy_instance
from twoscale.schedules import (StepSchedule, a2_ratio_checks, admissible_polynomial,
                                reference_garnet_schedule, reference_toy_schedule, stepsize_caps,
                                validate)
from twoscale.system import LinearSystem


@pytest.fixture(scope="module")
def toy():
    sys = random_toy_instance(10, 7).system
    c22, cd = make_certificate(sys.A22), make_certificate(sys.delta)
    return sys, c22, cd, stepsize_caps(sys, c22, cd)


def scalar_uncoupled():
    return LinearSystem(b1=[0.0], b2=[0.0], A11=[[1.0]], A12=[[0.0]], A21=[[0.0]], A22=[[1.0]])


# ---- evaluation ------------------------------------------------------------------

def test_reference_toy_head():
    b0, g0 = reference_toy_schedule(2.0 / 3.0).eval(0)
    assert b0 == pytest.approx(0.014)
    assert g0 == pytest.approx(300.0 / 10 ** (14.0 / 3.0))


def test_reference_garnet_head():
    b0, g0 = reference_garnet_schedule(0.5).eval(0)
    assert b0 == pytest.approx(2300 / 8e5)
    assert g0 == pytest.approx(120 / np.sqrt(2e5))


def test_constant_eval():
    s = StepSchedule.constant(0.01, 0.1)
    assert s.eval(0) == (0.01, 0.1)
    assert s.eval(12345) == (0.01, 0.1)
    b, g = s.eval(np.arange(5))
    assert np.all(b == 0.01) and np.all(g == 0.1)


def test_symmetric_polynomial():
    s = StepSchedule.polynomial(3.0, 10.0, 3.0, 10.0, 1.0)
    b, g = s.eval(np.arange(1000))
    assert np.array_equal(b, g)


def test_piecewise_eval():
    s = StepSchedule.piecewise([10, 20], [0.3, 0.2, 0.1], [0.6, 0.5, 0.4])
    assert s.eval(9) == (0.3, 0.6)
    assert s.eval(10) == (0.2, 0.5)
    assert s.eval(25) == (0.1, 0.4)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        StepSchedule.polynomial(1.0, 1.0, 1.0, 1.0, 0.4)
    with pytest.raises(ConfigError):
        StepSchedule.constant(0.0, 1.0)
    with pytest.raises(ConfigError):
        StepSchedule.piecewise([5], [0.1], [0.1])
    with pytest.raises(ConfigError):
        StepSchedule.from_dict({"beta": 0.1})


def test_dict_round_trip():
    for s in (reference_toy_schedule(), StepSchedule.constant(0.1, 0.2),
              StepSchedule.piecewise([3], [0.2, 0.1], [0.4, 0.3])):
        assert StepSchedule.from_dict(s.to_dict()) == s


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 100), st.floats(1, 1e4), st.floats(0.1, 100), st.floats(1, 1e4),
       st.floats(0.5, 1.0))
def test_polynomial_nonincreasing(cb, kb, cg, kg, sigma):
    s = StepSchedule.polynomial(cb, kb, cg, kg, sigma)
    b, g = s.eval(np.arange(0, 10**5, 97))
    assert np.all(np.diff(b) <= 0) and np.all(np.diff(g) <= 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 100), st.floats(1, 1e4), st.floats(0.1, 100), st.floats(1, 1e4),
       st.floats(0.5, 1.0))
def test_sup_ratio_dominates_scan(cb, kb, cg, kg, sigma):
    s = StepSchedule.polynomial(cb, kb, cg, kg, sigma)
    b, g = s.eval(np.arange(2 * 10**5))
    assert np.max(b / g) <= s.sup_ratio(2 * 10**5) * (1 + 1e-12)


def test_gamma_ratio_bound():
    s = reference_toy_schedule()
    k = np.arange(1, 10**5)
    _, g_prev = s.eval(k - 1)
    _, g = s.eval(k)
    assert np.all(g_prev / g <= 1 + s.sigma / (s.k0_gamma + k - 1) + 1e-15)


# ---- caps --------------------------------------------------------------------------

def test_caps_scalar_classic_rule():
    sys = scalar_uncoupled()
    c22, cd = make_certificate(sys.A22, rule="classic"), make_certificate(sys.delta, rule="classic")
    caps = stepsize_caps(sys, c22, cd)
    assert caps.gamma0 == pytest.approx(2.0)
    assert caps.beta0 == pytest.approx(0.25)
    assert caps.kappa == pytest.approx(0.25)


def test_caps_kappa_branch(toy):
    _, c22, cd, caps = toy
    assert caps.kappa <= c22.a / (4 * cd.a) * (1 + 1e-15)
    assert caps.gamma0 > 0 and caps.beta0 > 0 and caps.kappa > 0


# ---- validate ------------------------------------------------------------------------

def test_constant_admissible(toy):
    sys, c22, cd, caps = toy
    g = 0.9 * caps.gamma0
    b = 0.9 * min(caps.beta0, caps.kappa * g)
    cert = validate(StepSchedule.constant(b, g), c22, cd, 1000, caps=caps)
    assert cert.admissible and cert.k_pass == 0 and cert.a2_ok_horizon == "all"
    assert cert.varsigma == pytest.approx(1 + max(g * c22.a / 8, b * cd.a / 16))
    b1, g1 = StepSchedule.constant(b, g).eval(np.arange(5))
    assert np.all(b1[:-1] / b1[1:] == 1.0)


def test_increasing_rejected(toy):
    _, c22, cd, caps = toy
    levels = [0.01 * (1 + k) for k in range(10)]
    s = StepSchedule.piecewise(list(range(1, 10)), levels, levels)
    cert = validate(s, c22, cd, 20, caps=caps)
    assert not cert.monotone and not cert.admissible


def test_reference_toy_schedule_k_pass(toy):
    _, c22, cd, caps = toy
    cert = validate(reference_toy_schedule(), c22, cd, 10**5, caps=caps)
    c1, c2, c3 = a2_ratio_checks(reference_toy_schedule(), c22.a, cd.a, np.arange(10**5))
    ok = c1 & c2 & c3
    if cert.k_pass < 10**5:
        assert ok[cert.k_pass:].all()
    if cert.k_pass > 0:
        assert not ok[cert.k_pass - 1]
    assert cert.kappa == pytest.approx(reference_toy_schedule().sup_ratio(10**5))


def test_rho0(toy):
    _, c22, cd, caps = toy
    s = reference_toy_schedule()
    cert = validate(s, c22, cd, 1000, caps=caps)
    b, g = s.eval(np.arange(1001))
    assert np.all(g[:-1] ** 2 <= cert.rho0 * b[1:] * (1 + 1e-12))


def test_admissible_recheck_random_points(toy):
    sys, c22, cd, caps = toy
    for sigma in (0.5, 2.0 / 3.0, 0.75):
        s = admissible_polynomial(c22, cd, caps, sigma)
        cert = validate(s, c22, cd, 10**4, caps=caps)
        assert cert.admissible
        rng = np.random.default_rng(0)
        ks = rng.integers(0, 10**4, 100)
        for c in a2_ratio_checks(s, c22.a, cd.a, ks):
            assert c.all()
        b, g = s.eval(ks)
        assert np.all(b / g <= caps.kappa) and np.all(b <= caps.beta0) and np.all(g <= caps.gamma0)


def test_validate_needs_caps_or_system(toy):
    _, c22, cd, _ = toy
    with pytest.raises(ConfigError):
        validate(reference_toy_schedule(), c22, cd, 10)
    with pytest.raises(ConfigError):
        validate(reference_toy_schedule(), c22, cd, 0, caps=toy[3])
