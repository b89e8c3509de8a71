import io
import json

import numpy as np
import pytest

from twoscale.errors import ConfigError, InsufficientPoints, NonPositiveValue
from twoscale.problems import random_toy_instance
from twoscale.report import (load_config, normalized_curves, parse_config, rate_fit, read_csv,
                             series_columns, series_from_columns, system_from_dict,
                             system_to_dict, write_csv)
from twoscale.schedules import StepSchedule, reference_toy_schedule
from twoscale.simulator import MomentSeries, run_ensemble


def test_rate_fit_exact_power_laws():
    k = np.unique(np.round(np.logspace(0, 5, 60)))
    for c, p in ((7.0, -1.0), (3.0, -2.0 / 3.0), (0.01, -0.5)):
        fit = rate_fit(k, c * k**p)
        assert abs(fit.slope - p) <= 1e-12
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.window[0] >= k[-1] / 10


def test_rate_fit_errors():
    k = np.arange(1, 100)
    with pytest.raises(InsufficientPoints):
        rate_fit(k, 1.0 / k, window=(1, 3))
    with pytest.raises(NonPositiveValue):
        rate_fit(k, -1.0 / k, window=(1, 99))


@pytest.fixture(scope="module")
def series():
    inst = random_toy_instance(3, 2)
    return run_ensemble(inst.system, reference_toy_schedule(), 500, 16, 1, noise=inst.noise)


def test_normalized_curves(series):
    s = StepSchedule.constant(0.01, 0.2)
    cols = normalized_curves(series, s)
    np.testing.assert_allclose(cols["m_theta_norm"], series.m_theta / 0.01)
    np.testing.assert_allclose(cols["m_track_norm"], series.m_track / 0.2)


def test_normalized_power_law_flat():
    s = reference_toy_schedule()
    ks = np.arange(1, 1000, 37)
    beta, _ = s.eval(ks)
    z = np.zeros(len(ks))
    ser = MomentSeries(ks, 5.0 * beta, z, z, z, z, z, 1, 0.0)
    np.testing.assert_allclose(normalized_curves(ser, s)["m_theta_norm"], 5.0, rtol=1e-14)


def test_csv_round_trip(series):
    buf = io.StringIO()
    write_csv(buf, series_columns(series))
    back = series_from_columns(read_csv(buf.getvalue()), series.replicas, series.V0)
    assert back.equals(series)


def test_system_document_round_trip():
    sys = random_toy_instance(4, 3).system
    doc = json.loads(json.dumps(system_to_dict(sys)))
    assert system_from_dict(doc).same_as(sys, atol=0.0)


BASE = {"problem": {"toy": {"d": 3, "seed": 1}},
        "schedule": {"kind": "constant", "beta": 0.001, "gamma": 0.01}, "K": 100}


def test_parse_defaults():
    cfg = parse_config(BASE, env={})
    assert cfg.regime == "martingale" and cfg.replicas == 100 and cfg.seed == 0
    assert cfg.checkpoints[-1] == 100
    again = parse_config(json.loads(json.dumps(cfg.to_dict())), env={})
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("patch", [
    {"problem": {"toy": {"d": 3, "seed": 1}, "garnet": {}}},
    {"problem": {"toy": {"d": 0, "seed": 1}}},
    {"problem": {"toy": {"d": 3}}},
    {"schedule": {"kind": "nope"}},
    {"K": 0},
    {"K": 2.5},
    {"replicas": 0},
    {"noise": {"regime": "markov"}},
    {"noise": {"regime": "other"}},
    {"checkpoints": [5, 200]},
    {"checkpoints": "all"},
    {"init": {"kind": "gauss"}},
    {"override_admissibility": "yes"},
    {"certificate_rule": "loose"},
])
def test_parse_rejects(patch):
    with pytest.raises(ConfigError):
        parse_config({**BASE, **patch}, env={})


def test_env_seed_override():
    assert parse_config({**BASE, "seed": 4}, env={"TWOSCALE_SEED": "9"}).seed == 9
    assert parse_config({**BASE, "seed": 4}, env={}).seed == 4
    with pytest.raises(ConfigError):
        parse_config(BASE, env={"TWOSCALE_SEED": "x"})


def test_load_config_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(p), env={})
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"), env={})
