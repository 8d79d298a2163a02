import json

import numpy as np
import pytest

from pacbarrier.certificate import NeuralCertificate, linear_certificate
from pacbarrier.dynamics import (
    BoxRegion,
    RegionSpec,
    SystemModel,
    integrate,
    uniform_sample_times,
)
from pacbarrier.loss import make_grids
from pacbarrier.validation import (
    Prop1Status,
    check_proposition1,
    monte_carlo_validate,
    trajectory_stats,
    weakened_linear_case,
)


def test_calibration_rate_within_three_standard_errors():
    case = weakened_linear_case(horizon=2.0)
    assert case.probability == pytest.approx(0.375)
    n = 20_000
    rep = monte_carlo_validate(case.certificate, case.system, case.regions, case.grids, case.horizon,
                               case.sample_times, 0.5, 1.0, n_fresh=n, seed=11)
    se = np.sqrt(case.probability * (1 - case.probability) / n)
    assert abs(rep.psi_violation_rate - case.probability) <= 3 * se
    assert rep.unsafe_entry_rate == 0.0
    assert rep.state_conditions_hold


def test_calibration_probability_tracks_the_horizon():
    for horizon, p in [(1.0, 0.25), (5.0, 0.45)]:
        case = weakened_linear_case(horizon=horizon)
        assert case.probability == pytest.approx(p)
    with pytest.raises(ValueError):
        weakened_linear_case(horizon=0.5)


def test_gap_matches_closed_form_on_the_decay_example():
    # B = x - 1 along x(t) = x0 e^{-t}: dB/dt = -x(t) peaks at t = 0 for x0 < 0,
    # and the largest difference quotient is on the first sampling interval
    case = weakened_linear_case(horizon=2.0)
    x0 = np.array([[-0.8], [-0.3]])
    st = trajectory_stats(case.certificate, case.system, case.regions, x0, case.horizon, case.sample_times)
    dt = case.sample_times[1]
    expect_rate = -x0[:, 0]
    expect_slope = x0[:, 0] * (np.exp(-dt) - 1) / dt
    np.testing.assert_allclose(st.max_rate, expect_rate, rtol=1e-12)
    np.testing.assert_allclose(st.max_slope, expect_slope, rtol=1e-9)
    np.testing.assert_allclose(st.gaps, expect_rate - expect_slope, rtol=1e-7)


def test_zero_network_fails_validation():
    case = weakened_linear_case()
    zero = NeuralCertificate.zeros([1, 3, 1])
    rep = monte_carlo_validate(zero, case.system, case.regions, case.grids, case.horizon,
                               case.sample_times, 0.5, 1.0, n_fresh=200)
    assert not rep.state_conditions_hold
    assert rep.psi_violation_rate == 1.0 and not rep.passed
    assert rep.prop1_applicable == 0


def test_diverging_trajectories_count_as_violations():
    blowup = SystemModel("blowup", 1, lambda x: x * x)
    regions = RegionSpec(BoxRegion([-3.0], [3.0]), BoxRegion([1.5], [2.0]), BoxRegion([-3.0], [-2.5]))
    grids = make_grids(regions, 5)
    cert = linear_certificate([-1.0], 0.0)
    rep = monte_carlo_validate(cert, blowup, regions, grids, 2.0, uniform_sample_times(2.0, 11), 0.5, 1.0,
                               n_fresh=50)
    assert rep.diverged == 50
    assert rep.psi_violation_rate == 1.0 and not rep.passed


def test_safety_implication_statuses():
    case = weakened_linear_case(horizon=2.0)
    good = integrate(case.system, [0.5], case.horizon, 0.01)
    res = check_proposition1(case.certificate, case.system, good.times, good.states, case.grids, case.horizon)
    assert res.status == Prop1Status.HOLDS
    assert res.max_b < res.inf_unsafe
    bad = integrate(case.system, [-0.9], case.horizon, 0.01)
    res = check_proposition1(case.certificate, case.system, bad.times, bad.states, case.grids, case.horizon)
    assert res.status == Prop1Status.INAPPLICABLE
    zero = NeuralCertificate.zeros([1, 2, 1])
    res = check_proposition1(zero, case.system, good.times, good.states, case.grids, case.horizon)
    assert res.status == Prop1Status.INAPPLICABLE
    with pytest.raises(TypeError):
        bool(res)


def test_validation_counts_no_counterexamples_on_calibration_case():
    case = weakened_linear_case(horizon=3.0)
    rep = monte_carlo_validate(case.certificate, case.system, case.regions, case.grids, case.horizon,
                               case.sample_times, 1.0, 1.0, n_fresh=2000, seed=2)
    assert rep.prop1_applicable > 0 and rep.prop1_counterexamples == 0
    assert rep.prop1_applicable == round((1 - rep.psi_violation_rate) * 2000)


def test_report_serialises(tmp_path):
    case = weakened_linear_case()
    rep = monte_carlo_validate(case.certificate, case.system, case.regions, case.grids, case.horizon,
                               case.sample_times, 0.5, 1.0, n_fresh=10)
    rep.save(tmp_path / "v.json")
    doc = json.loads((tmp_path / "v.json").read_text())
    assert doc["pass"] == rep.passed and doc["n_fresh"] == 10
    with pytest.raises(ValueError):
        monte_carlo_validate(case.certificate, case.system, case.regions, case.grids, case.horizon,
                             case.sample_times, 0.5, 1.0, n_fresh=0)
