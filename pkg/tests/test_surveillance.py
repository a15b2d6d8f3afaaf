import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import poisson

from minar_cli import surveillance
from minar_cli.errors import DomainError
from minar_cli.estimation import FittedModel
from minar_cli.layout import ParameterLayout, pack
from minar_cli.likelihood import ConditionalPmf
from minar_cli.model import MultiCountSeries, simulate
from minar_cli.surveillance import (
    SurveillanceConfig,
    apply_rule,
    marginal_predictive_pmf,
    monitor,
    upper_bound,
    upper_bounds,
)


def frozen_fit(model) -> FittedModel:
    layout = ParameterLayout.for_model(model)
    theta = pack(model, layout)
    return FittedModel(
        model=model,
        theta=theta,
        se=np.full(theta.size, np.nan),
        loglik=0.0,
        converged=True,
        iterations=0,
        layout=layout,
    )


def test_upper_bound_matches_poisson_quantile(poisson_model):
    fit = frozen_fit(poisson_model)
    for alpha in (0.1, 0.05, 0.01):
        pmf = marginal_predictive_pmf(fit, [4, 4], 1)
        assert upper_bound(pmf, alpha) == int(poisson.ppf(1 - alpha, 3.0))


def test_upper_bound_is_smallest_quantile():
    pmf = ConditionalPmf(np.array([0.5, 0.3, 0.2]))
    assert upper_bound(pmf, 0.5) == 0
    assert upper_bound(pmf, 0.25) == 1
    assert upper_bound(pmf, 0.1) == 2


def test_upper_bound_monotone_in_alpha():
    rng = np.random.default_rng(8)
    for _ in range(2000):
        masses = rng.dirichlet(np.ones(int(rng.integers(1, 30))))
        pmf = ConditionalPmf(masses)
        a, b = np.sort(rng.uniform(0.001, 0.5, size=2))
        assert upper_bound(pmf, a) >= upper_bound(pmf, b)


def test_required_flags():
    assert SurveillanceConfig().required_flags(3) == 2
    assert SurveillanceConfig(rule_fraction=1.0).required_flags(3) == 3
    assert SurveillanceConfig(rule_fraction=1 / 3).required_flags(3) == 1
    assert SurveillanceConfig(rule_fraction=0.6).required_flags(5) == 3


def test_config_validation():
    with pytest.raises(ValidationError):
        SurveillanceConfig(alpha=0.0)
    with pytest.raises(ValidationError):
        SurveillanceConfig(rule_fraction=1.5)


def test_apply_rule():
    flags = np.array([[True, False, False], [True, True, False], [True, True, True]])
    assert apply_rule(flags, SurveillanceConfig()).tolist() == [False, True, True]
    assert apply_rule(flags, SurveillanceConfig(rule_fraction=1.0)).tolist() == [False, False, True]


def test_all_zero_data_raises_no_alarm(study_model):
    data = MultiCountSeries(np.zeros((10, 3), dtype=int))
    report = monitor(frozen_fit(study_model), data)
    assert report.alarm_times == []
    assert not report.flags.any()


def test_spike_triggers_alarm_at_its_time(study_model):
    counts = np.full((6, 3), 3)
    counts[3] = [30, 30, 2]
    report = monitor(frozen_fit(study_model), MultiCountSeries(counts, origin=150))
    assert report.alarm_times == [153]
    assert report.flags[2].tolist() == [True, True, False]
    assert list(report.times) == [151, 152, 153, 154, 155]


def test_conditioning_uses_observed_counts_after_alarm(study_model):
    counts = np.full((4, 3), 3)
    counts[1] = [30, 30, 30]
    report = monitor(frozen_fit(study_model), MultiCountSeries(counts))
    # bounds after the spike condition on the spike itself
    assert np.all(report.upper[1] > report.upper[0])


def test_rule_one_requires_every_series(study_model):
    counts = np.full((3, 3), 3)
    counts[1] = [30, 30, 2]
    data = MultiCountSeries(counts)
    assert monitor(frozen_fit(study_model), data, SurveillanceConfig(rule_fraction=1.0)).alarm_times == []
    assert monitor(frozen_fit(study_model), data).alarm_times == [2]


def test_smaller_alpha_flags_subset(study_model):
    rng = np.random.default_rng(1)
    data = MultiCountSeries(rng.poisson(4.0, size=(40, 3)))
    loose = monitor(frozen_fit(study_model), data, SurveillanceConfig(alpha=0.1))
    strict = monitor(frozen_fit(study_model), data, SurveillanceConfig(alpha=0.01))
    assert np.all(strict.upper >= loose.upper)
    assert np.all(loose.flags[strict.flags])


def test_dimension_mismatch(study_model):
    with pytest.raises(DomainError):
        monitor(frozen_fit(study_model), MultiCountSeries(np.zeros((5, 2), dtype=int)))
    with pytest.raises(DomainError):
        monitor(frozen_fit(study_model), MultiCountSeries(np.zeros((1, 3), dtype=int)))


def test_report_frame(study_model):
    report = monitor(frozen_fit(study_model), MultiCountSeries(np.ones((4, 3), dtype=int)))
    frame = report.to_frame()
    assert list(frame.columns) == [
        "t", "x1", "x2", "x3", "ub1", "ub2", "ub3", "flag1", "flag2", "flag3", "alarm",
    ]
    assert len(frame) == 3


def test_monitoring_in_overlapping_batches_matches_one_pass(study_model):
    data = simulate(study_model, 60, rng=9)
    fit = frozen_fit(study_model)
    whole = monitor(fit, data)
    # the second batch starts with the last row of the first as its conditioning row
    first = monitor(fit, data.take(0, 25))
    second = monitor(fit, data.take(24))
    np.testing.assert_array_equal(np.concatenate([first.times, second.times]), whole.times)
    np.testing.assert_array_equal(np.concatenate([first.upper, second.upper]), whole.upper)
    np.testing.assert_array_equal(np.concatenate([first.flags, second.flags]), whole.flags)
    np.testing.assert_array_equal(np.concatenate([first.alarms, second.alarms]), whole.alarms)


def test_pmf_tolerance_reaches_predictive_pmf(study_model, monkeypatch):
    seen = []
    original = surveillance.component_conditional_pmf

    def recording(*args, **kwargs):
        seen.append(kwargs["tol"])
        return original(*args, **kwargs)

    monkeypatch.setattr(surveillance, "component_conditional_pmf", recording)
    config = SurveillanceConfig(pmf_tolerance=1e-6)
    monitor(frozen_fit(study_model), MultiCountSeries(np.ones((3, 3), dtype=int)), config)
    assert len(seen) == 2 * 3
    assert set(seen) == {1e-6}


def test_pmf_tolerance_must_stay_below_alpha():
    assert SurveillanceConfig().pmf_tolerance == 1e-12
    with pytest.raises(ValidationError):
        SurveillanceConfig(alpha=0.01, pmf_tolerance=0.05)
    with pytest.raises(ValidationError):
        SurveillanceConfig(pmf_tolerance=0.0)


@pytest.mark.slow
def test_in_control_flag_rate_stays_below_alpha(study_model):
    data = simulate(study_model, 20_000, rng=2024)
    alphas = [0.1, 0.05, 0.01]
    bounds = upper_bounds(study_model, data, alphas)
    rates = (data.counts[1:][None, :, :] > bounds).mean(axis=1)
    for alpha, rate in zip(alphas, rates):
        # discrete bounds keep the per-series rate at or below alpha
        assert np.all(rate <= alpha)
        assert np.all(rate >= 0.3 * alpha)
