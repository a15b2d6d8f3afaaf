import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from minar_cli.config import STUDY_MODEL
from minar_cli.errors import DomainError
from minar_cli.evaluation import (
    ExperimentSpec,
    MetricsSummary,
    average_run_length,
    detection_rate,
    exceedance_probabilities,
    expected_outbreak_values,
    false_alarm_rate,
    run_experiment,
    run_replicate,
    simulate_maxima,
    summarize,
    table_report,
)
from minar_cli.model import MinarModel


def test_detection_rate():
    alarms = np.zeros((4, 10), dtype=bool)
    alarms[:, 3] = True
    assert detection_rate(alarms, 3) == 1.0
    alarms[0, 3] = False
    assert detection_rate(alarms, 3) == 0.75


def test_false_alarm_rate():
    alarms = np.zeros((2, 5), dtype=bool)
    assert false_alarm_rate(alarms, 2) == 0.0
    alarms[0, 2] = True
    assert false_alarm_rate(alarms, 2) == 0.0
    alarms[0, 0] = alarms[1, 4] = True
    assert false_alarm_rate(alarms, 2) == pytest.approx(2 / (2 * 4))


def test_average_run_length_censoring_and_minimum():
    flags = np.zeros((3, 10, 2), dtype=bool)
    arl, overall = average_run_length(flags, 5)
    assert arl.tolist() == [10.0, 10.0]
    assert overall == 10.0

    flags[:, 0, 1] = True
    arl, overall = average_run_length(flags, 5)
    assert arl.tolist() == [10.0, 0.0]
    assert overall == 0.0


def test_average_run_length_ignores_outbreak_flags():
    flags = np.zeros((2, 10, 1), dtype=bool)
    flags[:, 5, 0] = True
    flags[0, 7, 0] = True
    arl, overall = average_run_length(flags, 5)
    assert arl.tolist() == [(7 + 10) / 2]
    assert overall == arl.min()


def test_average_run_length_conditional_convention():
    flags = np.zeros((3, 10, 2), dtype=bool)
    flags[0, 2, 0] = True
    flags[1, 6, 0] = True
    censored, _ = average_run_length(flags, 5)
    assert censored.tolist() == [(2 + 6 + 10) / 3, 10.0]

    arl, overall = average_run_length(flags, 5, "conditional")
    assert arl[0] == 4.0
    assert math.isnan(arl[1])
    assert overall == 4.0

    _, overall = average_run_length(np.zeros((3, 10, 2), dtype=bool), 5, "conditional")
    assert math.isnan(overall)
    with pytest.raises(DomainError):
        average_run_length(flags, 5, "median")


def test_metrics_need_replicates():
    with pytest.raises(DomainError):
        detection_rate(np.zeros((0, 5), dtype=bool), 1)
    with pytest.raises(DomainError):
        false_alarm_rate(np.zeros((2, 5), dtype=bool), 5)


def test_expected_outbreak_values():
    model = MinarModel.from_dict(STUDY_MODEL)
    values = np.round(expected_outbreak_values(model, [5, 8, 10]), 1)
    assert values.tolist() == [[7.9, 8.7, 8.3], [10.9, 11.7, 11.3], [12.9, 13.7, 13.3]]


def test_spec_defaults_and_aliases(small_experiment):
    spec = ExperimentSpec.model_validate(small_experiment)
    assert spec.approaches == ["multivariate", "independent"]
    assert spec.monitoring_length == 20
    assert spec.outbreak_position == 9

    default = ExperimentSpec(model=STUDY_MODEL)
    assert default.monitoring_length == 50
    assert default.outbreak_position == 19


def test_spec_validation(small_experiment):
    for change in (
        {"outbreak_time": 80},
        {"outbreak_time": 101},
        {"setup_length": 99},
        {"alphas": [0.0]},
        {"kappas": []},
        {"approaches": ["bivariate"]},
        {"replicates": 0},
        {"arl_convention": "median"},
        {"model": {"A": [[0.9, 0.5], [0.5, 0.9]], "innovations": {"lambda": [1, 1]}}},
    ):
        with pytest.raises(ValidationError):
            ExperimentSpec.model_validate({**small_experiment, **change})


def test_run_replicate_is_deterministic(small_experiment):
    spec = ExperimentSpec.model_validate(small_experiment)
    first = run_replicate(spec, 0)
    second = run_replicate(spec, 0)
    assert [r.approach for r in first] == ["multivariate", "independent"]
    for a, b in zip(first, second):
        assert a.failed == b.failed
        if not a.failed:
            assert np.array_equal(a.flags, b.flags)
            assert np.array_equal(a.alarms, b.alarms)
            assert a.flags.shape == (2, 20, 3)
            assert a.alarms.shape == (2, 20)


def test_stricter_level_alarms_are_a_subset(small_experiment):
    spec = ExperimentSpec.model_validate(small_experiment)
    for result in run_replicate(spec, 1):
        if result.failed:
            continue
        loose, strict = result.alarms
        assert np.all(loose[strict])


def test_run_experiment_and_tables(small_experiment):
    spec = ExperimentSpec.model_validate(small_experiment)
    seen = []
    result = run_experiment(spec, workers=1, callback=seen.append)
    assert seen == [1, 2]
    assert len(result.results) == 2 * 2

    summaries = summarize(result)
    assert len(summaries) == 2 * 1 * 2
    for s in summaries:
        assert s.replicates + s.failed == 2
        if s.replicates:
            assert 0.0 <= s.detection_rate <= 1.0
            assert 0.0 <= s.false_alarm_rate <= 1.0
            assert s.overall_arl == min(s.arl)

    arl, rates = table_report(summaries, spec.n, spec.monitoring_length)
    assert list(arl.columns) == [
        "approach", "kappa", "alpha", "arl_1", "arl_2", "arl_3", "arl", "censored_at", "replicates", "failed",
    ]
    assert list(rates.columns) == ["approach", "kappa", "alpha", "dr", "far", "replicates", "failed"]
    assert len(arl) == len(rates) == 4

    log = result.alarm_log()
    assert list(log.columns[:6]) == ["approach", "kappa", "alpha", "replicate", "t", "alarm"]
    assert set(log["t"]) == set(range(81, 101))


def test_table_report_shapes():
    arl, rates = table_report([], 3, 50)
    assert arl.empty and rates.empty
    assert "arl_3" in arl.columns

    summary = MetricsSummary("multivariate", 5.0, 0.05, 10, 0, 0.5, 0.01, (20.0, 18.0, 25.0), 18.0)
    arl, rates = table_report([summary], 3, 50)
    assert len(arl) == 1
    assert rates.loc[0, "dr"] == pytest.approx(50.0)
    assert rates.loc[0, "far"] == pytest.approx(1.0)
    assert arl.loc[0, "censored_at"] == 50

    arl, _ = table_report([summary], 3, 50, "conditional")
    assert pd.isna(arl.loc[0, "censored_at"])


def test_exceedance_vanishes_for_huge_outbreaks(study_model):
    maxima = simulate_maxima(study_model, T=50, replicates=20, exclude_time=30, seed=1)
    assert maxima.shape == (20, 3)
    probabilities = exceedance_probabilities(study_model, [1000.0], maxima=maxima)
    assert probabilities.tolist() == [[0.0, 0.0, 0.0]]


@pytest.mark.slow
def test_exceedance_probabilities_at_desk_scale(study_model):
    probabilities = exceedance_probabilities(study_model, [5, 8, 10], replicates=2000, seed=2024)
    np.testing.assert_allclose(probabilities[0], [0.863, 0.938, 0.788], atol=0.03)
    np.testing.assert_allclose(probabilities[2], [0.006, 0.020, 0.006], atol=0.03)
    # exceedance falls with the outbreak size
    assert np.all(np.diff(probabilities, axis=0) <= 0)


# overall run lengths of the three-series study, 1000 replicates
PUBLISHED_ARL = {
    "multivariate": {
        5.0: {0.10: 13.1, 0.05: 17.9, 0.01: 21.7},
        8.0: {0.10: 12.6, 0.05: 18.1, 0.01: 22.4},
        10.0: {0.10: 13.0, 0.05: 18.1, 0.01: 23.3},
    },
    "independent": {
        5.0: {0.10: 10.3, 0.05: 15.1, 0.01: 21.6},
        8.0: {0.10: 10.3, 0.05: 15.0, 0.01: 21.0},
        10.0: {0.10: 10.1, 0.05: 14.1, 0.01: 19.5},
    },
}


@pytest.mark.slow
def test_detection_and_false_alarms_at_desk_scale():
    spec = ExperimentSpec(model=STUDY_MODEL, replicates=300)
    assert spec.alphas == [0.10, 0.05, 0.01]
    result = run_experiment(spec)
    summaries = {(s.approach, s.kappa, s.alpha): s for s in summarize(result)}
    conditional = {(s.approach, s.kappa, s.alpha): s for s in summarize(result, "conditional")}

    assert summaries[("multivariate", 10.0, 0.05)].detection_rate >= 0.98
    assert abs(summaries[("multivariate", 5.0, 0.01)].detection_rate - 0.551) <= 0.09
    for kappa in spec.kappas:
        for alpha in spec.alphas:
            multivariate = summaries[("multivariate", kappa, alpha)]
            independent = summaries[("independent", kappa, alpha)]
            assert multivariate.false_alarm_rate < independent.false_alarm_rate
            assert multivariate.overall_arl > independent.overall_arl

    for approach in spec.approaches:
        for kappa in spec.kappas:
            cells = [summaries[(approach, kappa, alpha)] for alpha in spec.alphas]
            # levels run from loose to strict
            assert all(a.detection_rate >= b.detection_rate for a, b in zip(cells, cells[1:]))
            assert all(a.false_alarm_rate >= b.false_alarm_rate for a, b in zip(cells, cells[1:]))
        for alpha in spec.alphas:
            rates = [summaries[(approach, kappa, alpha)].detection_rate for kappa in spec.kappas]
            # rates close to 1 may swap by a few replicates
            assert all(b >= a - 0.01 for a, b in zip(rates, rates[1:]))
            assert rates[-1] > rates[0]
            for kappa in spec.kappas:
                published = PUBLISHED_ARL[approach][kappa][alpha]
                assert abs(conditional[(approach, kappa, alpha)].overall_arl - published) <= 3.0
