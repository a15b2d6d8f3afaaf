import math

import numpy as np
import pytest

from minar_cli.errors import DataFormatError, DomainError
from minar_cli.estimation import (
    FitOptions,
    FittedModel,
    build_design,
    default_init,
    design_names,
    fit,
    standard_errors,
    with_design,
)
from minar_cli.layout import ParameterLayout, pack
from minar_cli.model import InnovationModel, MinarModel, MultiCountSeries, ThinningMatrix, simulate


def test_default_init_is_inside_the_parameter_space(study_model):
    data = simulate(study_model, 100, rng=1)
    theta = default_init(data, ParameterLayout(3, "full"))
    assert theta.size == 12
    assert np.all((theta[:9] > 0) & (theta[:9] < 1))
    assert np.all(theta[9:] >= 0.1)


def test_poisson_layout_recovers_sample_mean(poisson_model):
    data = simulate(poisson_model, 400, rng=3)
    result = fit(data, ParameterLayout(2, "none"))
    assert result.converged
    np.testing.assert_allclose(result.theta, data.counts[1:].mean(axis=0), rtol=1e-3)
    # Poisson information: se(lambda) = sqrt(lambda / (T - 1))
    np.testing.assert_allclose(result.se, np.sqrt(result.theta / (data.T - 1)), rtol=1e-2)


def test_full_fit_recovers_parameters(bivariate_model):
    data = simulate(bivariate_model, 1500, rng=17)
    layout = ParameterLayout(2, "full")
    result = fit(data, layout)
    truth = pack(bivariate_model, layout)
    assert result.converged
    assert result.se_available
    assert np.all(np.abs(result.theta - truth) <= 4.0 * result.se)
    assert result.names == layout.names()
    assert result.loglik >= fit(data, layout, init=truth, options=FitOptions(compute_se=False)).loglik - 1e-2


def test_diagonal_fit_has_six_parameters(study_model):
    data = simulate(study_model, 150, rng=4)
    result = fit(data, ParameterLayout(3, "diagonal"), options=FitOptions(compute_se=False))
    assert result.theta.size == 6
    assert result.model.A.is_diagonal()
    assert np.all(np.isnan(result.se))


def test_fit_is_deterministic(bivariate_model):
    data = simulate(bivariate_model, 120, rng=6)
    layout = ParameterLayout(2, "full")
    first = fit(data, layout)
    second = fit(data, layout)
    assert np.array_equal(first.theta, second.theta)
    assert np.array_equal(first.se, second.se, equal_nan=True)


def test_nelder_mead_agrees_with_quasi_newton(poisson_model):
    data = simulate(poisson_model, 200, rng=12)
    layout = ParameterLayout(2, "none")
    simplex = fit(data, layout, options=FitOptions(method="Nelder-Mead", compute_se=False))
    quasi_newton = fit(data, layout, options=FitOptions(compute_se=False))
    np.testing.assert_allclose(simplex.theta, quasi_newton.theta, rtol=1e-3)


def test_fit_input_checks(study_model):
    data = simulate(study_model, 20, rng=1)
    with pytest.raises(DomainError):
        fit(data.take(0, 1), ParameterLayout(3))
    with pytest.raises(DomainError):
        fit(data, ParameterLayout(2))
    with pytest.raises(DomainError):
        fit(data, ParameterLayout(3, "full", "regression", ("cos",)))


def test_standard_errors_skip_boundary_estimates(bivariate_model):
    data = simulate(bivariate_model, 300, rng=21)
    layout = ParameterLayout(2, "full")
    theta = np.array([0.0, 0.2, 0.1, 0.3, 1.5, 2.0])
    fitted = FittedModel(
        model=MinarModel(ThinningMatrix([[0.0, 0.2], [0.1, 0.3]]), InnovationModel.constant([1.5, 2.0])),
        theta=theta,
        se=np.full(6, np.nan),
        loglik=0.0,
        converged=True,
        iterations=0,
        layout=layout,
    )
    se = standard_errors(fitted, data)
    assert math.isnan(se[0])
    assert np.all(np.isfinite(se[1:]))


def test_fitted_model_document_round_trip(poisson_model):
    data = simulate(poisson_model, 100, rng=2)
    result = fit(data, ParameterLayout(2, "none"))
    document = result.to_dict()
    assert document["names"] == ["lambda_1", "lambda_2"]
    restored = FittedModel.from_dict(document)
    assert np.array_equal(restored.theta, result.theta)
    assert restored.model == result.model
    assert restored.converged == result.converged


def test_fitted_model_document_nan_se_written_as_null():
    layout = ParameterLayout(1, "none")
    fitted = FittedModel(
        model=MinarModel(ThinningMatrix.zeros(1), InnovationModel.constant([2.0])),
        theta=np.array([2.0]),
        se=np.array([np.nan]),
        loglik=-10.0,
        converged=False,
        iterations=3,
        layout=layout,
    )
    document = fitted.to_dict()
    assert document["se"] == [None]
    assert math.isnan(FittedModel.from_dict(document).se[0])


def test_fitted_model_document_errors():
    with pytest.raises(DataFormatError):
        FittedModel.from_dict({"theta": [1.0]})
    with pytest.raises(DataFormatError):
        FittedModel.from_dict({"theta": [1.0, 2.0], "loglik": 0, "converged": True,
                               "layout": {"n": 1, "structure": "none"}})


def test_build_design_columns():
    design = build_design([0, 61, 122], weekday=[1, 0, 1])
    assert design.shape == (3, 3)
    np.testing.assert_allclose(design[:, 0], [1, 0, 1])
    np.testing.assert_allclose(design[:, 1], [1.0, -1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(design[:, 2], [0.0, 0.0, 0.0], atol=1e-12)
    assert design_names(True) == ("weekday", "cos", "sin")


def test_build_design_checks():
    with pytest.raises(DomainError):
        build_design([1, 2], period=0)
    with pytest.raises(DomainError):
        build_design([1, 2], weekday=[1, 2])
    with pytest.raises(DomainError):
        build_design([1.5, 2])


def test_with_design_uses_time_labels():
    data = MultiCountSeries([[1, 2], [3, 4]], covariates=[[1.0], [0.0]], covariate_names=("weekday",), origin=122)
    designed = with_design(data, "weekday")
    assert designed.covariate_names == ("weekday", "cos", "sin")
    assert designed.covariates[0, 1] == pytest.approx(1.0)


@pytest.mark.slow
def test_regression_fit_recovers_seasonal_coefficients():
    beta = np.array([[0.3, 0.4, 0.3, -0.2], [0.6, -0.3, 0.2, 0.3]])
    model = MinarModel(
        ThinningMatrix([[0.3, 0.1], [0.2, 0.2]]),
        InnovationModel.regression(beta, design_names(True)),
    )
    T = 1500
    times = np.arange(1, T + 1)
    covariates = build_design(times, weekday=(times % 2 == 0).astype(float))
    data = simulate(model, T, covariates=covariates, rng=31)

    layout = ParameterLayout(2, "full", "regression", design_names(True))
    result = fit(data, layout)
    truth = pack(model, layout)
    assert result.converged
    within = np.abs(result.theta - truth) <= 3.0 * result.se
    assert within.mean() >= 0.9


@pytest.mark.slow
def test_diagonal_fit_never_beats_full_fit(study_model):
    options = FitOptions(compute_se=False)
    for seed in range(10):
        data = simulate(study_model, 150, rng=seed)
        full = fit(data, ParameterLayout(3, "full"), options=options)
        diagonal = fit(data, ParameterLayout(3, "diagonal"), options=options)
        assert full.loglik >= diagonal.loglik - 1e-4


@pytest.mark.slow
def test_study_model_recovered_within_three_standard_errors(study_model):
    layout = ParameterLayout(3, "full")
    truth = pack(study_model, layout)
    replicates = 100
    hits = np.zeros(truth.size)
    for seed in range(replicates):
        result = fit(simulate(study_model, 500, rng=1000 + seed), layout)
        if result.converged:
            # NaN standard errors count as misses
            hits += np.abs(result.theta - truth) <= 3.0 * result.se
    assert np.all(hits / replicates >= 0.9)


@pytest.mark.slow
def test_standard_errors_shrink_by_root_two_when_length_doubles(study_model):
    layout = ParameterLayout(3, "full")
    short = np.nanmean([fit(simulate(study_model, 500, rng=200 + s), layout).se for s in range(10)], axis=0)
    long = np.nanmean([fit(simulate(study_model, 1000, rng=300 + s), layout).se for s in range(10)], axis=0)
    ratio = short / long
    assert np.all((ratio >= 1.25) & (ratio <= 1.6))
