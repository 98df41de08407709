import math

import numpy as np
import pytest

from gaussfi import (
    DimensionError,
    GaussianState,
    PreconditionError,
    build_strategy,
    fi_gaussian,
    gaussian_loglike,
    heterodyne,
    homodyne,
    load_model_config,
    loglike_squeezing_global,
    loss_thermal_model,
    measurement_from_squeeze_angle,
    mle_estimate,
    monte_carlo_mse,
    observed_information,
    outcome_moments,
    sample_outcomes,
    score_squeezing_global,
    squeeze_channel,
    squeeze_coherent_model,
    vacuum,
    write_summary_json,
    write_trials_csv,
)

ALPHA = math.sqrt(2.0)


def test_vacuum_heterodyne_covariance():
    batch = sample_outcomes(vacuum(), heterodyne(), 100_000, seed=1)
    cov = np.cov(batch.x.T)
    # sample variance has relative standard error sqrt(2/nu)
    band = 3 * 2 * math.sqrt(2 / 100_000)
    assert np.allclose(np.diag(cov), 2.0, atol=band)
    assert abs(cov[0, 1]) < 3 * 2 / math.sqrt(100_000)
    assert batch.nu == 100_000


def test_squeezed_homodyne_variance():
    state = squeeze_channel(vacuum(), 0.5)
    batch = sample_outcomes(state, homodyne(np.pi / 2), 100_000, seed=2)
    assert batch.x.shape == (100_000, 1)
    var = batch.x.var(ddof=1)
    assert var == pytest.approx(math.e, abs=3 * math.e * math.sqrt(2 / 100_000))


def test_sampler_deterministic():
    model = squeeze_coherent_model()
    a = sample_outcomes(model, heterodyne(), 50, seed=9)
    b = sample_outcomes(model, heterodyne(), 50, seed=9)
    assert np.array_equal(a.x, b.x)


def test_sampler_moments_converge():
    rng = np.random.default_rng(0)
    state = GaussianState(np.array([0.3, -1.1]), np.array([[2.0, 0.4], [0.4, 1.5]]))
    meas = measurement_from_squeeze_angle(0.4, 1.0)
    mean, cov = outcome_moments(state, meas)
    assert np.allclose(mean, math.sqrt(2) * state.d)
    assert np.allclose(cov, state.sigma + meas.sigma_m)
    errors = []
    for nu in (1_000, 10_000, 100_000):
        x = sample_outcomes(state, meas, nu, seed=int(rng.integers(1 << 30))).x
        err = np.abs(x.mean(axis=0) - mean).max() + np.abs(np.cov(x.T) - cov).max()
        errors.append(err * math.sqrt(nu))
    # error shrinks like 1/sqrt(nu): the rescaled error stays bounded
    assert max(errors) < 20 * np.sqrt(np.abs(cov).max())


def test_loglike_reductions():
    x = np.array([[0.3], [-0.2], [1.1]])
    nu = 3
    r = 0.0
    expected = -np.sum((0.0 - x[:, 0]) ** 2) / 2 - 0.5 * nu * math.log(2)
    assert loglike_squeezing_global(x, r, ALPHA, 1) == pytest.approx(expected)
    with pytest.raises(DimensionError):
        loglike_squeezing_global(x, 0.1, ALPHA, 2)


def test_loglike_matches_generic_gaussian():
    design = squeeze_coherent_model()
    strat = build_strategy(design, "global", 3)
    batch = sample_outcomes(strat.state(design, 0.1), strat.measurement, 40, seed=3)
    diffs = []
    for r in (-0.3, 0.0, 0.25):
        mean, cov = outcome_moments(strat.state(design, r), strat.measurement)
        diffs.append(gaussian_loglike(batch.x, mean, cov) - loglike_squeezing_global(batch.x, r, ALPHA, 3))
    # the closed form drops only r-independent terms
    assert np.ptp(diffs) < 1e-9


@pytest.mark.parametrize("m", [1, 2, 5])
def test_score_matches_finite_difference(m):
    rng = np.random.default_rng(m)
    x = rng.normal(size=(20, m))
    for r in (-0.4, 0.1, 0.7):
        h = 1e-5
        fd = (loglike_squeezing_global(x, r + h, ALPHA, m) - loglike_squeezing_global(x, r - h, ALPHA, m)) / (2 * h)
        assert score_squeezing_global(x, r, ALPHA, m) == pytest.approx(fd, rel=1e-6)


def test_loglike_vectorized():
    x = np.random.default_rng(1).normal(size=(10, 2))
    rs = np.linspace(-0.5, 0.5, 7)
    vec = loglike_squeezing_global(x, rs, ALPHA, 2)
    assert np.allclose(vec, [loglike_squeezing_global(x, r, ALPHA, 2) for r in rs])


def test_mle_large_sample_near_truth():
    design = squeeze_coherent_model()
    strat = build_strategy(design, "global", 2)
    nu = 10_000
    batch = sample_outcomes(strat.state(design, 0.1), strat.measurement, nu, seed=5)
    est = mle_estimate(lambda r: loglike_squeezing_global(batch.x, r, ALPHA, 2), vectorized=True)
    fisher = strat.fisher(design, 0.1)
    assert abs(est.value - 0.1) < 3 / math.sqrt(nu * fisher)
    assert not est.at_boundary


def test_mle_at_zero_squeezing():
    design = squeeze_coherent_model()
    strat = build_strategy(design, "global", 2)
    nu = 5_000
    batch = sample_outcomes(strat.state(design, 0.0), strat.measurement, nu, seed=6)
    est = mle_estimate(lambda r: loglike_squeezing_global(batch.x, r, ALPHA, 2), vectorized=True)
    assert abs(est.value) < 3 / math.sqrt(nu * 18.0)
    again = mle_estimate(lambda r: loglike_squeezing_global(batch.x, r, ALPHA, 2), vectorized=True)
    assert est == again


def test_mle_symmetric_batch_estimates_zero():
    # the exact r = 0 optimum for data whose sufficient statistics match r = 0
    x = np.column_stack([np.ones(4), [1.0, -1.0, 1.0, -1.0]])
    est = mle_estimate(lambda r: loglike_squeezing_global(x, r, ALPHA, 2), vectorized=True)
    grid = np.linspace(-1, 1, 200_001)
    assert est.value == pytest.approx(grid[np.argmax(loglike_squeezing_global(x, grid, ALPHA, 2))], abs=1e-5)


def test_mle_boundary_flag():
    est = mle_estimate(lambda t: -((t - 5.0) ** 2), (-1.0, 1.0))
    assert est.at_boundary and est.value == pytest.approx(1.0, abs=1e-7)
    with pytest.raises(PreconditionError):
        mle_estimate(lambda t: 0.0, (1.0, 1.0))


def test_monte_carlo_deterministic_and_thread_invariant():
    cfg = load_model_config("squeeze-coherent")
    a = monte_carlo_mse(cfg, "global", 2, 5, 40, seed=3, theta_true=0.1, workers=1)
    b = monte_carlo_mse(cfg, "global", 2, 5, 40, seed=3, theta_true=0.1, workers=4)
    assert np.array_equal(a.estimates, b.estimates)
    assert a.mse == b.mse
    assert a.crb == pytest.approx(1 / (5 * a.fisher))
    assert a.qcrb == pytest.approx(1 / (5 * 2 * 10.0), rel=0.05)


def test_monte_carlo_mse_is_mean_square_error():
    cfg = load_model_config("squeeze-coherent")
    res = monte_carlo_mse(cfg, "local", 2, 4, 25, seed=1, theta_true=0.1)
    assert res.mse == pytest.approx(np.mean((res.estimates - 0.1) ** 2), rel=1e-14)
    assert res.trials == 25 and res.estimates.shape == (25,)


def test_monte_carlo_m5_tracks_crb():
    cfg = load_model_config("squeeze-coherent")
    res = monte_carlo_mse(cfg, "global", 5, 20, 1000, seed=11, theta_true=0.1)
    # at r = 0 the strategy reaches 4 alpha^2 m + 2 (m - 1)
    assert strat_fi_at_zero(5) == pytest.approx(4 * ALPHA**2 * 5 + 2 * 4, rel=1e-9)
    assert 0.8 < res.mse / res.crb < 1.25


def strat_fi_at_zero(m):
    design = squeeze_coherent_model()
    return build_strategy(design, "global", m).fisher(design, 0.0)


def test_generic_likelihood_path():
    cfg = load_model_config("loss-thermal", {"tau0": 0.6})
    res = monte_carlo_mse(cfg, "local", 1, 200, 60, seed=4, search_interval=(0.05, 0.999))
    assert res.fisher == pytest.approx(fi_gaussian(loss_thermal_model(tau0=0.6), build_strategy(cfg.build(), "local", 1).measurement).total)
    assert 0.5 < res.mse / res.crb < 2.0


@pytest.mark.parametrize(
    "model,meas",
    [
        (squeeze_coherent_model(), heterodyne()),
        (squeeze_coherent_model(), measurement_from_squeeze_angle(0.6, 1.1)),
        (loss_thermal_model(), heterodyne()),
        (loss_thermal_model(tau0=0.5), measurement_from_squeeze_angle(0.4, 2.0)),
    ],
)
def test_observed_information(model, meas):
    est, se = observed_information(model, meas, 100_000, seed=8)
    exact = fi_gaussian(model, meas).total
    assert abs(est - exact) < max(4 * se, 1e-12)


def test_output_files(tmp_path):
    cfg = load_model_config("squeeze-coherent")
    res = monte_carlo_mse(cfg, "global", 2, 3, 5, seed=2, theta_true=0.1)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trials_csv(res, p1)
    write_trials_csv(monte_carlo_mse(cfg, "global", 2, 3, 5, seed=2, theta_true=0.1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "trial_index,estimate,square_error" and len(lines) == 6
    js = tmp_path / "s.json"
    write_summary_json(res, js)
    import json

    data = json.loads(js.read_text())
    assert data["schema_version"] == 1
    assert {"nu", "m", "strategy", "mse", "crb", "qcrb", "trials", "seed"} <= set(data["runs"][0])
