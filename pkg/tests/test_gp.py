import numpy as np
import pytest

from gpds_ep.errors import DimensionMismatch
from gpds_ep.gp import (GPDSModel, GPHyper, TrainedGP, default_init,
                        fit_hyperparameters, kernel_se_ard,
                        log_marginal_likelihood, predict_point,
                        predict_points, train)
from gpds_ep.gaussians import Gaussian


def _toy_gp(noise_var=1e-8):
    X = np.linspace(-2.0, 2.0, 9)[:, None]
    Y = np.sin(X[:, 0])
    h = GPHyper(np.array([1.0]), 1.0, noise_var)
    return train(X, Y, [h]), X, Y


def test_kernel_diagonal_equals_signal_variance():
    h = GPHyper(np.array([0.7, 1.3]), 2.5, 0.1)
    x = np.array([0.4, -1.2])
    assert kernel_se_ard(x, x, h) == pytest.approx(2.5)


def test_kernel_decays_with_distance():
    h = GPHyper(np.array([1.0]), 1.0, 0.1)
    vals = [kernel_se_ard(np.zeros(1), np.array([d]), h)
            for d in (0.0, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # analytic value at distance 1 with unit lengthscale
    assert vals[2] == pytest.approx(np.exp(-0.5))


def test_interpolation_at_low_noise():
    gp, X, Y = _toy_gp(noise_var=1e-10)
    means, variances = predict_points(gp, X)
    assert np.max(np.abs(means[:, 0] - Y)) < 1e-6
    # predictive variance never drops below the noise floor
    assert np.all(variances >= 1e-10 - 1e-16)


def test_predictive_variance_grows_away_from_data():
    gp, _, _ = _toy_gp(noise_var=1e-6)
    _, v_in = predict_point(gp, np.array([0.0]))
    _, v_out = predict_point(gp, np.array([10.0]))
    assert v_out[0] > v_in[0]
    # far from data the prediction reverts to the prior variance plus noise
    assert v_out[0] == pytest.approx(1.0 + 1e-6, rel=1e-6)


def test_marginal_likelihood_gradient_matches_finite_differences():
    from gpds_ep.gp import _lml_and_grad

    rng = np.random.default_rng(3)
    X = rng.normal(size=(12, 2))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=12)
    theta = np.array([0.1, -0.2, 0.3, -1.0])
    _, grad = _lml_and_grad(theta, X, y)
    eps = 1e-6
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = eps
        hi, _ = _lml_and_grad(theta + e, X, y)
        lo, _ = _lml_and_grad(theta - e, X, y)
        fd = (hi - lo) / (2.0 * eps)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_fitting_improves_marginal_likelihood():
    rng = np.random.default_rng(5)
    X = rng.uniform(-3.0, 3.0, size=(40, 1))
    y = np.sin(1.5 * X[:, 0]) + 0.05 * rng.normal(size=40)
    init = [GPHyper(np.array([5.0]), 4.0, 1.0)]
    fitted = fit_hyperparameters(X, y, init, iters=100)
    before = log_marginal_likelihood(X, y, init[0])
    after = log_marginal_likelihood(X, y, fitted[0])
    assert after > before
    # the fitted noise variance should land near the true 0.05^2
    assert 1e-4 < fitted[0].noise_var < 0.05


def test_fit_zero_iters_returns_init():
    X = np.linspace(0, 1, 5)[:, None]
    y = X[:, 0]
    init = [GPHyper(np.array([2.0]), 1.0, 0.5)]
    assert fit_hyperparameters(X, y, init, iters=0) == init


def test_default_init_positive():
    X = np.zeros((6, 2))        # degenerate spread must not produce zeros
    Y = np.ones((6, 1))
    h = default_init(X, Y)[0]
    assert np.all(h.lengthscales > 0)
    assert h.signal_var > 0 and h.noise_var > 0


def test_hyper_rejects_nonpositive():
    with pytest.raises(ValueError):
        GPHyper(np.array([0.0]), 1.0, 0.1)
    with pytest.raises(ValueError):
        GPHyper(np.array([1.0]), -1.0, 0.1)
    with pytest.raises(ValueError):
        GPHyper(np.array([1.0]), 1.0, 0.0)


def test_trained_gp_shape_validation():
    h = GPHyper(np.array([1.0]), 1.0, 0.1)
    with pytest.raises(DimensionMismatch):
        train(np.zeros((3, 1)), np.zeros(4), [h])
    with pytest.raises(DimensionMismatch):
        train(np.zeros((3, 1)), np.zeros((3, 2)), [h])
    with pytest.raises(DimensionMismatch):
        train(np.zeros((3, 2)), np.zeros(3), [h])   # lengthscale count


def test_trained_gp_roundtrip():
    gp, _, _ = _toy_gp(noise_var=1e-4)
    back = TrainedGP.from_dict(gp.to_dict())
    xs = np.array([[0.3], [-1.7]])
    m0, v0 = predict_points(gp, xs)
    m1, v1 = predict_points(back, xs)
    np.testing.assert_allclose(m1, m0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(v1, v0, rtol=0, atol=1e-12)


def test_gpds_model_roundtrip_with_angle_dims(tmp_path):
    rng = np.random.default_rng(0)
    Xt = rng.normal(size=(8, 3))
    Yt = rng.normal(size=(8, 2))
    Xm = rng.normal(size=(8, 2))
    Ym = rng.normal(size=(8, 2))
    ht = [GPHyper(np.ones(3), 1.0, 0.1) for _ in range(2)]
    hm = [GPHyper(np.ones(2), 1.0, 0.1) for _ in range(2)]
    model = GPDSModel(train(Xt, Yt, ht), train(Xm, Ym, hm),
                      Gaussian(np.zeros(2), np.eye(2)), control_dim=1,
                      angle_state_dims=(0,), angle_obs_dims=(0, 1))
    path = tmp_path / "model.json"
    model.save(path)
    back = GPDSModel.load(path)
    assert back.angle_state_dims == (0,)
    assert back.angle_obs_dims == (0, 1)
    assert back.control_dim == 1
    np.testing.assert_allclose(back.transition.Y, model.transition.Y)
    np.testing.assert_allclose(back.prior.cov, model.prior.cov)


def test_gpds_model_rejects_bad_angle_dims():
    rng = np.random.default_rng(1)
    gp2 = train(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)),
                [GPHyper(np.ones(2), 1.0, 0.1) for _ in range(2)])
    prior = Gaussian(np.zeros(2), np.eye(2))
    with pytest.raises(DimensionMismatch):
        GPDSModel(gp2, gp2, prior, angle_state_dims=(2,))
    with pytest.raises(DimensionMismatch):
        GPDSModel(gp2, gp2, prior, angle_obs_dims=(-1,))
