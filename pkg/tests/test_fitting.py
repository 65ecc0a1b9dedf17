import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drivenlsd import fitting, tssil
from drivenlsd.errors import InsufficientDataError, ParameterError, WindowError


def samples_from(kind, params, omega, amplitude=1.0, noise=0.0, rng=None):
    rho = amplitude * fitting.shape(kind, omega, params)
    if noise:
        rho = rho * (1 + noise * rng.normal(size=omega.size))
    return np.column_stack([omega, rho, np.ones_like(omega)])


# --- extract_width ----------------------------------------------------------


def test_lorentzian_width():
    assert fitting.extract_width(lambda w: tssil.lorentzian(w, 2.0)) == pytest.approx(2.0, rel=1e-10)


def test_two_peak_width_uses_right_slope():
    d1, d2 = 4.0, 1.0
    f = lambda w: tssil.strong_contour_d(w, d1, d2)  # noqa: E731
    width = fitting.extract_width(f)
    peak = math.sqrt(d1**2 - d2**2) / 2
    assert peak == pytest.approx(1.9365, abs=1e-4)
    half = f(peak) / 2
    assert f(peak + width / 2) == pytest.approx(half, rel=1e-6)
    # the left slope is steeper toward the dip, so it is not what is measured
    assert f(peak - width / 2) != pytest.approx(half, rel=1e-3)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(1e-3, 1e3), amp=st.floats(1e-3, 1e3))
def test_width_dilation_covariance(s, amp):
    base = lambda w: tssil.strong_contour_d(w, 4.0, 1.0)  # noqa: E731
    ref = fitting.extract_width(base)
    scaled = fitting.extract_width(lambda w: amp * base(np.asarray(w) / s))
    assert scaled / s == pytest.approx(ref, rel=1e-8)


def test_window_without_crossing():
    with pytest.raises(WindowError):
        fitting.extract_width(lambda w: tssil.lorentzian(w, 100.0), window=1.0, grid_points=101)


def test_window_must_be_positive():
    with pytest.raises(ParameterError):
        fitting.extract_width(lambda w: tssil.lorentzian(w, 1.0), window=0.0)


# --- fit_contour ------------------------------------------------------------


def test_self_fit_lorentzian():
    omega = np.linspace(-10, 10, 201)
    fit = fitting.fit_contour(samples_from(fitting.LORENTZIAN, [2.0], omega), fitting.LORENTZIAN, [1.0])
    assert fit.converged
    assert fit.params[0] == pytest.approx(2.0, abs=1e-6)
    assert fit.amplitude == pytest.approx(1.0, abs=1e-6)
    assert fit.width == pytest.approx(2.0, abs=1e-6)
    assert fit.residual < 1e-6


def test_self_fit_strong():
    omega = np.linspace(-8, 8, 161)
    fit = fitting.fit_contour(samples_from(fitting.STRONG, [2.0, 1.0], omega, amplitude=3.0), fitting.STRONG, [1.5, 0.7])
    assert fit.params == pytest.approx((2.0, 1.0), rel=1e-5)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-5)


def test_self_fit_weak_orders_coefficients():
    omega = np.linspace(-5, 5, 101)
    fit = fitting.fit_contour(samples_from(fitting.WEAK, [1.8661, 0.1340], omega), fitting.WEAK, [0.2, 1.5])
    assert fit.params[0] >= fit.params[1]
    assert fit.params == pytest.approx((1.8661, 0.1340), rel=1e-5)
    assert fit.named_params == pytest.approx({"a1": 1.8661, "a2": 0.1340}, rel=1e-5)


def test_noisy_weak_recovery_over_seeds():
    omega = np.linspace(-3, 3, 201)
    true = np.array([1.8661, 0.1340])
    estimates = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        data = samples_from(fitting.WEAK, true, omega, noise=0.05, rng=rng)
        estimates.append(fitting.fit_contour(data, fitting.WEAK, [1.5, 0.2]).params)
    mean = np.mean(estimates, axis=0)
    assert np.all(np.abs(mean / true - 1) < 0.10)


def test_objective_not_worse_than_guess():
    rng = np.random.default_rng(1)
    omega = np.linspace(-6, 6, 121)
    data = samples_from(fitting.STRONG, [3.0, 1.0], omega, noise=0.1, rng=rng)
    guess = [2.0, 2.0]
    fit = fitting.fit_contour(data, fitting.STRONG, guess)
    f = fitting.shape(fitting.STRONG, omega, guess)
    amp = np.dot(data[:, 1], f) / np.dot(f, f)
    at_guess = np.sum((data[:, 1] - amp * f) ** 2) / np.sum(data[:, 1] ** 2)
    assert fit.objective <= at_guess


def test_count_weights_matter():
    omega = np.linspace(-4, 4, 81)
    rho = tssil.lorentzian(omega, 1.0)
    rho[40] *= 3  # outlier on the centre bin
    heavy = np.ones_like(omega)
    light = heavy.copy()
    light[40] = 1e-6
    w_heavy = fitting.fit_contour(np.column_stack([omega, rho, heavy]), fitting.LORENTZIAN, [1.0]).params[0]
    w_light = fitting.fit_contour(np.column_stack([omega, rho, light]), fitting.LORENTZIAN, [1.0]).params[0]
    assert w_light == pytest.approx(1.0, rel=1e-4)
    assert w_heavy < 0.9
    uniform = fitting.fit_contour(np.column_stack([omega, rho, light]), fitting.LORENTZIAN, [1.0], uniform_weights=True)
    assert uniform.params[0] == pytest.approx(w_heavy, rel=1e-6)


def test_peak_height_of_two_peak_fit():
    omega = np.linspace(-8, 8, 161)
    fit = fitting.fit_contour(samples_from(fitting.STRONG, [4.0, 1.0], omega), fitting.STRONG, [4.0, 1.0])
    peak = math.sqrt(15) / 2
    assert fit.peak_height() == pytest.approx(tssil.strong_contour_d(peak, 4.0, 1.0), rel=1e-6)
    assert fit(np.array([peak]))[0] == pytest.approx(fit.peak_height(), rel=1e-6)


def test_too_few_samples():
    data = np.column_stack([np.arange(7.0), np.ones(7), np.ones(7)])
    with pytest.raises(InsufficientDataError):
        fitting.fit_contour(data, fitting.LORENTZIAN, [1.0])


def test_zero_weight_samples_do_not_count():
    data = np.column_stack([np.arange(10.0), np.ones(10), np.r_[np.ones(5), np.zeros(5)]])
    with pytest.raises(InsufficientDataError):
        fitting.fit_contour(data, fitting.LORENTZIAN, [1.0])


@pytest.mark.parametrize("guess", [[0.0], [-1.0], [1.0, 2.0]])
def test_bad_guess(guess):
    omega = np.linspace(-5, 5, 21)
    with pytest.raises(ParameterError):
        fitting.fit_contour(samples_from(fitting.LORENTZIAN, [1.0], omega), fitting.LORENTZIAN, guess)


def test_unknown_kind():
    with pytest.raises(ParameterError):
        fitting.fit_contour(np.zeros((10, 3)), "gaussian", [1.0])


def test_bad_shape():
    with pytest.raises(ParameterError):
        fitting.fit_contour(np.zeros((10, 2)), fitting.LORENTZIAN, [1.0])


def test_fit_is_deterministic():
    rng = np.random.default_rng(3)
    omega = np.linspace(-5, 5, 101)
    data = samples_from(fitting.WEAK, [1.5, 0.4], omega, noise=0.05, rng=rng)
    a = fitting.fit_contour(data, fitting.WEAK, [1.0, 0.5])
    b = fitting.fit_contour(data, fitting.WEAK, [1.0, 0.5])
    assert a.params == b.params and a.amplitude == b.amplitude


# --- power laws -------------------------------------------------------------


def test_power_law_exact_linear():
    x = np.geomspace(0.1, 10, 7)
    c, e, r2 = fitting.fit_power_law(np.column_stack([x, 0.7 * x]))
    assert (c, e, r2) == pytest.approx((0.7, 1.0, 1.0), rel=1e-12)


def test_power_law_exact_ipr_form():
    x = np.geomspace(0.05, 0.5, 6)
    fit = fitting.fit_power_law(np.column_stack([x, 1.54 * x**1.18]))
    assert (fit.coefficient, fit.exponent, fit.r_squared) == pytest.approx((1.54, 1.18, 1.0), rel=1e-12)
    assert fit(2.0) == pytest.approx(1.54 * 2**1.18)


def test_power_law_noise_study():
    rng = np.random.default_rng(99)
    x = np.geomspace(1, 10, 20)
    exps = []
    for _ in range(100):
        y = 3.0 * x**2 * np.exp(0.1 * rng.normal(size=x.size))
        exps.append(fitting.fit_power_law(np.column_stack([x, y])).exponent)
    exps = np.array(exps)
    assert np.all(np.abs(exps - 2.0) < 0.15)


@pytest.mark.parametrize("pts", [[[1, 1], [2, 2]], [[1, 1], [2, 0], [3, 3]], [[-1, 1], [2, 2], [3, 3]]])
def test_power_law_domain(pts):
    with pytest.raises((InsufficientDataError, ParameterError)):
        fitting.fit_power_law(pts)


def test_proportional_fit():
    x = np.array([1.0, 2.0, 3.0])
    assert fitting.fit_proportional(x, 0.8 * x) == pytest.approx(0.8)
    with pytest.raises(InsufficientDataError):
        fitting.fit_proportional([], [])
