import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhcavity.dynamics import DriveParams, Spectrum, transmission_curve, transmission_spectrum
from nhcavity.nonhermitian import SystemParams, eigenvalues
from nhcavity.specfit import (FitError, SingularNormalEquations, fit_lorentzian, fit_rabi,
                              least_squares, lorentzian, rabi_model)
from nhcavity.specfit import eigenpair_from_fit, rabi_initial_guess

from conftest import FIG_S4, GAMMA, spectrum_grid


def rosenbrock(_, q):
    return np.array([10 * (q[1] - q[0] ** 2), 1 - q[0]])


def test_linear_model_exact():
    x = np.arange(1.0, 6.0)
    res = least_squares(lambda x, q: q[0] * x, x, 2.5 * x, [1.0])
    assert res.params["p0"] == pytest.approx(2.5, abs=1e-12)
    assert res.iterations <= 3
    assert res.converged


def test_quadratic_stationarity():
    res = least_squares(lambda _, q: np.array([q[0] - 3, 2 * (q[1] + 1)]), [0, 1], [0, 0], [0.0, 0.0])
    assert res.gradient_norm < 1e-10
    assert res.values() == pytest.approx([3, -1], abs=1e-12)


def test_rosenbrock():
    res = least_squares(rosenbrock, [0, 1], [0, 0], (-1.2, 1.0))
    assert res.converged
    assert res.values() == pytest.approx([1, 1], abs=1e-6)


def test_rosenbrock_gradient_descent_oracle():
    # independent route: plain gradient descent on the same cost, run long
    q = np.array([-1.2, 1.0])
    for _ in range(200_000):
        r = rosenbrock(None, q)
        jac = np.array([[-20 * q[0], 10.0], [-1.0, 0.0]])
        q -= 2e-3 * jac.T @ r
    assert q == pytest.approx([1, 1], abs=1e-6)
    res = least_squares(rosenbrock, [0, 1], [0, 0], (-1.2, 1.0))
    assert res.values() == pytest.approx(q, abs=1e-6)


def test_history_never_increases():
    res = least_squares(rosenbrock, [0, 1], [0, 0], (-1.2, 1.0))
    assert np.all(np.diff(res.history) <= 0)
    assert res.history[-1] == res.residual_norm


def test_iteration_cap_returns_best_so_far():
    res = least_squares(rosenbrock, [0, 1], [0, 0], (-1.2, 1.0), max_iter=3)
    assert not res.converged
    assert res.iterations == 3
    assert res.residual_norm == min(res.history)


def test_dead_parameter_is_singular():
    with pytest.raises(SingularNormalEquations, match="p1"):
        least_squares(lambda x, q: q[0] * x, np.arange(5.0), np.arange(5.0), [0.5, 1.0])


def test_bounds_and_size_checks():
    x = np.arange(5.0)
    with pytest.raises(FitError):
        least_squares(lambda x, q: q[0] * x, x[:1], x[:1], [1.0, 2.0])
    with pytest.raises(ValueError):
        least_squares(lambda x, q: q[0] * x, x, x, [2.0], bounds=([0.0], [1.0]))
    res = least_squares(lambda x, q: q[0] * x, x, 3 * x, [0.5], bounds=([0.0], [1.0]))
    assert res.params["p0"] <= 1.0


def test_deterministic():
    a = least_squares(rosenbrock, [0, 1], [0, 0], (-1.2, 1.0))
    b = least_squares(rosenbrock, [0, 1], [0, 0], (-1.2, 1.0))
    assert a.to_json() == b.to_json()


def test_fit_json_fields():
    x = np.linspace(-1000, 1000, 201)
    res = fit_lorentzian(Spectrum(x, lorentzian(x, 1.0, 0.0, 245.0), "analytic"))
    doc = json.loads(res.to_json())
    assert set(doc) == {"model", "params", "errors", "residual_norm", "converged", "iterations"}
    assert doc["model"] == "lorentzian"


def test_lorentzian_noiseless_recovery():
    x = np.linspace(-1000, 1000, 201)
    res = fit_lorentzian(Spectrum(x, lorentzian(x, 1.0, 0.0, 245.0), "analytic"))
    q = res.params
    assert q["A"] == pytest.approx(1.0, rel=1e-6)
    assert abs(q["omega_c"]) < 1e-6 * 245
    assert q["kappa"] == pytest.approx(245.0, rel=1e-6)


def test_lorentzian_kappa_sign_normalized():
    x = np.linspace(-1000, 1000, 201)
    res = fit_lorentzian(Spectrum(x, lorentzian(x, 1.0, 10.0, 245.0), "analytic"), init=(0.8, 0.0, -200.0))
    assert res.params["kappa"] == pytest.approx(245.0, rel=1e-6)


def test_lorentzian_noisy_median_recovery():
    x = np.linspace(-1000, 1000, 201)
    clean = lorentzian(x, 1.0, 0.0, 245.0)
    kappas = []
    for seed in range(100):
        y = clean + np.random.default_rng(seed).normal(0, 0.01, x.size)
        kappas.append(fit_lorentzian(Spectrum(x, np.abs(y), "analytic")).params["kappa"])
    assert np.median(kappas) == pytest.approx(245.0, rel=0.01)


def test_lorentzian_rejects_degenerate_data():
    x = np.linspace(-10, 10, 21)
    with pytest.raises(FitError):
        fit_lorentzian(Spectrum(x, np.zeros_like(x), "analytic"))
    with pytest.raises(FitError):
        fit_lorentzian(Spectrum(x, np.full_like(x, 0.5), "analytic"))
    with pytest.raises(FitError):
        fit_lorentzian(Spectrum(x[:4], lorentzian(x[:4], 1, 0, 3), "analytic"))
    with pytest.raises(FitError):
        fit_lorentzian(Spectrum(x, lorentzian(x, 1, 0, 3), "analytic"), init=(1, 0, 50))


@pytest.mark.parametrize("kappa,g,delta_ca", FIG_S4)
def test_rabi_generator_recovery(kappa, g, delta_ca):
    x = spectrum_grid(kappa, g, delta_ca)
    spec = Spectrum(x, transmission_curve(x, GAMMA, kappa, g, delta_ca), "analytic")
    res, _ = fit_rabi(spec, GAMMA)
    assert res.converged
    assert res.params["kappa"] == pytest.approx(kappa, rel=1e-3)
    assert res.params["g"] == pytest.approx(g, rel=1e-3)
    assert res.params["delta_ca"] == pytest.approx(delta_ca, rel=1e-3, abs=1e-3)
    assert res.params["scale"] == pytest.approx(1.0, rel=1e-3)


def test_rabi_detuning_from_lindblad(fig_s4_spectra):
    res, _ = fit_rabi(fig_s4_spectra[(13.0, 5.0, 7.0)].lindblad, GAMMA)
    assert res.params["delta_ca"] == pytest.approx(7.0, rel=0.05)


def test_rabi_decoupled_limit():
    p = SystemParams.resonant(GAMMA, 13, 0.0)
    spec = transmission_spectrum(p, DriveParams(1.0, 0.0), np.linspace(-40, 40, 61), "lindblad")
    res, _ = fit_rabi(spec, GAMMA)
    assert res.params["g"] < 0.1 * GAMMA
    assert res.params["kappa"] == pytest.approx(13.0, rel=0.01)


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 300), st.floats(0.1, 150), st.floats(-100, 100), st.floats(0.5, 2))
def test_rabi_model_reflection_symmetry(kappa, g, delta_ca, scale):
    x = np.linspace(-300, 300, 31)
    f = rabi_model(GAMMA)
    y = f(x, (kappa, g, delta_ca, scale))
    assert np.array_equal(f(x, (kappa, -g, delta_ca, scale)), y)


def test_eigenpair_is_eigenvalues_of_fitted_params():
    x = spectrum_grid(133.0, 65.0, 50.0)
    res, pair = fit_rabi(Spectrum(x, transmission_curve(x, GAMMA, 133, 65, 50), "analytic"), GAMMA)
    q = res.params
    assert pair == eigenvalues(SystemParams(-q["delta_ca"], 0.0, GAMMA, q["kappa"], q["g"]))
    assert eigenpair_from_fit(res, GAMMA) == pair


def test_rabi_initial_guess_reads_peaks():
    x = spectrum_grid(133.0, 65.0, -50.0)
    spec = Spectrum(x, transmission_curve(x, GAMMA, 133, 65, -50), "analytic")
    kappa0, g0, d0, scale0 = rabi_initial_guess(spec, GAMMA)
    assert d0 == pytest.approx(-50, rel=0.25)
    assert g0 == pytest.approx(65, rel=0.75)
    assert scale0 == 1.0
