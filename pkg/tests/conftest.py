import numpy as np
import pytest

from nhcavity.dynamics import (DriveParams, SimConfig, Spectrum, analytic_transmission, expect,
                               mc_trajectories, steady_state_of)
from nhcavity.nonhermitian import SystemParams

GAMMA = 3.03
# (kappa, g, delta_ca) grid of the nine simulated vacuum-Rabi spectra
FIG_S4 = [(13.0, 5.0, d) for d in (-7.0, 0.0, 7.0)] + \
         [(133.0, 65.0, d) for d in (-50.0, 0.0, 50.0)] + \
         [(246.0, 121.5, d) for d in (-100.0, 0.0, 100.0)]

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trajectory runs taking tens of seconds")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def spectrum_grid(kappa, g, delta_ca, n=61):
    half = 1.5 * (g + kappa) + abs(delta_ca)
    return np.linspace(-half, half, n)


class SimulatedSpectrum:
    def __init__(self, p, lindblad, analytic, photon_numbers):
        self.p = p
        self.lindblad = lindblad
        self.analytic = analytic
        self.photon_numbers = photon_numbers


@pytest.fixture(scope="session")
def fig_s4_spectra():
    out = {}
    for kappa, g, dca in FIG_S4:
        p = SystemParams.resonant(GAMMA, kappa, g, delta_ca=dca)
        x = spectrum_grid(kappa, g, dca)
        t_sim, t_an, n_ph = [], [], []
        for delta in x:
            d = DriveParams.at_detuning(p, float(delta), epsilon=1.0)
            rho, ops = steady_state_of(p, d, n_fock=3)
            n = expect(ops.photon_number, rho).real
            n_ph.append(n)
            t_sim.append(max(n, 0.0) * kappa**2)
            t_an.append(analytic_transmission(p, d))
        out[(kappa, g, dca)] = SimulatedSpectrum(
            p, Spectrum(x, np.array(t_sim), "lindblad"), Spectrum(x, np.array(t_an), "analytic"),
            np.array(n_ph))
    return out


def _mc(kappa, g, n_traj, seed=0):
    p = SystemParams.resonant(GAMMA, kappa, g)
    d = DriveParams.at_detuning(p, 0.0, epsilon=1.0)
    res = mc_trajectories(p, d, SimConfig(n_trajectories=n_traj, seed=seed))
    rho, ops = steady_state_of(p, d)
    return res, expect(ops.photon_number, rho).real


@pytest.fixture(scope="session")
def mc_13_5():
    return _mc(13.0, 5.0, 500)


@pytest.fixture(scope="session")
def mc_13_5_double():
    return _mc(13.0, 5.0, 1000)


@pytest.fixture(scope="session")
def mc_133_65():
    return _mc(133.0, 65.0, 500)
