"""Levenberg-Marquardt least squares and the two spectral line models.

``fit_lorentzian`` fits ``A kappa^2 / (kappa^2 + (w - w_c)^2)``; ``fit_rabi``
fits the single-excitation vacuum-Rabi transmission in terms of the physical
parameters ``(kappa, g, delta_ca, scale)`` with the atomic decay ``gamma``
held fixed, and returns the eigenvalues those parameters imply.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import Spectrum, transmission_curve
from .nonhermitian import EigenPair, SystemParams, eigenvalues
from .qops import SingularMatrixError, solve_linear

__all__ = [
    "FitResult",
    "FitError",
    "SingularNormalEquations",
    "least_squares",
    "lorentzian",
    "fit_lorentzian",
    "rabi_model",
    "fit_rabi",
]


class FitError(ValueError):
    """Data cannot be fitted (flat, degenerate or too short)."""


class SingularNormalEquations(FitError):
    """A parameter has no influence on the residuals."""


@dataclass
class FitResult:
    params: dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int
    param_errors: dict[str, float] | None = None
    gradient_norm: float = float("nan")
    message: str = ""
    model: str = ""
    history: list[float] = field(default_factory=list, repr=False)

    def values(self) -> np.ndarray:
        return np.array(list(self.params.values()))

    def to_json(self) -> str:
        doc = {
            "model": self.model,
            "params": self.params,
            "errors": self.param_errors,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        return json.dumps(doc, indent=2, sort_keys=False)


def _jacobian(fun, p, r0, lo, hi):
    jac = np.empty((r0.size, p.size))
    for j in range(p.size):
        h = max(1e-8, 1e-8 * abs(p[j]))
        if p[j] + h > hi[j]:
            h = -h
        q = p.copy()
        q[j] += h
        jac[:, j] = (fun(q) - r0) / h
    return jac


def least_squares(model: Callable[[np.ndarray, np.ndarray], np.ndarray], x, y, init,
                  bounds: tuple[Sequence[float], Sequence[float]] | None = None,
                  names: Sequence[str] | None = None, xtol: float = 1e-10,
                  gtol: float = 1e-10, max_iter: int = 500) -> FitResult:
    """Minimize ``sum((model(x, p) - y)**2)`` by damped Gauss-Newton.

    Marquardt scaling of the damping term, forward-difference Jacobian with
    step ``max(1e-8, 1e-8 |p_j|)``.  Stops when the relative parameter change
    of an accepted step drops below ``xtol``, when the gradient ``|J^T r|_inf``
    drops below ``gtol``, or after ``max_iter`` iterations (then
    ``converged`` is False and the best point so far is returned).

    ``history`` holds the cost after every accepted step; it is
    non-increasing by construction.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(init, dtype=float)
    n = p.size
    names = list(names) if names is not None else [f"p{k}" for k in range(n)]
    if len(names) != n:
        raise ValueError("names and init differ in length")
    if y.size < n:
        raise FitError(f"{y.size} data points cannot determine {n} parameters")
    lo = np.full(n, -np.inf) if bounds is None else np.asarray(bounds[0], dtype=float)
    hi = np.full(n, np.inf) if bounds is None else np.asarray(bounds[1], dtype=float)
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError("initial parameters violate the bounds")

    def fun(q):
        return np.asarray(model(x, q), dtype=float) - y

    r = fun(p)
    cost = float(r @ r)
    history = [cost]
    lam = None
    converged = False
    message = "maximum iterations reached"
    it = 0
    grad = np.full(n, np.inf)
    jac = None
    while it < max_iter:
        it += 1
        if jac is None:
            jac = _jacobian(fun, p, r, lo, hi)
            grad = jac.T @ r
            dead = np.flatnonzero(np.all(jac == 0, axis=0))
            if dead.size:
                raise SingularNormalEquations(
                    "normal equations are singular: no sensitivity to "
                    + ", ".join(names[k] for k in dead)
                )
            if np.max(np.abs(grad)) < gtol:
                converged, message = True, "gradient below tolerance"
                break
            jtj = jac.T @ jac
            diag = np.maximum(np.diag(jtj), 1e-12 * np.max(np.diag(jtj)))
            if lam is None:
                lam = 1e-6
        try:
            step = solve_linear(jtj + lam * np.diag(diag), -grad).real
        except SingularMatrixError:
            # nearly dependent columns: more damping regularizes the system
            lam *= 10.0
            if lam > 1e16:
                raise SingularNormalEquations(
                    "normal equations stay singular under maximal damping") from None
            continue
        trial = np.clip(p + step, lo, hi)
        r_trial = fun(trial)
        cost_trial = float(r_trial @ r_trial)
        if np.isfinite(cost_trial) and cost_trial < cost:
            moved = np.linalg.norm(trial - p)
            p, r, cost = trial, r_trial, cost_trial
            history.append(cost)
            lam = max(lam / 10.0, 1e-15)
            jac = None
            if moved <= xtol * (np.linalg.norm(p) + xtol):
                grad = _jacobian(fun, p, r, lo, hi).T @ r
                converged, message = True, "relative parameter change below tolerance"
                break
        else:
            lam *= 10.0
            if lam > 1e16:
                message = "damping diverged without reducing the residual"
                break
    else:
        if jac is None:
            grad = _jacobian(fun, p, r, lo, hi).T @ r

    errors = None
    jac_final = _jacobian(fun, p, r, lo, hi)
    dof = y.size - n
    if dof > 0:
        try:
            cov = np.linalg.inv(jac_final.T @ jac_final) * (cost / dof)
            errors = {nm: float(math.sqrt(max(cov[k, k], 0.0))) for k, nm in enumerate(names)}
        except np.linalg.LinAlgError:
            errors = None
    return FitResult(
        params={nm: float(v) for nm, v in zip(names, p)},
        residual_norm=cost,
        converged=converged,
        iterations=it,
        param_errors=errors,
        gradient_norm=float(np.max(np.abs(grad))),
        message=message,
        history=history,
    )


# -- Lorentzian --------------------------------------------------------------

def lorentzian(w, amplitude, omega_c, kappa):
    w = np.asarray(w, dtype=float)
    return amplitude * kappa**2 / (kappa**2 + (w - omega_c) ** 2)


def _half_width(x: np.ndarray, y: np.ndarray, k_peak: int, side: int) -> float:
    """Distance from ``x[k_peak]`` to the half-maximum crossing on one side (-1 or +1)."""
    half = 0.5 * y[k_peak]
    k = k_peak
    while 0 < k < y.size - 1 and y[k] > half:
        k += side
    if y[k] > half or k == k_peak:
        return float("nan")
    # linear interpolation between the bracketing samples
    x0, x1, y0, y1 = x[k - side], x[k], y[k - side], y[k]
    xc = x0 + (half - y0) * (x1 - x0) / (y1 - y0)
    return abs(xc - x[k_peak])


def _hwhm(x: np.ndarray, y: np.ndarray, k_peak: int) -> float:
    widths = [w for w in (_half_width(x, y, k_peak, -1), _half_width(x, y, k_peak, 1))
              if np.isfinite(w)]
    return float(np.mean(widths)) if widths else float(np.mean(np.diff(x)))


def _check_fittable(spectrum: Spectrum, n_min: int):
    y = spectrum.transmission
    if len(spectrum) < n_min:
        raise FitError(f"need at least {n_min} points, got {len(spectrum)}")
    if np.var(y) <= 1e-12 * np.mean(y) ** 2 or np.max(np.abs(y)) == 0:
        raise FitError("spectrum is flat; nothing to fit")


def fit_lorentzian(spectrum: Spectrum, init: Sequence[float] | None = None) -> FitResult:
    """Fit ``(A, omega_c, kappa)``; ``kappa`` is returned positive."""
    _check_fittable(spectrum, 5)
    x, y = spectrum.delta_pc, spectrum.transmission
    if init is None:
        k = int(np.argmax(y))
        init = (y[k], x[k], _hwhm(x, y, k))
    kappa0 = float(init[2])
    if (x[-1] - x[0]) <= abs(kappa0):
        raise FitError("spectrum spans less than one linewidth")
    res = least_squares(lambda w, q: lorentzian(w, *q), x, y, init,
                        names=("A", "omega_c", "kappa"))
    res.params["kappa"] = abs(res.params["kappa"])
    res.model = "lorentzian"
    return res


# -- vacuum Rabi -------------------------------------------------------------

RABI_NAMES = ("kappa", "g", "delta_ca", "scale")


def rabi_model(gamma: float):
    """Model callable ``f(delta_pc, (kappa, g, delta_ca, scale))``."""
    def f(x, q):
        kappa, g, delta_ca, scale = q
        return scale * transmission_curve(x, gamma, kappa, g, delta_ca)
    return f


def _local_maxima(y: np.ndarray) -> list[int]:
    idx = [k for k in range(1, y.size - 1) if y[k] >= y[k - 1] and y[k] > y[k + 1]]
    return sorted(idx, key=lambda k: -y[k])


def rabi_initial_guess(spectrum: Spectrum, gamma: float) -> tuple[float, float, float, float]:
    """Initialization from peak positions and widths.

    Two resolved maxima at ``x1 < x2`` are read as the real parts of the two
    eigenvalues and their outer half widths as the imaginary parts, so
    ``delta_ca = -(x1 + x2)`` and ``kappa = w1 + w2 - gamma``.  ``g`` then
    follows from ``s^2 = h^2 + g^2`` with ``Re s = (x2 - x1) / 2`` and
    ``h = (delta_ca - i (kappa - gamma)) / 2``.  A single feature is treated
    as a merged doublet near the EP: ``kappa`` from its half width,
    ``g = (kappa - gamma) / 2``.
    """
    x, y = spectrum.delta_pc, spectrum.transmission
    peaks = _local_maxima(y)
    if not peaks:
        peaks = [int(np.argmax(y))]
    top = peaks[0]
    if len(peaks) > 1 and y[peaks[1]] > 0.1 * y[top]:
        k1, k2 = sorted(peaks[:2])
        widths = [_half_width(x, y, k1, -1), _half_width(x, y, k2, 1)]
        widths = [w if np.isfinite(w) else _hwhm(x, y, k) for w, k in zip(widths, (k1, k2))]
        kappa0 = max(sum(widths) - gamma, 0.1 * gamma)
        d0 = -(x[k1] + x[k2])
        sr = 0.5 * (x[k2] - x[k1])
        si = -d0 * (kappa0 - gamma) / (4 * sr)
        g_sq = sr**2 - si**2 - 0.25 * (d0**2 - (kappa0 - gamma) ** 2)
        g0 = math.sqrt(g_sq) if g_sq > 0 else max(0.5 * abs(kappa0 - gamma), sr)
    else:
        width = _hwhm(x, y, top)
        kappa0 = max(width, gamma)
        g0 = max(0.5 * abs(kappa0 - gamma), 0.05 * kappa0)
        d0 = -2.0 * x[top]
    return (float(kappa0), float(g0), float(d0), 1.0)


def fit_rabi(spectrum: Spectrum, gamma_fixed: float, init: Sequence[float] | None = None
             ) -> tuple[FitResult, EigenPair]:
    """Fit ``(kappa, g, delta_ca, scale)`` and return the implied eigenvalues.

    The eigenvalues are those of the cavity-referenced Hamiltonian
    (``omega_c = 0``, ``omega_a = -delta_ca``), i.e. on the same frequency
    axis as ``delta_pc``.
    """
    _check_fittable(spectrum, 5)
    if init is None:
        init = rabi_initial_guess(spectrum, gamma_fixed)
    res = least_squares(rabi_model(gamma_fixed), spectrum.delta_pc, spectrum.transmission,
                        init, names=RABI_NAMES)
    res.params["g"] = abs(res.params["g"])
    res.params["kappa"] = abs(res.params["kappa"])
    res.model = "rabi"
    return res, eigenpair_from_fit(res, gamma_fixed)


def eigenpair_from_fit(res: FitResult, gamma: float) -> EigenPair:
    q = res.params
    p = SystemParams(-q["delta_ca"], 0.0, gamma, q["kappa"], q["g"])
    return eigenvalues(p)
