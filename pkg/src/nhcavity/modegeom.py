"""Effective mode area of sampled fields and the peak atom-cavity coupling ``g0``.

All quantities are SI: metres, rad/s, C·m.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import constants as _const

__all__ = [
    "ScalarField2D",
    "PhysicalConstants",
    "ModeRegion",
    "CODATA",
    "effective_mode_area",
    "gaussian_field",
    "standing_wave_field",
    "standing_wave_area",
    "coupling_constant_g0",
    "read_field_csv",
    "field_from_config",
]


@dataclass(frozen=True)
class ScalarField2D:
    x_coords: np.ndarray
    y_coords: np.ndarray
    amplitudes: np.ndarray  # shape (len(y_coords), len(x_coords))

    def __post_init__(self):
        x = np.asarray(self.x_coords, dtype=float)
        y = np.asarray(self.y_coords, dtype=float)
        amp = np.asarray(self.amplitudes, dtype=complex)
        if x.ndim != 1 or y.ndim != 1 or x.size < 2 or y.size < 2:
            raise ValueError("coordinate grids need at least 2 points per axis")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise ValueError("coordinate grids must be strictly increasing")
        if amp.shape != (y.size, x.size):
            raise ValueError(f"amplitudes have shape {amp.shape}, grid is {(y.size, x.size)}")
        if not np.all(np.isfinite(amp)):
            raise ValueError("field contains non-finite samples")
        object.__setattr__(self, "x_coords", x)
        object.__setattr__(self, "y_coords", y)
        object.__setattr__(self, "amplitudes", amp)

    def scaled(self, factor: complex) -> "ScalarField2D":
        return ScalarField2D(self.x_coords, self.y_coords, self.amplitudes * factor)

    def dilated(self, s: float) -> "ScalarField2D":
        return ScalarField2D(self.x_coords * s, self.y_coords * s, self.amplitudes)


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float
    eps0: float
    c: float


CODATA = PhysicalConstants(hbar=_const.hbar, eps0=_const.epsilon_0, c=_const.c)


@dataclass(frozen=True)
class ModeRegion:
    a_eff: float
    rel_permittivity: float = 1.0

    def __post_init__(self):
        if not self.a_eff > 0:
            raise ValueError(f"a_eff must be positive, got {self.a_eff}")
        if not self.rel_permittivity >= 1:
            raise ValueError(f"rel_permittivity must be >= 1, got {self.rel_permittivity}")

    @classmethod
    def from_index(cls, a_eff: float, n: float) -> "ModeRegion":
        return cls(a_eff, n * n)


def _integrate(f: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.trapezoid(np.trapezoid(f, x, axis=1), y))


def effective_mode_area(field: ScalarField2D) -> float:
    """``(iint |E|^2)^2 / iint |E|^4`` by trapezoidal quadrature."""
    # normalizing first keeps |E|^4 clear of under/overflow
    peak = float(np.max(np.abs(field.amplitudes)))
    if peak == 0:
        raise ValueError("field is identically zero")
    inten = np.abs(field.amplitudes / peak) ** 2
    num = _integrate(inten, field.x_coords, field.y_coords)
    den = _integrate(inten**2, field.x_coords, field.y_coords)
    return num * num / den


def gaussian_field(waist: float, half_width: float | None = None, n: int = 401) -> ScalarField2D:
    """``exp(-(x^2 + y^2) / waist^2)`` on a square ``n x n`` grid, default extent +-6 waists."""
    half_width = 6.0 * waist if half_width is None else half_width
    x = np.linspace(-half_width, half_width, n)
    xx, yy = np.meshgrid(x, x)
    return ScalarField2D(x, x, np.exp(-(xx**2 + yy**2) / waist**2))


def standing_wave_field(length: float, waist: float, wavelength: float = 780e-9,
                        nx: int | None = None, ny: int = 401,
                        y_extent: float = 6.0) -> ScalarField2D:
    """``cos(2 pi x / wavelength) exp(-y^2 / waist^2)`` for ``0 <= x <= length``.

    The default ``x`` sampling uses 20 points per wavelength.
    """
    if nx is None:
        nx = int(math.ceil(20 * length / wavelength)) + 1
    x = np.linspace(0.0, length, nx)
    y = np.linspace(-y_extent * waist, y_extent * waist, ny)
    amp = np.cos(2 * np.pi * x / wavelength)[None, :] * np.exp(-(y**2) / waist**2)[:, None]
    return ScalarField2D(x, y, amp)


def standing_wave_area(length: float, waist: float) -> float:
    """Closed form ``(2 l / 3) sqrt(pi) w0`` for the standing wave over many periods."""
    return (2.0 * length / 3.0) * math.sqrt(math.pi) * waist


def coupling_constant_g0(omega0: float, regions: Sequence[ModeRegion], w0: float, d_ge: float,
                         constants: PhysicalConstants = CODATA) -> float:
    """Peak coupling ``g0 = d_ge sqrt(omega0 / (2 hbar sum_i(eps_i A_i) sqrt(pi) w0))`` in rad/s.

    ``eps_i = eps0 n_i^2`` is the absolute permittivity of region ``i``.
    """
    if not regions:
        raise ValueError("at least one mode region is required")
    for name, v in (("omega0", omega0), ("w0", w0), ("d_ge", d_ge)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    weighted = sum(constants.eps0 * r.rel_permittivity * r.a_eff for r in regions)
    return d_ge * math.sqrt(omega0 / (2.0 * constants.hbar * weighted * math.sqrt(math.pi) * w0))


def read_field_csv(path: str | Path) -> ScalarField2D:
    """Read ``x_m,y_m,re_amp,im_amp`` rows covering a full rectangular grid."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["x_m", "y_m", "re_amp", "im_amp"]:
            raise ValueError(f"{path}: expected header x_m,y_m,re_amp,im_amp, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if len(rows[-1]) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns")
    data = np.array(rows, dtype=float).reshape(-1, 4)
    xs, xi = np.unique(data[:, 0], return_inverse=True)
    ys, yi = np.unique(data[:, 1], return_inverse=True)
    if data.shape[0] != xs.size * ys.size:
        raise ValueError(f"{path}: {data.shape[0]} samples do not form a {ys.size}x{xs.size} grid")
    amp = np.full((ys.size, xs.size), np.nan, dtype=complex)
    amp[yi, xi] = data[:, 2] + 1j * data[:, 3]
    if np.any(np.isnan(amp)):
        raise ValueError(f"{path}: grid has duplicate or missing points")
    return ScalarField2D(xs, ys, amp)


def field_from_config(cfg: dict) -> ScalarField2D:
    """Build an analytic field from ``{"kind": "gaussian" | "standing_wave", ...}``."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    makers = {"gaussian": gaussian_field, "standing_wave": standing_wave_field}
    if kind not in makers:
        raise ValueError(f"field.kind must be one of {sorted(makers)}, got {kind!r}")
    try:
        return makers[kind](**cfg)
    except TypeError as exc:
        raise ValueError(f"field: {exc}") from None
