"""Eigenstructure of the 2x2 non-Hermitian atom-cavity Hamiltonian.

All frequencies and rates are stored in "2 pi MHz" units: a stored value
``nu`` stands for the angular frequency ``2 pi nu 10**6 rad/s``, so
``kappa = 246`` means ``kappa / (2 pi) = 246 MHz``.

The Hamiltonian in the ``{|e,0>, |g,1>}`` basis is::

    H = [[omega_a - i gamma, g              ],
         [g,                 omega_c - i kappa]]
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qops import _principal_sqrt, eig2

__all__ = [
    "SystemParams",
    "EigenPair",
    "SurfaceSample",
    "RiemannSurface",
    "ExceptionalPointError",
    "MatchingAmbiguityError",
    "eigenvalues",
    "ep_condition",
    "exceptional_line",
    "riemann_surface",
    "eigen_decomposition",
    "scaling_exponent",
]

log = logging.getLogger(__name__)

DEFECT_TOL = 1e-9


class ExceptionalPointError(ValueError):
    """The requested operation is undefined at (or too near) an EP."""


class MatchingAmbiguityError(RuntimeError):
    """Nearest-neighbour sheet matching could not decide between assignments."""


@dataclass(frozen=True)
class SystemParams:
    omega_a: float
    omega_c: float
    gamma: float
    kappa: float
    g: float

    def __post_init__(self):
        for name in ("omega_a", "omega_c", "gamma", "kappa", "g"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")

    @classmethod
    def resonant(cls, gamma: float, kappa: float, g: float, delta_ca: float = 0.0,
                 omega_a: float = 0.0) -> "SystemParams":
        """Parameters specified by the cavity-atom detuning instead of omega_c."""
        return cls(omega_a, omega_a + delta_ca, gamma, kappa, g)

    def replace(self, **changes) -> "SystemParams":
        if "delta_ca" in changes:
            changes["omega_c"] = changes.get("omega_a", self.omega_a) + changes.pop("delta_ca")
        return dataclasses.replace(self, **changes)

    @property
    def delta_ca(self) -> float:
        return self.omega_c - self.omega_a

    @property
    def omega_plus(self) -> float:
        return 0.5 * (self.omega_a + self.omega_c)

    @property
    def omega_minus(self) -> float:
        return 0.5 * (self.omega_a - self.omega_c)

    @property
    def gamma_plus(self) -> float:
        return 0.5 * abs(self.kappa + self.gamma)

    @property
    def gamma_minus(self) -> float:
        return 0.5 * abs(self.kappa - self.gamma)

    @property
    def half_difference(self) -> complex:
        """``((omega_c - i kappa) - (omega_a - i gamma)) / 2``, signed.

        This is the quantity whose square enters the discriminant.  For
        ``kappa > gamma`` it equals ``delta_ca/2 - i gamma_minus``.
        """
        return 0.5 * complex(self.delta_ca, -(self.kappa - self.gamma))

    @property
    def b_plus(self) -> complex:
        return complex(self.omega_plus, -self.gamma_plus) / self.g

    @property
    def b_minus(self) -> complex:
        return self.half_difference / self.g

    @property
    def inverted_decay(self) -> bool:
        """True when kappa < gamma, where sheet conventions are untested."""
        return self.kappa < self.gamma

    def hamiltonian(self) -> np.ndarray:
        return np.array(
            [[complex(self.omega_a, -self.gamma), self.g],
             [self.g, complex(self.omega_c, -self.kappa)]]
        )


@dataclass(frozen=True)
class EigenPair:
    e_plus: complex
    e_minus: complex
    theta_mix: complex
    defective: bool

    @property
    def gap(self) -> complex:
        return self.e_plus - self.e_minus

    def as_tuple(self) -> tuple[complex, complex]:
        return (self.e_plus, self.e_minus)


def _discriminant(p: SystemParams) -> complex:
    return p.half_difference ** 2 + p.g ** 2


def eigenvalues(p: SystemParams) -> EigenPair:
    """Eigenvalues ``E+-`` and complex mixing angle of the Hamiltonian.

    Uses the regular form ``E+- = (omega_+ - i gamma_+) +- sqrt(h**2 + g**2)``
    with ``h`` the signed half difference of the diagonal, so ``g -> 0`` is
    well behaved.  ``E+`` takes the principal root.
    """
    disc = _discriminant(p)
    s = _principal_sqrt(disc)
    centre = complex(p.omega_plus, -0.5 * (p.kappa + p.gamma))
    e_plus, e_minus = centre + s, centre - s
    defective = bool(abs(disc) < DEFECT_TOL * p.gamma_plus ** 2)

    # |+> = cos(theta)|e,0> + sin(theta)|g,1>  =>  tan(theta) = (E+ - H_00) / g
    if defective:
        theta = complex(np.nan, np.nan)
    elif p.g == 0:
        atom_like = abs(e_plus - p.hamiltonian()[0, 0]) <= abs(e_plus - p.hamiltonian()[1, 1])
        theta = 0j if atom_like else complex(np.pi / 2)
    else:
        tan_theta = (e_plus - complex(p.omega_a, -p.gamma)) / p.g
        with np.errstate(all="ignore"):
            theta = complex(np.arctan(tan_theta))
    return EigenPair(e_plus, e_minus, theta, defective)


def ep_condition(gamma: float, kappa: float) -> float:
    """Coupling at which the eigenvalues coalesce, ``|kappa - gamma| / 2``.

    The EP additionally needs ``delta_ca = 0``; callers impose that.
    """
    if gamma <= 0 or kappa <= 0:
        raise ValueError("gamma and kappa must be positive")
    return 0.5 * abs(kappa - gamma)


def exceptional_line(gamma: float, kappa_values: Sequence[float]) -> list[tuple[float, float]]:
    """``(kappa, g_EP)`` pairs tracing the exceptional line at ``delta_ca = 0``."""
    return [(float(k), ep_condition(gamma, k)) for k in kappa_values]


# -- Riemann surface -------------------------------------------------------

@dataclass(frozen=True)
class SurfaceSample:
    delta_ca: float
    g: float
    sheet_plus: complex
    sheet_minus: complex


@dataclass(frozen=True)
class RiemannSurface:
    """Sheet-assigned eigenvalues on a ``(delta_ca, g)`` grid.

    ``plus``/``minus`` have shape ``(len(g_grid), len(delta_grid))``.
    ``branch_cut`` lists grid edges ``((j, i), (j2, i2))`` (row = g index,
    column = detuning index) across which the sheets exchange.
    """

    delta_grid: np.ndarray
    g_grid: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    discriminant: np.ndarray
    branch_cut: list[tuple[tuple[int, int], tuple[int, int]]]
    continuity_bound: float

    def samples(self) -> list[SurfaceSample]:
        out = []
        for j, g in enumerate(self.g_grid):
            for i, d in enumerate(self.delta_grid):
                out.append(SurfaceSample(float(d), float(g), complex(self.plus[j, i]),
                                         complex(self.minus[j, i])))
        return out


def _match(prev: tuple[complex, complex], new: tuple[complex, complex],
           scale: float, where: str, amb_tol: float = 1e-9) -> tuple[complex, complex]:
    """Assign ``new`` roots to the strands ending at ``prev`` by nearest neighbour."""
    same = abs(new[0] - prev[0]) + abs(new[1] - prev[1])
    swap = abs(new[1] - prev[0]) + abs(new[0] - prev[1])
    if abs(same - swap) <= amb_tol * scale:
        # equal costs are harmless when either side is degenerate
        if abs(prev[0] - prev[1]) > amb_tol * scale and abs(new[0] - new[1]) > amb_tol * scale:
            raise MatchingAmbiguityError(f"sheet matching is ambiguous at {where}")
    return new if same <= swap else (new[1], new[0])


def riemann_surface(p_base: SystemParams, delta_grid, g_grid) -> RiemannSurface:
    """Sample both eigenvalue sheets over a ``(delta_ca, g)`` grid.

    The first node of each row (fixed ``g``) continues the first node of the
    previous row; each row is then swept in ``delta_ca`` by nearest-neighbour
    matching.  Edges between rows whose same-sheet jump exceeds the
    continuity bound (5x the median nearest-neighbour step) while the
    swapped assignment is closer are reported as the branch cut.
    """
    deltas = np.atleast_1d(np.asarray(delta_grid, dtype=float))
    gs = np.atleast_1d(np.asarray(g_grid, dtype=float))
    if deltas.size == 0 or gs.size == 0:
        raise ValueError("grids must be non-empty")
    if np.any(gs < 0):
        raise ValueError("g_grid must be non-negative")

    ny, nx = gs.size, deltas.size
    plus = np.empty((ny, nx), dtype=complex)
    minus = np.empty((ny, nx), dtype=complex)
    disc = np.empty((ny, nx), dtype=complex)
    scale = p_base.gamma_plus + float(np.max(np.abs(deltas))) + float(np.max(gs))

    for j, g in enumerate(gs):
        for i, d in enumerate(deltas):
            p = p_base.replace(g=float(g), delta_ca=float(d))
            ep = eigenvalues(p)
            disc[j, i] = _discriminant(p)
            roots = ep.as_tuple()
            if i == 0 and j == 0:
                pair = roots
            elif i == 0:
                pair = _match((plus[j - 1, 0], minus[j - 1, 0]), roots, scale,
                              f"node (delta_ca={d:g}, g={g:g})")
            else:
                pair = _match((plus[j, i - 1], minus[j, i - 1]), roots, scale,
                              f"node (delta_ca={d:g}, g={g:g})")
            plus[j, i], minus[j, i] = pair

    steps = []
    if nx > 1:
        steps.append(np.abs(np.diff(plus, axis=1)).ravel())
        steps.append(np.abs(np.diff(minus, axis=1)).ravel())
    if ny > 1:
        steps.append(np.abs(np.diff(plus[:, :1], axis=0)).ravel())
        steps.append(np.abs(np.diff(minus[:, :1], axis=0)).ravel())
    bound = 5.0 * float(np.median(np.concatenate(steps))) if steps else 0.0

    cut = []
    for j in range(ny - 1):
        for i in range(nx):
            same = max(abs(plus[j + 1, i] - plus[j, i]), abs(minus[j + 1, i] - minus[j, i]))
            swap = max(abs(plus[j + 1, i] - minus[j, i]), abs(minus[j + 1, i] - plus[j, i]))
            if same > bound and swap < same:
                cut.append(((j, i), (j + 1, i)))
    return RiemannSurface(deltas, gs, plus, minus, disc, cut, bound)


# -- decomposition and scaling ------------------------------------------

def eigen_decomposition(p: SystemParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``Theta, Lambda, Theta^-1`` of the atom-referenced Hamiltonian.

    The shifted Hamiltonian is ``[[A, g], [g, B]]`` with ``A = -i gamma`` and
    ``B = delta_ca - i kappa``; columns of ``Theta`` are ``(g, lambda+- - A)``.
    """
    h_shift = p.hamiltonian() - p.omega_a * np.eye(2)
    res = eig2(h_shift)
    if res.defective or eigenvalues(p).defective:
        raise ExceptionalPointError(
            f"eigenvectors coalesce at this point (|E+ - E-| = {abs(res.e_plus - res.e_minus):.3e});"
            " Theta is singular"
        )
    theta = res.vectors
    det = theta[0, 0] * theta[1, 1] - theta[0, 1] * theta[1, 0]
    if abs(det) <= 1e-12 * np.linalg.norm(theta[:, 0]) * np.linalg.norm(theta[:, 1]):
        raise ExceptionalPointError(f"Theta is singular (det = {det:.3e}); g = {p.g}")
    theta_inv = np.array([[theta[1, 1], -theta[0, 1]], [-theta[1, 0], theta[0, 0]]]) / det
    lam = np.diag([res.e_plus, res.e_minus])
    return theta, lam, theta_inv


def scaling_exponent(p_el: SystemParams, perturb: str, eps_values, tol: float = 1e-9
                     ) -> tuple[float, float]:
    """Log-log slope of the exact eigenvalue gap against a perturbation size.

    Args:
        p_el: A point on the exceptional line (``delta_ca = 0``,
            ``g = |kappa - gamma| / 2``).
        perturb: ``"coupling"`` (``g -> g + eps``) or ``"dissipation"``
            (``kappa -> kappa + eps``).
        eps_values: Positive perturbation sizes spanning at least two decades.

    Returns:
        ``(slope, intercept)`` of the least-squares line
        ``log|E+ - E-| = slope * log(eps) + intercept``.
    """
    eps = np.asarray(eps_values, dtype=float)
    if eps.size < 4:
        raise ValueError(f"need at least 4 perturbation sizes, got {eps.size}")
    if np.any(eps <= 0):
        raise ValueError("perturbation sizes must be positive")
    if eps.max() / eps.min() < 100.0 * (1 - 1e-9):
        raise ValueError("perturbation sizes must span at least two decades")
    scale = max(1.0, p_el.gamma_plus)
    if abs(p_el.delta_ca) > tol * scale or abs(p_el.g - ep_condition(p_el.gamma, p_el.kappa)) > tol * scale:
        raise ValueError("p_el is not on the exceptional line")
    if perturb == "coupling":
        gaps = [abs(eigenvalues(p_el.replace(g=p_el.g + e)).gap) for e in eps]
    elif perturb == "dissipation":
        gaps = [abs(eigenvalues(p_el.replace(kappa=p_el.kappa + e)).gap) for e in eps]
    else:
        raise ValueError(f"perturb must be 'coupling' or 'dissipation', got {perturb!r}")
    slope, intercept = np.polyfit(np.log(eps), np.log(gaps), 1)
    return float(slope), float(intercept)
