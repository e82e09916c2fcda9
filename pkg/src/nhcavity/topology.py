"""Eigenvalue braids, eigenvector holonomy and winding numbers on parameter loops.

Loops live in the ``(g, delta_ca)`` plane and are traversed in the complex
variable ``z = delta_ca / 2 + i g``.  ``orientation="counterclockwise"``
means counterclockwise in that z-plane::

    g(theta)        = g_center + R cos(theta)
    delta_ca(theta) = delta_center -+ R sin(theta)     (- ccw, + cw)

The exceptional point sits at ``g = |kappa - gamma| / 2``, ``delta_ca = 0``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .nonhermitian import (ExceptionalPointError, SystemParams, _match, ep_condition)
from .qops import eig2

__all__ = [
    "LoopSpec",
    "BraidResult",
    "HolonomyResult",
    "WindingResult",
    "LoopClassification",
    "IllDefinedWinding",
    "DiscretizationError",
    "track_eigenvalues_on_loop",
    "eigenvector_holonomy",
    "winding_number",
    "winding_along_path",
    "classify_loop",
]

ORIENTATIONS = ("counterclockwise", "clockwise")
EP_REL_TOL = 1e-3
SNAP_TOL = 1e-3


class IllDefinedWinding(ValueError):
    """The contour passes through the exceptional point."""


class DiscretizationError(RuntimeError):
    """The loop is sampled too coarsely to follow the eigenvalues."""


@dataclass(frozen=True)
class LoopSpec:
    g_center: float
    delta_center: float
    radius: float
    n_steps: int = 1024
    orientation: str = "counterclockwise"

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 16:
            raise ValueError(f"n_steps must be an integer >= 16, got {self.n_steps}")
        if not self.g_center - self.radius > 0:
            raise ValueError("loop must stay in the g > 0 half-plane (g_center - radius > 0)")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")

    @property
    def sign(self) -> int:
        return 1 if self.orientation == "counterclockwise" else -1

    def reversed(self) -> "LoopSpec":
        other = "clockwise" if self.orientation == "counterclockwise" else "counterclockwise"
        return replace(self, orientation=other)

    def points(self, n_turns: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``theta, g, delta_ca`` at ``n_turns * n_steps + 1`` samples (closed)."""
        n = int(self.n_steps) * int(n_turns)
        theta = 2 * np.pi * np.arange(n + 1) / self.n_steps
        g = self.g_center + self.radius * np.cos(theta)
        delta = self.delta_center - self.sign * self.radius * np.sin(theta)
        return theta, g, delta

    def ep_distance(self, p_base: SystemParams) -> float:
        """Signed distance of the EP from the loop: > 0 outside, < 0 inside."""
        g_ep = ep_condition(p_base.gamma, p_base.kappa)
        return math.hypot(g_ep - self.g_center, self.delta_center) - self.radius


@dataclass(frozen=True)
class BraidResult:
    theta: np.ndarray
    strand_plus: np.ndarray
    strand_minus: np.ndarray
    principal_plus: np.ndarray
    principal_minus: np.ndarray
    permutation: str
    branch_cut_crossings: list[int]
    winding_total: float
    continuity_bound: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "re_e_plus", "im_e_plus", "re_e_minus", "im_e_minus"])
        for t, a, b in zip(self.theta, self.strand_plus, self.strand_minus):
            w.writerow([repr(float(v)) for v in (t, a.real, a.imag, b.real, b.imag)])
        return buf.getvalue()


def _params_at(p_base: SystemParams, g: float, delta: float) -> SystemParams:
    return p_base.replace(g=float(g), delta_ca=float(delta))


def _check_clear_of_ep(loop: LoopSpec, p_base: SystemParams, rel_tol: float):
    dist = loop.ep_distance(p_base)
    if abs(dist) <= rel_tol * loop.radius:
        raise IllDefinedWinding(
            f"loop passes within {abs(dist):.3g} of the exceptional point"
            f" (tolerance {rel_tol * loop.radius:.3g})"
        )


def _track(p_base: SystemParams, g: np.ndarray, delta: np.ndarray, theta: np.ndarray):
    n = g.size
    plus = np.empty(n, dtype=complex)
    minus = np.empty(n, dtype=complex)
    pr_plus = np.empty(n, dtype=complex)
    pr_minus = np.empty(n, dtype=complex)
    vecs = np.empty((n, 2, 2), dtype=complex)
    scale = p_base.gamma_plus + float(np.max(np.abs(delta))) + float(np.max(g))
    for k in range(n):
        res = eig2(_params_at(p_base, g[k], delta[k]).hamiltonian())
        pr_plus[k], pr_minus[k] = res.e_plus, res.e_minus
        roots = (res.e_plus, res.e_minus)
        if k == 0:
            pair = roots
        else:
            pair = _match((plus[k - 1], minus[k - 1]), roots, scale, f"theta={theta[k]:.6g}")
        plus[k], minus[k] = pair
        cols = res.vectors if pair[0] == roots[0] else res.vectors[:, ::-1]
        vecs[k] = cols
    motion = np.concatenate([np.abs(np.diff(plus)), np.abs(np.diff(minus))])
    bound = 5.0 * float(np.median(motion)) if motion.size else 0.0
    if motion.size and np.max(motion) > bound and np.max(motion) > 1e-12 * scale:
        k = int(np.argmax(np.maximum(np.abs(np.diff(plus)), np.abs(np.diff(minus)))))
        raise DiscretizationError(
            f"eigenvalue jump {np.max(motion):.3g} exceeds continuity bound {bound:.3g}"
            f" near theta={theta[k + 1]:.6g}; increase n_steps"
        )
    return plus, minus, pr_plus, pr_minus, vecs, bound


def _permutation(plus: np.ndarray, minus: np.ndarray, tol_scale: float) -> str:
    start = (plus[0], minus[0])
    end = (plus[-1], minus[-1])
    same = abs(end[0] - start[0]) + abs(end[1] - start[1])
    swap = abs(end[0] - start[1]) + abs(end[1] - start[0])
    if min(same, swap) > 1e-9 * tol_scale:
        raise DiscretizationError("strands do not close onto their starting set")
    return "identity" if same <= swap else "swap"


def _branch_crossings(plus: np.ndarray, pr_plus: np.ndarray, pr_minus: np.ndarray) -> list[int]:
    # principal labels follow the tracked "+" strand until a branch cut is crossed
    on_plus = np.abs(pr_plus - plus) <= np.abs(pr_minus - plus)
    return [int(k) for k in np.flatnonzero(on_plus[1:] != on_plus[:-1]) + 1]


def _phase_winding(values: np.ndarray) -> float:
    steps = np.angle(values[1:] / values[:-1])
    if steps.size and np.max(np.abs(steps)) >= np.pi / 2:
        raise DiscretizationError("per-step phase change reaches pi/2; increase n_steps")
    return float(np.sum(steps) / (2 * np.pi))


def _snap(w: float) -> float:
    nearest = round(2 * w) / 2
    if abs(w - nearest) <= SNAP_TOL:
        return float(nearest)
    warnings.warn(f"winding number {w:.6f} is not within {SNAP_TOL} of a half-integer",
                  RuntimeWarning, stacklevel=3)
    return w


def _centre(p_base: SystemParams, delta: np.ndarray) -> np.ndarray:
    return (p_base.omega_a + 0.5 * delta) - 0.5j * (p_base.kappa + p_base.gamma)


def track_eigenvalues_on_loop(p_base: SystemParams, loop: LoopSpec,
                              ep_rel_tol: float = EP_REL_TOL) -> BraidResult:
    """Follow both eigenvalues once around ``loop``.

    Roots are assigned to strands by nearest neighbour from one step to the
    next.  ``permutation`` is ``"swap"`` when each strand ends on the other's
    start.  ``branch_cut_crossings`` are the sample indices where the
    principal-branch labels jump between strands, which happens where the
    loop crosses ``delta_ca = 0`` below the EP and the principal ``E+``/``E-``
    exchange imaginary parts.
    """
    if loop.radius > 0:
        _check_clear_of_ep(loop, p_base, ep_rel_tol)
    theta, g, delta = loop.points()
    plus, minus, pr_plus, pr_minus, _, bound = _track(p_base, g, delta, theta)
    scale = p_base.gamma_plus + float(np.max(g)) + abs(loop.delta_center) + loop.radius
    perm = _permutation(plus, minus, scale)
    crossings = _branch_crossings(plus, pr_plus, pr_minus)
    if loop.radius > 0:
        centre = _centre(p_base, delta)
        w_total = _phase_winding(plus - centre) + _phase_winding(minus - centre)
        w_total = _snap(w_total)
        if (perm == "swap") != (loop.ep_distance(p_base) < 0):
            raise DiscretizationError("strand permutation disagrees with EP enclosure; increase n_steps")
    else:
        w_total = 0.0
    return BraidResult(theta, plus, minus, pr_plus, pr_minus, perm, crossings, w_total, bound)


@dataclass(frozen=True)
class HolonomyResult:
    permutation: str
    phase_factor: complex
    phase_factors: tuple[complex, complex]


def _c_normalize(v: np.ndarray) -> np.ndarray:
    # complex-symmetric (bilinear) normalization v^T v = 1 fixes v up to a sign
    return v / np.sqrt(complex(v @ v))


def eigenvector_holonomy(p_base: SystemParams, loop: LoopSpec, n_turns: int = 1,
                         ep_rel_tol: float = EP_REL_TOL) -> HolonomyResult:
    """Transport both eigenvectors ``n_turns`` times around ``loop``.

    Eigenvectors are normalized with the bilinear product (``v^T v = 1``, the
    natural pairing for a complex-symmetric Hamiltonian) and at each step the
    sign with maximal overlap with the previous vector is kept.  The phase
    factor of a strand is ``v_start^H v_end / |v_start|^2`` against the start
    vector of the strand it ends on; ``phase_factor`` is that of the strand
    starting on ``E+``.
    """
    if n_turns < 1:
        raise ValueError("n_turns must be >= 1")
    if loop.radius > 0:
        _check_clear_of_ep(loop, p_base, ep_rel_tol)
    theta, g, delta = loop.points(n_turns)
    plus, minus, _, _, vecs, _ = _track(p_base, g, delta, theta)
    cur = [_c_normalize(vecs[0][:, 0]), _c_normalize(vecs[0][:, 1])]
    start = list(cur)
    for k in range(1, theta.size):
        for s in range(2):
            v = _c_normalize(vecs[k][:, s])
            if np.real(np.vdot(cur[s], v)) < 0:
                v = -v
            cur[s] = v
    scale = p_base.gamma_plus + float(np.max(g)) + abs(loop.delta_center) + loop.radius
    perm = _permutation(plus, minus, scale)
    target = (0, 1) if perm == "identity" else (1, 0)
    factors = tuple(complex(np.vdot(start[target[s]], cur[s]) / np.vdot(start[target[s]], start[target[s]]))
                    for s in range(2))
    return HolonomyResult(perm, factors[0], factors)


@dataclass(frozen=True)
class WindingResult:
    w_plus: float
    w_minus: float
    w_total: float
    crossings: list[int]

    def to_dict(self, label: str | None = None) -> dict:
        doc = {"class": label, "w_plus": self.w_plus, "w_minus": self.w_minus,
               "w_total": self.w_total, "crossings": self.crossings}
        return doc


def winding_along_path(p_base: SystemParams, g, delta) -> tuple[float, float]:
    """Raw ``(W+, W-)`` along an arbitrary sampled path in ``(g, delta_ca)``.

    ``E'+- = E+- - (omega_+ - i gamma_+)`` are tracked by nearest neighbour
    and their unwrapped phase change is divided by ``2 pi``.  Used directly
    for concatenated paths; closed loops go through ``winding_number``.
    """
    g = np.asarray(g, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if np.any(g <= 0):
        raise ValueError("path must stay in the g > 0 half-plane")
    theta = np.arange(g.size, dtype=float)
    plus, minus, *_ = _track(p_base, g, delta, theta)
    centre = _centre(p_base, delta)
    return _phase_winding(plus - centre), _phase_winding(minus - centre)


def winding_number(loop: LoopSpec, p_base: SystemParams,
                   ep_rel_tol: float = EP_REL_TOL) -> WindingResult:
    """Winding numbers ``W+``, ``W-`` and ``W = W+ + W-`` of the shifted eigenvalues.

    Each ``W`` is the accumulated phase of ``E'+-`` around the loop over
    ``2 pi``, snapped to the nearest multiple of 1/2 when within 1e-3.  The
    result is checked against the pole count: ``W+ = W- = +-1/2`` exactly
    when the loop encloses ``z = i gamma_-`` (the EP), else 0.

    Raises:
        IllDefinedWinding: the EP lies on the loop (within ``ep_rel_tol * R``).
        DiscretizationError: ``n_steps`` too small to follow the phase, or
            the tracked windings disagree with the pole count.
    """
    _check_clear_of_ep(loop, p_base, ep_rel_tol)
    theta, g, delta = loop.points()
    plus, minus, pr_plus, pr_minus, _, _ = _track(p_base, g, delta, theta)
    centre = _centre(p_base, delta)
    w_plus = _snap(_phase_winding(plus - centre))
    w_minus = _snap(_phase_winding(minus - centre))
    w_total = _snap(w_plus + w_minus)

    enclosed = loop.ep_distance(p_base) < 0
    expected = 0.5 * loop.sign if enclosed else 0.0
    if (w_plus, w_minus) != (expected, expected):
        raise DiscretizationError(
            f"phase winding ({w_plus}, {w_minus}) disagrees with the pole count ({expected});"
            " increase n_steps"
        )
    return WindingResult(w_plus, w_minus, w_total, _branch_crossings(plus, pr_plus, pr_minus))


@dataclass(frozen=True)
class LoopClassification:
    label: str
    w_total: float | None
    ep_distance: float

    def to_json(self, winding: WindingResult | None = None) -> str:
        doc = {"class": self.label, "w_plus": None, "w_minus": None,
               "w_total": self.w_total, "crossings": []}
        if winding is not None:
            doc.update(winding.to_dict(self.label))
        return json.dumps(doc, indent=2)


def classify_loop(loop: LoopSpec, p_base: SystemParams,
                  ep_rel_tol: float = EP_REL_TOL) -> LoopClassification:
    """``trivial`` (EP outside), ``on_ep_ill_defined`` or ``nontrivial`` (EP inside).

    The EP counts as on the loop when its distance from the circle is at
    most ``ep_rel_tol * R``.  The winding number is attached for the two
    well-defined classes.
    """
    dist = loop.ep_distance(p_base)
    if abs(dist) <= ep_rel_tol * loop.radius:
        return LoopClassification("on_ep_ill_defined", None, dist)
    label = "trivial" if dist > 0 else "nontrivial"
    w = winding_number(loop, p_base, ep_rel_tol)
    return LoopClassification(label, w.w_total, dist)
