"""Driven-dissipative atom-cavity dynamics.

Three routes to the cavity transmission under a weak probe:

* ``lindblad``   - exact steady state of the master equation (dense solve),
* ``trajectory`` - Monte Carlo wavefunction average,
* ``analytic``   - single-excitation closed form.

Rates follow the amplitude convention of the non-Hermitian Hamiltonian:
collapse operators are ``sqrt(2 kappa) a`` and ``sqrt(2 gamma) sigma_-`` so
that the no-jump Hamiltonian carries ``-i kappa a^dag a - i gamma sigma_+ sigma_-``.
Time is measured in units of ``1 / (2 pi MHz)``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .nonhermitian import SystemParams, eigen_decomposition
from .qops import OperatorSet, SingularMatrixError, basis_index, build_operators, eig2, solve_linear

__all__ = [
    "DriveParams",
    "SimConfig",
    "Spectrum",
    "TrajectoryResult",
    "SteadyStateError",
    "StepSizeError",
    "interaction_hamiltonian",
    "liouvillian",
    "steady_state",
    "steady_state_of",
    "expect",
    "mc_trajectories",
    "transmission_spectrum",
    "analytic_beta_ss",
    "analytic_transmission",
    "transmission_curve",
]

log = logging.getLogger(__name__)

BACKENDS = ("analytic", "lindblad", "trajectory")


class SteadyStateError(RuntimeError):
    """The Liouvillian has no unique steady state to working precision."""


class StepSizeError(RuntimeError):
    """The trajectory step is too coarse to resolve quantum jumps."""


@dataclass(frozen=True)
class DriveParams:
    epsilon: float
    omega_p: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @classmethod
    def at_detuning(cls, p: SystemParams, delta_pc: float, epsilon: float = 1.0) -> "DriveParams":
        """Probe placed ``delta_pc`` away from the cavity resonance."""
        return cls(epsilon, p.omega_c + delta_pc)

    def delta_pc(self, p: SystemParams) -> float:
        """Probe-cavity detuning ``omega_p - omega_c``."""
        return self.omega_p - p.omega_c

    delta_prime = delta_pc


@dataclass(frozen=True)
class SimConfig:
    """Numerical settings; ``dt``/``t_final`` of ``None`` resolve per system."""

    n_fock: int = 3
    n_trajectories: int = 500
    dt: float | None = None
    t_final: float | None = None
    seed: int = 0
    ss_tol: float = 1e-10

    def __post_init__(self):
        if int(self.n_fock) != self.n_fock or self.n_fock < 1:
            raise ValueError(f"n_fock must be an integer >= 1, got {self.n_fock}")
        if int(self.n_trajectories) != self.n_trajectories or self.n_trajectories < 1:
            raise ValueError(f"n_trajectories must be an integer >= 1, got {self.n_trajectories}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_final is not None and not self.t_final > 0:
            raise ValueError(f"t_final must be > 0, got {self.t_final}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def resolved(self, p: SystemParams) -> "SimConfig":
        dt = self.dt if self.dt is not None else 1e-3 / max(p.kappa, p.g)
        t_final = self.t_final if self.t_final is not None else 20.0 / min(p.gamma, p.kappa)
        return replace(self, dt=dt, t_final=t_final)


@dataclass(frozen=True)
class Spectrum:
    delta_pc: np.ndarray
    transmission: np.ndarray
    backend: str
    errors: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.delta_pc, dtype=float)
        y = np.asarray(self.transmission, dtype=float)
        object.__setattr__(self, "delta_pc", x)
        object.__setattr__(self, "transmission", y)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("delta_pc and transmission must be 1-D and equally long")
        if np.any(np.diff(x) <= 0):
            raise ValueError("delta_pc must be strictly increasing")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise ValueError("transmission must be finite and non-negative")
        if self.errors is not None:
            e = np.asarray(self.errors, dtype=float)
            if e.shape != x.shape:
                raise ValueError("errors must match delta_pc in length")
            object.__setattr__(self, "errors", e)

    def __len__(self) -> int:
        return self.delta_pc.size

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["delta_mhz", "transmission"] + (["error"] if self.errors is not None else [])
        w.writerow(header)
        for k in range(len(self)):
            row = [repr(float(self.delta_pc[k])), repr(float(self.transmission[k]))]
            if self.errors is not None:
                row.append(repr(float(self.errors[k])))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, backend: str = "analytic") -> "Spectrum":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or reader.fieldnames[:2] != ["delta_mhz", "transmission"]:
                raise ValueError(f"{path}: expected header 'delta_mhz,transmission'")
            rows = list(reader)
        x = [float(r["delta_mhz"]) for r in rows]
        y = [float(r["transmission"]) for r in rows]
        err = [float(r["error"]) for r in rows] if "error" in (reader.fieldnames or []) else None
        return cls(np.array(x), np.array(y), backend, None if err is None else np.array(err))


# -- Hamiltonian and Liouvillian --------------------------------------------

def interaction_hamiltonian(p: SystemParams, d: DriveParams, ops: OperatorSet) -> np.ndarray:
    """Driven Jaynes-Cummings Hamiltonian in the frame rotating at ``omega_p``."""
    h = ((p.omega_a - d.omega_p) * (ops.sigma_plus @ ops.sigma_minus)
         + (p.omega_c - d.omega_p) * (ops.a_dag @ ops.a)
         + p.g * (ops.a_dag @ ops.sigma_minus + ops.sigma_plus @ ops.a)
         + d.epsilon * (ops.a + ops.a_dag))
    return h


def collapse_operators(p: SystemParams, ops: OperatorSet) -> list[np.ndarray]:
    return [math.sqrt(2 * p.kappa) * ops.a, math.sqrt(2 * p.gamma) * ops.sigma_minus]


def effective_hamiltonian(p: SystemParams, d: DriveParams, ops: OperatorSet) -> np.ndarray:
    return (interaction_hamiltonian(p, d, ops)
            - 1j * p.kappa * (ops.a_dag @ ops.a)
            - 1j * p.gamma * (ops.sigma_plus @ ops.sigma_minus))


def liouvillian(p: SystemParams, d: DriveParams, ops: OperatorSet) -> np.ndarray:
    """Lindblad superoperator acting on row-major vectorized density matrices.

    ``vec(rho)[i * dim + j] = rho[i, j]``, hence ``vec(A rho B) = (A kron B.T) vec(rho)``.
    """
    h = interaction_hamiltonian(p, d, ops)
    eye = np.eye(ops.dim)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in collapse_operators(p, ops):
        cdc = c.conj().T @ c
        lv += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return lv


def steady_state(L: np.ndarray, ss_tol: float = 1e-10) -> np.ndarray:
    """Density matrix ``rho`` with ``L vec(rho) = 0`` and unit trace.

    The first row of ``L`` is replaced by the trace functional and the
    resulting system solved directly.  The residual ``|L vec(rho)|_inf`` must
    not exceed ``ss_tol * max(1, |L|_inf)``.
    """
    L = np.asarray(L, dtype=complex)
    n2 = L.shape[0]
    dim = math.isqrt(n2)
    if dim * dim != n2 or L.shape != (n2, n2):
        raise ValueError(f"superoperator shape {L.shape} is not (d^2, d^2)")
    trace_row = np.eye(dim).ravel()
    if np.max(np.abs(trace_row @ L)) > 1e-12 * max(1.0, np.max(np.abs(L))):
        raise ValueError("superoperator is not trace preserving")
    m = L.copy()
    m[0, :] = trace_row
    rhs = np.zeros(n2, dtype=complex)
    rhs[0] = 1.0
    try:
        x = solve_linear(m, rhs)
    except SingularMatrixError as exc:
        raise SteadyStateError(f"steady state is not unique: {exc}") from exc
    residual = float(np.max(np.abs(L @ x)))
    scale = max(1.0, float(np.linalg.norm(L, np.inf)))
    if residual > ss_tol * scale:
        raise SteadyStateError(
            f"steady-state residual {residual:.3e} exceeds tolerance {ss_tol * scale:.3e}"
        )
    return x.reshape(dim, dim)


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))


def steady_state_of(p: SystemParams, d: DriveParams, n_fock: int = 3,
                    ss_tol: float = 1e-10) -> tuple[np.ndarray, OperatorSet]:
    ops = build_operators(n_fock)
    return steady_state(liouvillian(p, d, ops), ss_tol), ops


# -- Monte Carlo wavefunction ------------------------------------------------

@dataclass(frozen=True)
class TrajectoryResult:
    """Ensemble averages of time-averaged observables (final half of each run)."""

    photon_number: float
    atom_excitation: float
    photon_number_err: float
    atom_excitation_err: float
    per_trajectory_photon: np.ndarray = field(repr=False)
    per_trajectory_atom: np.ndarray = field(repr=False)
    n_jumps: np.ndarray = field(repr=False)


_BLOCK = 64


def _taylor4(m: np.ndarray) -> np.ndarray:
    # one RK4 step of the linear ODE psi' = m psi / h is exactly this polynomial
    eye = np.eye(m.shape[0], dtype=complex)
    m2 = m @ m
    return eye + m + m2 / 2 + (m2 @ m) / 6 + (m2 @ m2) / 24


def mc_trajectories(p: SystemParams, d: DriveParams, cfg: SimConfig,
                    initial: np.ndarray | None = None, n_halvings: int = 10,
                    max_step_loss: float = 0.1) -> TrajectoryResult:
    """Monte Carlo wavefunction estimate of ``<a^dag a>`` and ``<sigma_+ sigma_->``.

    All trajectories are propagated together with a fixed RK4 step under the
    no-jump Hamiltonian.  A jump occurs when the squared norm falls below a
    uniform threshold drawn in advance; the crossing is then located by
    ``n_halvings`` step halvings, a channel is drawn in proportion to
    ``|C_k psi|^2``, and the state renormalized.  Trajectory ``k`` draws its
    randomness from ``SeedSequence(cfg.seed, spawn_key=(k,))``.

    Raises:
        StepSizeError: if a single step removes more than ``max_step_loss``
            of a trajectory's norm, or increases it (``dt`` too large).
    """
    cfg = cfg.resolved(p)
    if cfg.t_final < 10.0 / min(p.gamma, p.kappa):
        raise ValueError(
            f"t_final={cfg.t_final:g} is shorter than 10/min(gamma, kappa)"
            f" = {10.0 / min(p.gamma, p.kappa):g}; stationarity is not reached"
        )
    ops = build_operators(cfg.n_fock)
    dim = ops.dim
    n_traj = int(cfg.n_trajectories)
    n_steps = int(math.ceil(cfg.t_final / cfg.dt - 1e-9))
    dt = cfg.t_final / n_steps

    h_eff = effective_hamiltonian(p, d, ops)
    props = [_taylor4(-1j * h_eff * (dt / 2**k)).T for k in range(n_halvings + 1)]
    step = props[0]
    cops = collapse_operators(p, ops)
    n_diag = np.real(np.diag(ops.a_dag @ ops.a))
    e_diag = np.real(np.diag(ops.sigma_plus @ ops.sigma_minus))

    if initial is None:
        psi0 = np.zeros(dim, dtype=complex)
        psi0[basis_index(False, 0, cfg.n_fock)] = 1.0
    else:
        psi0 = np.asarray(initial, dtype=complex).reshape(dim)
        psi0 = psi0 / np.linalg.norm(psi0)
    # trajectories are propagated in zero-padded blocks of fixed shape so the
    # BLAS kernel, and hence the rounding, seen by trajectory k does not depend
    # on n_trajectories
    n_pad = -(-n_traj // _BLOCK) * _BLOCK
    psi = np.zeros((n_pad, dim), dtype=complex)
    psi[:n_traj] = psi0

    root = np.random.SeedSequence(int(cfg.seed))
    rngs = [np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(k,)))
            for k in range(n_traj)]
    thresholds = np.array([rng.random() for rng in rngs])
    jumps = np.zeros(n_traj, dtype=int)

    first_sample = n_steps // 2
    stride = max(1, (n_steps - first_sample) // 4000)
    acc_n = np.zeros(n_traj)
    acc_e = np.zeros(n_traj)
    n_samples = 0
    norms = np.ones(n_traj)

    for k in range(1, n_steps + 1):
        new = (psi.reshape(-1, _BLOCK, dim) @ step).reshape(n_pad, dim)
        live = new[:n_traj]
        new_norms = np.einsum("ij,ij->i", live.real, live.real) + np.einsum("ij,ij->i", live.imag, live.imag)
        if np.any(new_norms < (1.0 - max_step_loss) * norms):
            worst = int(np.argmin(new_norms / norms))
            raise StepSizeError(
                f"trajectory {worst} lost {1 - new_norms[worst] / norms[worst]:.2%} of its norm"
                f" in one step at t={k * dt:.4g} (dt={dt:.3g}); reduce dt"
            )
        if np.any(new_norms > (1.0 + 1e-9) * norms):
            worst = int(np.argmax(new_norms / norms))
            raise StepSizeError(
                f"trajectory {worst} gained norm in one step at t={k * dt:.4g} (dt={dt:.3g});"
                " the integrator is unstable, reduce dt"
            )
        crossed = np.flatnonzero(new_norms < thresholds)
        for j in crossed:
            new[j], new_norms[j], thresholds[j] = _resolve_jump(psi[j], thresholds[j], props, cops, rngs[j])
            jumps[j] += 1
        psi, norms = new, new_norms
        if k > first_sample and (k - first_sample) % stride == 0:
            pops = psi[:n_traj].real ** 2 + psi[:n_traj].imag ** 2
            acc_n += np.einsum("ij,j->i", pops, n_diag) / norms
            acc_e += np.einsum("ij,j->i", pops, e_diag) / norms
            n_samples += 1

    per_n = acc_n / max(n_samples, 1)
    per_e = acc_e / max(n_samples, 1)
    sem = (lambda v: float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan"))
    return TrajectoryResult(float(np.mean(per_n)), float(np.mean(per_e)), sem(per_n), sem(per_e),
                            per_n, per_e, jumps)


def _norm2(v: np.ndarray) -> float:
    return float(np.vdot(v, v).real)


def _resolve_jump(start: np.ndarray, threshold: float, props: list[np.ndarray],
                  cops: list[np.ndarray], rng: np.random.Generator
                  ) -> tuple[np.ndarray, float, float]:
    """Locate the threshold crossing inside one step, jump, finish the step.

    Returns the post-step state, its squared norm and the next threshold.
    """
    n_halvings = len(props) - 1
    full = 2**n_halvings
    cur = start
    units = 0
    for k in range(1, n_halvings + 1):
        cand = cur @ props[k]
        if _norm2(cand) >= threshold:
            cur = cand
            units += 2 ** (n_halvings - k)
    cur = cur @ props[n_halvings]
    units += 1

    branches = [c @ cur for c in cops]
    weights = np.array([_norm2(b) for b in branches])
    total = weights.sum()
    if total <= 0:
        raise StepSizeError("jump located but no collapse channel has weight")
    channel = int(rng.choice(len(cops), p=weights / total))
    cur = branches[channel] / math.sqrt(weights[channel])
    next_threshold = float(rng.random())

    remaining = full - units
    for k in range(1, n_halvings + 1):
        if remaining & 2 ** (n_halvings - k):
            cur = cur @ props[k]
    return cur, _norm2(cur), next_threshold


# -- analytic single-excitation response -------------------------------------

def _probe_from_atom(p: SystemParams, d: DriveParams) -> float:
    # the shifted Hamiltonian [[-i gamma, g], [g, delta_ca - i kappa]] is referenced to omega_a
    return d.omega_p - p.omega_a


def analytic_beta_ss(p: SystemParams, d: DriveParams, method: str = "direct") -> complex:
    """Steady-state cavity amplitude in the single-excitation limit.

    ``beta = eps (w - A) / ((lambda- - w)(lambda+ - w))`` with ``A = -i gamma``,
    ``lambda+-`` the eigenvalues of ``[[A, g], [g, delta_ca - i kappa]]`` and
    ``w = omega_p - omega_a`` the probe frequency in that frame (equal to
    ``delta_pc`` when the atom and cavity are resonant).

    ``method="decomposition"`` evaluates ``Theta (Lambda - w)^-1 Theta^-1``
    applied to ``(0, -eps)`` instead; it is undefined at an EP.
    """
    w = _probe_from_atom(p, d)
    a_diag = complex(0.0, -p.gamma)
    if method == "direct":
        h_shift = p.hamiltonian() - p.omega_a * np.eye(2)
        lam = eig2(h_shift)
        den = (lam.e_minus - w) * (lam.e_plus - w)
        if den == 0:
            raise ZeroDivisionError("probe coincides with an undamped eigenvalue")
        return d.epsilon * (w - a_diag) / den
    if method == "decomposition":
        theta, lam, theta_inv = eigen_decomposition(p)
        resolvent = theta @ np.diag(1.0 / (np.diag(lam) - w)) @ theta_inv
        return complex((resolvent @ np.array([0.0, -d.epsilon]))[1])
    raise ValueError(f"unknown method {method!r}")


def analytic_transmission(p: SystemParams, d: DriveParams) -> float:
    """``T = |beta_ss kappa / eps|^2``; unity for the empty cavity on resonance."""
    unit = DriveParams(1.0, d.omega_p)
    return float(abs(analytic_beta_ss(p, unit) * p.kappa) ** 2)


def transmission_curve(delta_pc, gamma: float, kappa: float, g: float, delta_ca: float) -> np.ndarray:
    """Vectorized single-excitation transmission over ``delta_pc``.

    Same quantity as ``analytic_transmission`` but written through the
    characteristic polynomial, ``(lambda+ - w)(lambda- - w) = (A - w)(B - w) - g^2``,
    so no square root is taken.
    """
    w = np.asarray(delta_pc, dtype=float) + delta_ca
    a_diag = -1j * gamma
    b_diag = delta_ca - 1j * kappa
    num = kappa * (w - a_diag)
    den = (a_diag - w) * (b_diag - w) - g * g
    return np.abs(num / den) ** 2


def transmission_spectrum(p: SystemParams, d_template: DriveParams, detunings: Sequence[float],
                          backend: str = "analytic", cfg: SimConfig | None = None) -> Spectrum:
    """Transmission versus probe-cavity detuning ``delta_pc``.

    The simulated backends report ``T = <a^dag a> (kappa / eps)^2``; the
    trajectory backend also attaches the propagated standard error.
    """
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
    x = np.asarray(detunings, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise ValueError("detunings must be strictly increasing")
    cfg = cfg or SimConfig()
    eps = d_template.epsilon
    if backend != "analytic" and eps <= 0:
        raise ValueError("simulated transmission needs a non-zero probe amplitude")
    norm = (p.kappa / eps) ** 2 if eps > 0 else 0.0
    values, errors = [], []
    ops = build_operators(cfg.n_fock) if backend == "lindblad" else None
    for delta in x:
        d = DriveParams(eps, p.omega_c + float(delta))
        if backend == "analytic":
            values.append(analytic_transmission(p, d))
        elif backend == "lindblad":
            rho = steady_state(liouvillian(p, d, ops), cfg.ss_tol)
            values.append(max(expect(ops.a_dag @ ops.a, rho).real, 0.0) * norm)
        else:
            res = mc_trajectories(p, d, cfg)
            values.append(res.photon_number * norm)
            errors.append(res.photon_number_err * norm)
    return Spectrum(x, np.array(values), backend, np.array(errors) if errors else None)
