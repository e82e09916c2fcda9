"""Dense complex linear algebra and Jaynes-Cummings operator construction.

Every matrix in the package is a plain ``numpy`` complex array.  The joint
atom-cavity Hilbert space is ordered atom first::

    basis index = atom_index * (n_fock + 1) + photon_number

with ``atom_index`` 0 for the ground state ``|g>`` and 1 for the excited
state ``|e>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "SingularMatrixError",
    "OperatorSet",
    "Eig2Result",
    "as_complex_matrix",
    "basis_index",
    "build_operators",
    "eig2",
    "solve_linear",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a linear system is singular to working precision."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


def as_complex_matrix(m, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Return ``m`` as a 2-D complex array, rejecting NaN/Inf entries."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    return arr


@dataclass(frozen=True)
class OperatorSet:
    """Ladder operators of one two-level atom and a truncated cavity mode."""

    n_fock: int
    a: np.ndarray
    a_dag: np.ndarray
    sigma_minus: np.ndarray
    sigma_plus: np.ndarray
    identity: np.ndarray

    @property
    def dim(self) -> int:
        return 2 * (self.n_fock + 1)

    @property
    def photon_number(self) -> np.ndarray:
        return self.a_dag @ self.a

    @property
    def atom_excitation(self) -> np.ndarray:
        return self.sigma_plus @ self.sigma_minus


def basis_index(excited: bool, n: int, n_fock: int) -> int:
    """Index of ``|e,n>`` (``excited=True``) or ``|g,n>`` in the joint basis."""
    if not 0 <= n <= n_fock:
        raise ValueError(f"photon number {n} outside truncation 0..{n_fock}")
    return int(excited) * (n_fock + 1) + n


def build_operators(n_fock: int) -> OperatorSet:
    """Build ``a``, ``a_dag``, ``sigma_minus``, ``sigma_plus`` on atom (x) cavity.

    Args:
        n_fock: Highest photon number kept (the cavity space has ``n_fock + 1``
            levels).  Must be at least 1 so the drive can populate a photon.
    """
    if int(n_fock) != n_fock or n_fock < 1:
        raise ValueError(f"n_fock must be an integer >= 1, got {n_fock!r}")
    n_fock = int(n_fock)
    cav = np.diag(np.sqrt(np.arange(1, n_fock + 1, dtype=float)), k=1).astype(complex)
    # sigma_- = |g><e| with |g> -> index 0, |e> -> index 1
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    eye_c = np.eye(n_fock + 1, dtype=complex)
    eye_a = np.eye(2, dtype=complex)
    a = np.kron(eye_a, cav)
    s_minus = np.kron(sm, eye_c)
    for op in (a, s_minus):
        op.setflags(write=False)
    a_dag = a.conj().T.copy()
    s_plus = s_minus.conj().T.copy()
    ident = np.eye(2 * (n_fock + 1), dtype=complex)
    for op in (a_dag, s_plus, ident):
        op.setflags(write=False)
    return OperatorSet(n_fock, a, a_dag, s_minus, s_plus, ident)


class Eig2Result(NamedTuple):
    e_plus: complex
    e_minus: complex
    vectors: np.ndarray
    defective: bool


def _principal_sqrt(z: complex) -> complex:
    # numpy picks the sign of the imaginary part from a signed zero; pin it
    s = complex(np.sqrt(complex(z)))
    if s.real == 0.0 and s.imag < 0.0:
        s = -s
    return s


def eig2(m, defect_tol: float = 1e-9) -> Eig2Result:
    """Closed-form eigenvalues and eigenvectors of a 2x2 complex matrix.

    ``e_plus`` takes the ``+`` branch of the principal square root of the
    discriminant ``(a - d)**2 + 4*b*c``.  Columns of ``vectors`` are the
    unnormalized eigenvectors ``(b, lambda - a)``; when ``b`` vanishes the
    alternative form ``(lambda - d, c)`` or a unit vector is used instead.

    ``defective`` is set when the discriminant is below
    ``defect_tol * scale**2`` while the off-diagonal part is not negligible,
    i.e. the matrix sits at an exceptional point and ``vectors`` is singular.
    """
    m = as_complex_matrix(m, (2, 2))
    a, b = complex(m[0, 0]), complex(m[0, 1])
    c, d = complex(m[1, 0]), complex(m[1, 1])
    disc = (a - d) ** 2 + 4 * b * c
    s = _principal_sqrt(disc)
    e_plus = 0.5 * (a + d + s)
    e_minus = 0.5 * (a + d - s)

    scale = max(abs(a), abs(b), abs(c), abs(d))
    offdiag = max(abs(b), abs(c))
    tiny = np.finfo(float).eps * max(scale, 1.0)
    defective = bool(abs(disc) <= defect_tol * scale**2 and offdiag > tiny)

    if abs(b) > tiny:
        vectors = np.array([[b, b], [e_plus - a, e_minus - a]])
    elif abs(c) > tiny:
        vectors = np.array([[e_plus - d, e_minus - d], [c, c]])
    elif abs(e_plus - a) <= abs(e_plus - d):
        vectors = np.eye(2, dtype=complex)
    else:
        vectors = np.array([[0, 1], [1, 0]], dtype=complex)
    return Eig2Result(e_plus, e_minus, vectors, defective)


def solve_linear(A, b, rcond: float | None = None) -> np.ndarray:
    """Solve ``A x = b`` by LU factorization with partial pivoting.

    Raises:
        SingularMatrixError: if the 1-norm condition number exceeds
            ``1 / rcond`` (default ``1 / (n * eps)``).
    """
    A = as_complex_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != n:
        raise ValueError(f"b has length {b.shape[0]}, expected {n}")
    if rcond is None:
        rcond = n * np.finfo(float).eps
    with np.errstate(all="ignore"):
        cond = float(np.real(np.linalg.cond(A, 1)))
    if not np.isfinite(cond) or cond * rcond > 1.0:
        raise SingularMatrixError(
            f"matrix is singular to working precision (cond_1 = {cond:.3e})", cond
        )
    return np.linalg.solve(A, b)
