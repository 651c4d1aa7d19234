"""Dense operator algebra, Lindblad generators and superoperators.

Operators are plain ``complex128`` numpy arrays of shape ``(d, d)``.
Superoperators are ``(d**2, d**2)`` arrays acting on column-stacked
vectorizations, so that ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .config import DEFAULT, Tolerances
from .errors import DimensionError, ModelError, NumericalError

__all__ = [
    "LindbladGenerator",
    "apply_adjoint_generator",
    "apply_generator",
    "canonical_subspace_basis",
    "check_density",
    "choi_matrix",
    "commutator",
    "dagger",
    "dissipator_matrix",
    "frobenius_norm",
    "hermitian_eigendecomposition",
    "is_hermitian",
    "kraus_superoperator",
    "kron",
    "liouvillian_matrix",
    "matrix_exponential",
    "partial_trace",
    "pseudo_inverse_psd",
    "trace",
    "trace_norm",
    "unvec",
    "vec",
]


def as_operator(a, name="operator") -> np.ndarray:
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {arr.shape}")
    return arr


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a, b):
    return a @ b - b @ a


def kron(*ops):
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def trace(a) -> complex:
    return complex(np.trace(a))


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(a))


def trace_norm(a) -> float:
    """Sum of singular values (nuclear norm)."""
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def hermiticity_defect(a) -> float:
    return float(np.max(np.abs(a - dagger(a)))) if np.size(a) else 0.0


def is_hermitian(a, tol: float = DEFAULT.herm) -> bool:
    """True when ``max|a - a^dag| <= tol * max(1, ||a||_F)``."""
    return hermiticity_defect(a) <= tol * max(1.0, frobenius_norm(a))


def partial_trace(a, dims: Sequence[int], keep: Sequence[int] | int):
    """Trace out every tensor factor of ``a`` not listed in ``keep``.

    ``dims`` lists factor dimensions in kron order (first factor is the
    slowest-varying index).
    """
    dims = [int(d) for d in dims]
    if isinstance(keep, int):
        keep = [keep]
    keep = sorted(set(keep))
    n = len(dims)
    if int(np.prod(dims)) != a.shape[0]:
        raise DimensionError(f"factor dims {dims} do not match operator size {a.shape[0]}")
    t = np.asarray(a).reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    # trace highest axes first so earlier axis numbers stay valid
    for k in sorted(traced, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + m)
    kd = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(kd, kd)


def hermitian_eigendecomposition(a, tol: float = DEFAULT.herm):
    """Eigenvalues (ascending) and orthonormal eigenvectors of Hermitian ``a``."""
    a = as_operator(a)
    if not is_hermitian(a, tol):
        raise ModelError(f"operator is not Hermitian (max|A-A^dag| = {hermiticity_defect(a):.3e})")
    return np.linalg.eigh(0.5 * (a + dagger(a)))


def pseudo_inverse_psd(a, rel_tol: float = DEFAULT.rel_tol_pinv, tol: Tolerances = DEFAULT):
    """Moore-Penrose pseudo-inverse of a Hermitian positive semidefinite matrix.

    Eigenvalues at or below ``rel_tol * lambda_max`` are treated as the
    kernel and mapped to zero.

    Raises
    ------
    ModelError
        If ``a`` is not Hermitian or has an eigenvalue below
        ``-tol.psd * max(1, lambda_max)``.
    """
    w, v = hermitian_eigendecomposition(a, tol.herm)
    if w.size == 0:
        return np.zeros_like(a)
    lam_max = float(np.max(np.abs(w)))
    if w[0] < -tol.psd * max(1.0, lam_max):
        raise ModelError(f"operator is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    keep = w > rel_tol * lam_max
    if not np.any(keep):
        return np.zeros_like(np.asarray(a, dtype=complex))
    vk = v[:, keep]
    return (vk / w[keep]) @ dagger(vk)


def vec(a):
    """Column-stacking vectorization."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v, dim: int | None = None):
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise DimensionError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(dim, dim, order="F")


def check_density(rho, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = as_operator(rho, "density matrix")
    scale = max(1.0, frobenius_norm(rho))
    if hermiticity_defect(rho) > tol.herm * scale:
        raise ModelError("density matrix is not Hermitian")
    if abs(trace(rho) - 1.0) > tol.trace * scale:
        raise ModelError(f"density matrix trace is {trace(rho).real:.12g}, expected 1")
    wmin = float(np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))[0])
    if wmin < -tol.psd:
        raise ModelError(f"density matrix has negative eigenvalue {wmin:.3e}")
    return rho


@dataclass(frozen=True)
class LindbladGenerator:
    """Hamiltonian plus jump operators of a GKLS generator.

    ``hamiltonian`` carries units of angular frequency, each jump operator
    units of ``sqrt(rate)``.
    """

    hamiltonian: np.ndarray
    jumps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        h = as_operator(self.hamiltonian, "hamiltonian")
        jumps = tuple(as_operator(j, "jump operator") for j in self.jumps)
        d = h.shape[0]
        for j in jumps:
            if j.shape[0] != d:
                raise DimensionError(f"jump operator of dim {j.shape[0]} in a dim-{d} generator")
        if not is_hermitian(h):
            raise ModelError(
                f"hamiltonian is not Hermitian (max|H-H^dag| = {hermiticity_defect(h):.3e})"
            )
        h = h.copy()
        h.setflags(write=False)
        for j in jumps:
            j.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", jumps)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @classmethod
    def zero(cls, dim: int) -> "LindbladGenerator":
        return cls(np.zeros((dim, dim), dtype=complex), ())

    def scaled(self, epsilon: float) -> "LindbladGenerator":
        """Generator of ``epsilon * L`` (jumps scale with ``sqrt(epsilon)``)."""
        s = np.sqrt(epsilon)
        return LindbladGenerator(epsilon * self.hamiltonian, tuple(s * j for j in self.jumps))

    def __add__(self, other: "LindbladGenerator") -> "LindbladGenerator":
        if other.dim != self.dim:
            raise DimensionError(f"cannot add generators of dims {self.dim} and {other.dim}")
        return LindbladGenerator(self.hamiltonian + other.hamiltonian, self.jumps + other.jumps)

    def is_zero(self, atol: float = 0.0) -> bool:
        parts = [self.hamiltonian, *self.jumps]
        return all(np.max(np.abs(p), initial=0.0) <= atol for p in parts)


def _check_dims(gen: LindbladGenerator, a):
    a = np.asarray(a, dtype=complex)
    if a.shape != (gen.dim, gen.dim):
        raise DimensionError(f"operator of shape {a.shape} does not match generator dim {gen.dim}")
    return a


def apply_generator(gen: LindbladGenerator, rho):
    """Evaluate ``-i[H, rho] + sum_k D[L_k](rho)``."""
    rho = _check_dims(gen, rho)
    out = -1j * commutator(gen.hamiltonian, rho)
    for L in gen.jumps:
        LdL = dagger(L) @ L
        out += L @ rho @ dagger(L) - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def apply_adjoint_generator(gen: LindbladGenerator, a):
    """Heisenberg-picture generator, the Hilbert-Schmidt adjoint of :func:`apply_generator`."""
    a = _check_dims(gen, a)
    out = 1j * commutator(gen.hamiltonian, a)
    for L in gen.jumps:
        LdL = dagger(L) @ L
        out += dagger(L) @ a @ L - 0.5 * (LdL @ a + a @ LdL)
    return out


def spre(a):
    return np.kron(np.eye(a.shape[0]), a)


def spost(a):
    return np.kron(a.T, np.eye(a.shape[0]))


def dissipator_matrix(jumps: Sequence[np.ndarray], dim: int | None = None):
    """Superoperator of ``sum_k D[L_k]``."""
    if dim is None:
        if not jumps:
            raise DimensionError("dim is required for an empty jump list")
        dim = jumps[0].shape[0]
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    eye = np.eye(dim)
    for L in jumps:
        LdL = dagger(L) @ L
        out += np.kron(L.conj(), L) - 0.5 * (np.kron(eye, LdL) + np.kron(LdL.T, eye))
    return out


def liouvillian_matrix(gen: LindbladGenerator):
    h = gen.hamiltonian
    out = -1j * (spre(h) - spost(h))
    return out + dissipator_matrix(gen.jumps, gen.dim)


def kraus_superoperator(kraus: Sequence[np.ndarray]):
    """Superoperator of ``rho -> sum_k M_k rho M_k^dag``."""
    return sum(np.kron(m.conj(), m) for m in kraus)


def matrix_exponential(s, t: float = 1.0):
    """``exp(t * s)`` by scaling and squaring with Pade approximants."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    s = np.asarray(s, dtype=complex)
    if not np.all(np.isfinite(s)):
        raise NumericalError("matrix has non-finite entries")
    if t == 0:
        return np.eye(s.shape[0], dtype=complex)
    return scipy.linalg.expm(t * s)


def choi_matrix(superop):
    """Choi matrix ``sum_ij E_ij (x) Phi(E_ij)`` of a superoperator."""
    superop = np.asarray(superop)
    d = int(round(np.sqrt(superop.shape[0])))
    # superop[a + d*b, i + d*j] = Phi(E_ij)[a, b]
    s4 = superop.reshape(d, d, d, d)  # indices (b, a, j, i)
    return s4.transpose(3, 1, 2, 0).reshape(d * d, d * d)


def canonical_subspace_basis(v, pivot_tol: float = 1e-3):
    """Basis of ``span(v)`` that depends only on the subspace.

    Standard basis vectors are projected onto the subspace in index order and
    Gram-Schmidt orthonormalized, keeping those with a residual above
    ``pivot_tol``. Each returned column is real positive at its pivot index.
    ``v`` must have orthonormal columns.
    """
    v = np.asarray(v, dtype=complex)
    n, k = v.shape
    if k == 0:
        return v
    w = v.conj().T  # column m holds the coordinates of P e_m
    basis = []
    for m in range(n):
        r = w[:, m].copy()
        for u in basis:
            r -= u * np.vdot(u, r)
        nr = np.linalg.norm(r)
        if nr > pivot_tol:
            # second pass keeps orthogonality tight
            for u in basis:
                r -= u * np.vdot(u, r)
            basis.append(r / np.linalg.norm(r))
            if len(basis) == k:
                break
    if len(basis) < k:
        return v
    return v @ np.column_stack(basis)
