"""Asymptotic structure of the fast generator.

Everything downstream of the reduction depends on four objects computed
here: the projector ``R`` onto the steady states (the long-time limit of the
fast propagator), a Kraus decomposition of ``R``, the decoherence-free
subspace it projects onto, and the scalars by which each Kraus operator
acts on that subspace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .config import DEFAULT, Tolerances
from .errors import AssumptionError, NumericalError
from .operators import (
    LindbladGenerator,
    apply_generator,
    canonical_subspace_basis,
    choi_matrix,
    dagger,
    frobenius_norm,
    kraus_superoperator,
    liouvillian_matrix,
    matrix_exponential,
    unvec,
    vec,
)

log = logging.getLogger(__name__)

# above this superoperator side the exp(T L) cross-check is skipped by default
CROSS_CHECK_MAX_SIDE = 1024
PROJECTOR_TOL = 1e-8
CROSS_CHECK_TOL = 1e-6
SCALAR_ACTION_TOL = 1e-6


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    zero_multiplicity_algebraic: int
    zero_multiplicity_geometric: int
    gap: float | None
    tol_zero: float
    # sorted complex Schur form (T, Z), zero cluster leading
    schur: tuple = field(repr=False, compare=False, default=None)

    @property
    def zero_semisimple(self) -> bool:
        return self.zero_multiplicity_geometric == self.zero_multiplicity_algebraic

    @property
    def dissipative(self) -> bool:
        return self.gap is not None and self.gap > self.tol_zero

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "zero_multiplicity_algebraic": self.zero_multiplicity_algebraic,
            "zero_multiplicity_geometric": self.zero_multiplicity_geometric,
            "gap": self.gap,
        }


def analyze_spectrum(L0mat, tol: Tolerances = DEFAULT) -> Spectrum:
    """Eigenvalues, zero multiplicities and spectral gap of a Liouvillian.

    The geometric multiplicity is the nullity of the leading zero block of
    the sorted Schur form, which equals the nullity of ``L0mat`` because the
    trailing block is nonsingular.
    """
    L0mat = np.asarray(L0mat, dtype=complex)
    if not np.all(np.isfinite(L0mat)):
        raise NumericalError("Liouvillian has non-finite entries")
    tol_zero = tol.zero * max(1.0, frobenius_norm(L0mat))
    T, Z, k = scipy.linalg.schur(L0mat, output="complex", sort=lambda z: abs(z) <= tol_zero)
    eig = np.diag(T).copy()
    if k:
        sv = np.linalg.svd(T[:k, :k], compute_uv=False)
        geometric = int(k - np.count_nonzero(sv > tol_zero))
    else:
        geometric = 0
    nonzero = eig[k:]
    gap = float(np.min(-nonzero.real)) if nonzero.size else None
    return Spectrum(
        eigenvalues=eig,
        zero_multiplicity_algebraic=int(k),
        zero_multiplicity_geometric=geometric,
        gap=gap,
        tol_zero=tol_zero,
        schur=(T, Z),
    )


def spectrum_violation(spectrum: Spectrum) -> str | None:
    if not spectrum.dissipative:
        return "not_dissipative"
    if not spectrum.zero_semisimple:
        return "zero_not_semisimple"
    return None


@dataclass(frozen=True)
class ProjectorChecks:
    r_after_l: float
    l_after_r: float
    idempotency: float
    propagation: float | None


def steady_projector(L0mat, spectrum: Spectrum | None = None, *, cross_check=None,
                     tol: Tolerances = DEFAULT, return_checks=False):
    """Spectral projector onto ``ker L0`` along ``range L0``.

    Built from the sorted Schur form ``L0 = Z T Z^dag`` by decoupling the
    zero block with a triangular Sylvester solve. With ``cross_check`` (on
    by default for superoperator sides up to 1024) the result is compared
    against ``exp(T L0)`` at ``T = 40 / gap``.
    """
    L0mat = np.asarray(L0mat, dtype=complex)
    if spectrum is None:
        spectrum = analyze_spectrum(L0mat, tol)
    if not spectrum.zero_semisimple:
        raise AssumptionError(
            "zero_not_semisimple",
            f"zero eigenvalue has algebraic multiplicity {spectrum.zero_multiplicity_algebraic}"
            f" but geometric multiplicity {spectrum.zero_multiplicity_geometric}",
        )
    T, Z = spectrum.schur
    n = T.shape[0]
    k = spectrum.zero_multiplicity_algebraic
    if k == 0:
        raise AssumptionError("not_dissipative", "generator has no steady state")
    Z1 = Z[:, :k]
    if k == n:
        W = dagger(Z1)
    else:
        X, scale, info = lapack.ztrsyl(T[:k, :k], T[k:, k:], -T[:k, k:], isgn=-1)
        if info < 0:
            raise NumericalError(f"triangular Sylvester solve failed (info={info})")
        X = X / scale
        W = dagger(Z1) - X @ dagger(Z[:, k:])
    R = Z1 @ W

    scale_l = max(1.0, frobenius_norm(L0mat))
    checks = ProjectorChecks(
        r_after_l=frobenius_norm(W @ L0mat) / scale_l,
        l_after_r=frobenius_norm((L0mat @ Z1) @ W) / scale_l,
        idempotency=frobenius_norm((W @ Z1 - np.eye(k)) @ W),
        propagation=None,
    )
    worst = max(checks.r_after_l, checks.l_after_r, checks.idempotency)
    if worst > PROJECTOR_TOL:
        raise NumericalError(f"spectral projector residual {worst:.3e} exceeds {PROJECTOR_TOL}")
    if cross_check is None:
        cross_check = n <= CROSS_CHECK_MAX_SIDE
    if cross_check and spectrum.gap is not None and k < n:
        horizon = 40.0 / spectrum.gap
        dist = frobenius_norm(R - matrix_exponential(L0mat, horizon))
        checks = ProjectorChecks(checks.r_after_l, checks.l_after_r, checks.idempotency, dist)
        if dist > CROSS_CHECK_TOL:
            raise NumericalError(
                f"spectral projector differs from exp({horizon:.3g} L0) by {dist:.3e}"
            )
    return (R, checks) if return_checks else R


@dataclass(frozen=True)
class KrausMap:
    operators: tuple
    completeness_residual: float
    reconstruction_residual: float = 0.0
    choi_eigenvalues: np.ndarray = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def apply(self, rho):
        return sum(m @ rho @ dagger(m) for m in self.operators)

    def apply_adjoint(self, a):
        return sum(dagger(m) @ a @ m for m in self.operators)

    def superoperator(self):
        return kraus_superoperator(self.operators)

    def mixed(self, unitary) -> "KrausMap":
        """Kraus family ``M'_mu = sum_nu U_{mu nu} M_nu`` describing the same map."""
        stack = np.asarray(self.operators)
        mixed = np.einsum("mn,nij->mij", unitary, stack)
        return KrausMap(tuple(mixed), self.completeness_residual, self.reconstruction_residual)


def _fix_phase(m):
    flat = m.ravel()
    mag = np.abs(flat)
    # first entry within rounding of the maximum, so ties resolve by index
    idx = int(np.argmax(mag >= mag.max() * (1 - 1e-6)))
    return m * (abs(flat[idx]) / flat[idx])


def _choi_factor(choi, tol: Tolerances):
    """Eigenpairs of the (low-rank, PSD) Choi matrix.

    A rank-revealing pivoted Cholesky gives ``C = G G^dag``; the thin SVD of
    ``G`` then yields the eigenpairs. If the factor does not reproduce ``C``
    the full Hermitian eigendecomposition is used instead, which also
    exposes negative eigenvalues.
    """
    diag_max = float(np.max(choi.diagonal().real)) if choi.size else 0.0
    if diag_max > 0:
        c, piv, rank, info = lapack.zpstrf(choi, tol=tol.cut * diag_max, lower=1)
        if info >= 0 and rank > 0:
            g = np.zeros((choi.shape[0], rank), dtype=complex)
            g[piv - 1, :] = np.tril(c)[:, :rank]
            u, s, _ = np.linalg.svd(g, full_matrices=False)
            w = s**2
            resid = frobenius_norm(choi - (u * w) @ dagger(u))
            if resid <= tol.psd * max(1.0, float(w[0])):
                return w, u, resid
    w, v = np.linalg.eigh(choi)
    order = np.argsort(w)[::-1]
    return w[order], v[:, order], 0.0


def kraus_from_choi(R, tol: Tolerances = DEFAULT) -> KrausMap:
    """Canonical Kraus decomposition of a completely positive superoperator.

    Kraus operators come in descending Choi-eigenvalue order. Inside a
    cluster of degenerate eigenvalues the eigenbasis is replaced by
    :func:`canonical_subspace_basis`, and every operator is phase-fixed so
    its largest entry is real positive.

    Raises
    ------
    AssumptionError
        ``not_cp`` if the Choi matrix has an eigenvalue below
        ``-tol.psd * lambda_max``.
    """
    R = np.asarray(R, dtype=complex)
    d = int(round(np.sqrt(R.shape[0])))
    choi = choi_matrix(R)
    choi = 0.5 * (choi + dagger(choi))
    w, v, _ = _choi_factor(choi, tol)
    lam_max = float(w[0]) if w.size else 0.0
    if lam_max <= 0:
        raise AssumptionError("not_cp", "Choi matrix has no positive eigenvalue")
    if w[-1] < -tol.psd * lam_max:
        raise AssumptionError("not_cp", f"Choi matrix has eigenvalue {w[-1]:.3e}")
    keep = w > tol.cut * lam_max
    w, v = w[keep], v[:, keep]

    ops = []
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[start] - w[stop] <= tol.cluster * lam_max:
            stop += 1
        block = v[:, start:stop]
        if stop - start > 1:
            block = canonical_subspace_basis(block)
        for j in range(stop - start):
            m = np.sqrt(w[start + j]) * unvec(block[:, j], d)
            ops.append(_fix_phase(m))
        start = stop

    completeness = frobenius_norm(sum(dagger(m) @ m for m in ops) - np.eye(d))
    reconstruction = frobenius_norm(kraus_superoperator(ops) - R)
    if reconstruction > PROJECTOR_TOL * max(1.0, frobenius_norm(R)):
        raise NumericalError(f"Kraus reconstruction residual {reconstruction:.3e}")
    return KrausMap(tuple(ops), completeness, reconstruction, w)


@dataclass(frozen=True)
class DfsData:
    slow_dim: int
    P0: np.ndarray
    S0: np.ndarray
    steady_residual: float = 0.0

    @property
    def basis_vectors(self):
        return self.S0

    @property
    def dim(self) -> int:
        return self.S0.shape[0]

    def embed(self, rho_s):
        """``K0(rho_s) = S0 rho_s S0^dag``."""
        return self.S0 @ rho_s @ dagger(self.S0)

    def compress(self, a):
        """``S0^dag a S0``."""
        return dagger(self.S0) @ a @ self.S0

    def matrix_units(self):
        k = self.slow_dim
        for nu in range(k):
            for mu in range(k):
                e = np.zeros((k, k), dtype=complex)
                e[nu, mu] = 1.0
                yield e


def generator_scale(gen: LindbladGenerator) -> float:
    return max(1.0, np.linalg.norm(gen.hamiltonian, 2)
               + sum(np.linalg.norm(L, 2) ** 2 for L in gen.jumps))


def identify_dfs(R, L0: LindbladGenerator, tol: Tolerances = DEFAULT) -> DfsData:
    """Decoherence-free subspace spanned by the support of ``R(I/d)``."""
    d = L0.dim
    steady = unvec(np.asarray(R) @ vec(np.eye(d) / d), d)
    steady = 0.5 * (steady + dagger(steady))
    w, v = np.linalg.eigh(steady)
    support = w > tol.support
    if not np.any(support):
        raise AssumptionError("not_dfs", "steady state of I/d has empty support")
    S0 = canonical_subspace_basis(v[:, support])
    k = S0.shape[1]
    P0 = S0 @ dagger(S0)
    scale = generator_scale(L0)
    worst = 0.0
    dfs = DfsData(k, P0, S0)
    for e in dfs.matrix_units():
        worst = max(worst, frobenius_norm(apply_generator(L0, dfs.embed(e))))
    if worst > tol.support * scale:
        raise AssumptionError(
            "not_dfs",
            f"operators supported on the candidate subspace are not steady (residual {worst:.3e})",
        )
    return DfsData(k, P0, S0, worst)


def kraus_eigenvalues(K: KrausMap, dfs: DfsData, *, check=True):
    """Scalars ``lambda_mu`` with ``M_mu |c> = lambda_mu |c>`` on the DFS.

    Returns ``(lambdas, residual)`` with ``residual = max ||M S0 - lambda S0||_F``.
    """
    S0 = dfs.S0
    lams = np.array([np.trace(dagger(S0) @ m @ S0) / dfs.slow_dim for m in K.operators])
    residual = max(
        (frobenius_norm(m @ S0 - lam * S0) for m, lam in zip(K.operators, lams)), default=0.0
    )
    if check and residual > SCALAR_ACTION_TOL:
        raise AssumptionError(
            "kraus_not_scalar_on_dfs",
            f"Kraus operators do not act as scalars on the DFS (residual {residual:.3e})",
        )
    return lams, residual


def invariant_operators(L0: LindbladGenerator, R=None, tol: Tolerances = DEFAULT):
    """Orthonormal Hermitian basis of ``ker L0^*`` (conserved observables).

    Each returned ``J`` is checked against ``R^*(J) = J``.
    """
    L = liouvillian_matrix(L0)
    d = L0.dim
    tol_zero = tol.zero * max(1.0, frobenius_norm(L))
    u, s, _ = np.linalg.svd(L)
    # left singular vectors of zero singular values span ker L^dag
    kernel = u[:, s <= tol_zero]
    m = kernel.shape[1]
    cands = []
    for j in range(m):
        x = unvec(kernel[:, j], d)
        cands.append(0.5 * (x + dagger(x)))
        cands.append(0.5j * (dagger(x) - x))
    real_stack = np.array([np.concatenate([vec(c).real, vec(c).imag]) for c in cands]).T
    q, sv, _ = np.linalg.svd(real_stack, full_matrices=False)
    q = q[:, :m]
    n2 = d * d
    ops = [unvec(q[:n2, j] + 1j * q[n2:, j], d) for j in range(m)]
    ops = [0.5 * (J + dagger(J)) for J in ops]
    if R is None:
        R = steady_projector(L, tol=tol)
    radj = dagger(np.asarray(R))
    for J in ops:
        resid = frobenius_norm(unvec(radj @ vec(J), d) - J)
        if resid > PROJECTOR_TOL:
            raise NumericalError(f"invariant operator not fixed by R^* (residual {resid:.3e})")
    return ops


@dataclass(frozen=True)
class AssumptionReport:
    spectrum: Spectrum
    zero_semisimple: bool
    gap: float | None
    dfs_confirmed: bool
    slow_dim: int | None = None
    lambdas: tuple = ()
    lambda_norm_residual: float | None = None
    rp0_residual: float | None = None
    scalar_action_residual: float | None = None
    failed_check: str | None = None

    @property
    def qualifies(self) -> bool:
        return (self.failed_check is None and self.zero_semisimple
                and self.gap is not None and self.gap > 0 and self.dfs_confirmed)

    def to_dict(self) -> dict:
        return {
            "spectrum": self.spectrum.to_dict(),
            "zero_semisimple": self.zero_semisimple,
            "gap": self.gap,
            "dfs_confirmed": self.dfs_confirmed,
            "slow_dim": self.slow_dim,
            "lambda": [[float(z.real), float(z.imag)] for z in self.lambdas],
            "lambda_norm_residual": self.lambda_norm_residual,
            "rp0_residual": self.rp0_residual,
            "scalar_action_residual": self.scalar_action_residual,
            "failed_check": self.failed_check,
            "qualifies": self.qualifies,
        }


@dataclass(frozen=True)
class FastAnalysis:
    """Certified asymptotic data of a fast generator."""

    generator: LindbladGenerator
    liouvillian: np.ndarray = field(repr=False)
    spectrum: Spectrum
    R: np.ndarray = field(repr=False)
    kraus: KrausMap
    dfs: DfsData
    lambdas: np.ndarray
    report: AssumptionReport
    projector_checks: ProjectorChecks | None = None


def certify(L0: LindbladGenerator, tol: Tolerances = DEFAULT, *, cross_check=None) -> FastAnalysis:
    """Run every assumption check on a fast generator.

    Raises :class:`AssumptionError` naming the first failing check; the
    partial :class:`AssumptionReport` is attached as ``exc.report``.
    """
    L = liouvillian_matrix(L0)
    spectrum = analyze_spectrum(L, tol)
    partial = dict(spectrum=spectrum, zero_semisimple=spectrum.zero_semisimple,
                   gap=spectrum.gap, dfs_confirmed=False)

    def fail(check, message, **extra):
        report = AssumptionReport(**{**partial, **extra}, failed_check=check)
        raise AssumptionError(check, message, report)

    violation = spectrum_violation(spectrum)
    if violation == "not_dissipative":
        fail(violation, "generator has no positive spectral gap"
             if spectrum.gap is not None else "generator has no decaying modes")
    if violation:
        fail(violation, "zero eigenvalue is not semisimple")

    R, checks = steady_projector(L, spectrum, cross_check=cross_check, tol=tol, return_checks=True)
    try:
        kraus = kraus_from_choi(R, tol)
        dfs = identify_dfs(R, L0, tol)
    except AssumptionError as exc:
        fail(exc.check, str(exc))
    if dfs.slow_dim ** 2 != spectrum.zero_multiplicity_algebraic:
        fail("not_dfs", f"steady set has dimension {spectrum.zero_multiplicity_algebraic},"
             f" expected slow_dim^2 = {dfs.slow_dim ** 2}", slow_dim=dfs.slow_dim)
    partial.update(dfs_confirmed=True, slow_dim=dfs.slow_dim)
    lams, scalar_resid = kraus_eigenvalues(kraus, dfs, check=False)
    lam_resid = abs(float(np.sum(np.abs(lams) ** 2)) - 1.0)
    rp0 = frobenius_norm(kraus.apply_adjoint(dfs.P0) - np.eye(L0.dim))
    partial.update(lambdas=tuple(lams), lambda_norm_residual=lam_resid,
                   rp0_residual=rp0, scalar_action_residual=scalar_resid)
    if scalar_resid > SCALAR_ACTION_TOL:
        fail("kraus_not_scalar_on_dfs",
             f"Kraus operators do not act as scalars on the DFS (residual {scalar_resid:.3e})")
    report = AssumptionReport(**partial)
    log.debug("certified fast generator: slow_dim=%d gap=%.6g", dfs.slow_dim, spectrum.gap)
    return FastAnalysis(L0, L, spectrum, R, kraus, dfs, lams, report, checks)
