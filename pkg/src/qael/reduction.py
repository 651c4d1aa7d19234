"""Effective slow Lindbladian to first and second order in epsilon.

First order holds for any perturbing generator: the Zeno Hamiltonian
``S0^dag H1 S0`` plus jump operators ``A_mu = S0^dag M_mu L1 S0``.
Second order is available when the fast generator is a single jump ``L0``
with no Hamiltonian and the perturbation is a Hamiltonian ``H1``; then

    C1   = 2 (L0^dag L0)^+ H1 P0 + 2 P0 H1 (L0^dag L0)^+
    B_mu = 2 S0^dag M_mu L0 (L0^dag L0)^+ H1 S0

with ``^+`` the Moore-Penrose pseudo-inverse. The map from slow states back
to the full space is ``K0(rho_s) + eps K1(rho_s)`` with
``K1(rho_s) = -i [C1, S0 rho_s S0^dag]``.

Operators are stored without epsilon so one elimination serves a whole
sweep; :meth:`ReducedModel.generator` folds epsilon in.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import DfsData, FastAnalysis, KrausMap, certify
from .config import DEFAULT, Tolerances
from .errors import DimensionError, PreconditionError
from .operators import (
    LindbladGenerator,
    apply_generator,
    commutator,
    dagger,
    dissipator_matrix,
    frobenius_norm,
    is_hermitian,
    pseudo_inverse_psd,
)

log = logging.getLogger(__name__)

ANNIHILATION_TOL = 1e-9


def _hermitize(a):
    return 0.5 * (a + dagger(a))


def _fix_phase(m):
    flat = m.ravel()
    mag = np.abs(flat)
    idx = int(np.argmax(mag >= mag.max() * (1 - 1e-6)))
    return m * (abs(flat[idx]) / flat[idx])


def zeno_hamiltonian(H1, dfs: DfsData):
    """Compression ``S0^dag H1 S0`` of the perturbing Hamiltonian onto the DFS."""
    H1 = np.asarray(H1, dtype=complex)
    if H1.shape != (dfs.dim, dfs.dim):
        raise DimensionError(f"H1 has shape {H1.shape}, DFS lives in dim {dfs.dim}")
    return _hermitize(dfs.compress(H1))


def first_order_jumps(L1, K: KrausMap, dfs: DfsData, tol: Tolerances = DEFAULT):
    L1 = np.asarray(L1, dtype=complex)
    if L1.shape != (dfs.dim, dfs.dim):
        raise DimensionError(f"L1 has shape {L1.shape}, DFS lives in dim {dfs.dim}")
    threshold = tol.jump_drop * frobenius_norm(L1)
    ops = [dagger(dfs.S0) @ m @ L1 @ dfs.S0 for m in K.operators]
    return [a for a in ops if frobenius_norm(a) > threshold]


def first_order_generator(slow_gen: LindbladGenerator, K: KrausMap, dfs: DfsData,
                          tol: Tolerances = DEFAULT) -> LindbladGenerator:
    """The order-one slow generator on the DFS, by linearity over jump channels."""
    jumps = []
    for L1 in slow_gen.jumps:
        jumps.extend(first_order_jumps(L1, K, dfs, tol))
    return LindbladGenerator(zeno_hamiltonian(slow_gen.hamiltonian, dfs), tuple(jumps))


def order2_precondition_failure(fast: LindbladGenerator, slow: LindbladGenerator,
                                dfs: DfsData | None = None) -> str | None:
    """Reason why the second-order formulas do not apply, or ``None``."""
    if len(fast.jumps) != 1:
        return f"fast generator must have exactly one jump operator (has {len(fast.jumps)})"
    scale = max(1.0, frobenius_norm(fast.jumps[0]))
    if np.max(np.abs(fast.hamiltonian), initial=0.0) > 1e-12 * scale:
        return "fast generator has a nonzero Hamiltonian"
    if any(np.max(np.abs(L), initial=0.0) > 0 for L in slow.jumps):
        return "slow generator has jump operators; second order needs a Hamiltonian-only perturbation"
    if dfs is not None:
        resid = frobenius_norm(fast.jumps[0] @ dfs.S0)
        if resid > ANNIHILATION_TOL * scale:
            return f"fast jump operator does not annihilate the DFS (||L0 S0|| = {resid:.3e})"
    return None


def _require_order2(L0, dfs):
    resid = frobenius_norm(L0 @ dfs.S0)
    if resid > ANNIHILATION_TOL * max(1.0, frobenius_norm(L0)):
        raise PreconditionError(
            f"fast jump operator does not annihilate the DFS (||L0 S0|| = {resid:.3e})"
        )


def c1_operator(L0, H1, dfs: DfsData, tol: Tolerances = DEFAULT):
    """Hermitian generator of the first-order correction to the slow manifold.

    The factor 2 is what makes the order-1 invariance residual vanish; a
    lift written as ``(I - i eps pinv(L0^dag L0) H1) S0`` carries only half
    of this correction.
    """
    L0 = np.asarray(L0, dtype=complex)
    H1 = np.asarray(H1, dtype=complex)
    if not is_hermitian(H1, tol.herm):
        raise PreconditionError("H1 is not Hermitian")
    _require_order2(L0, dfs)
    pinv = pseudo_inverse_psd(dagger(L0) @ L0, tol.rel_tol_pinv, tol)
    c1 = 2 * pinv @ H1 @ dfs.P0 + 2 * dfs.P0 @ H1 @ pinv
    return _hermitize(c1)


def second_order_jumps(L0, H1, K: KrausMap, dfs: DfsData, tol: Tolerances = DEFAULT):
    """Jump operators of the second-order slow dissipator (zero-norm ones dropped)."""
    L0 = np.asarray(L0, dtype=complex)
    H1 = np.asarray(H1, dtype=complex)
    _require_order2(L0, dfs)
    pinv = pseudo_inverse_psd(dagger(L0) @ L0, tol.rel_tol_pinv, tol)
    g = 2 * L0 @ pinv @ H1 @ dfs.S0
    # relative to the inputs, not to g, which is pure noise when H1 P0 = P0 H1 P0
    threshold = tol.jump_drop * 2 * frobenius_norm(L0) * frobenius_norm(pinv) * frobenius_norm(H1)
    ops = [dagger(dfs.S0) @ m @ g for m in K.operators]
    return [b for b in ops if frobenius_norm(b) > threshold]


def consolidate_jumps(ops, tol: Tolerances = DEFAULT):
    """Fewest jump operators generating the same dissipator.

    The operators are unitarily remixed along the eigenvectors of their Gram
    matrix ``G_mn = tr(B_m^dag B_n)``; combinations with weight at or below
    ``tol.consolidate * lambda_max`` are dropped.
    """
    ops = [np.asarray(b, dtype=complex) for b in ops]
    if not ops:
        return []
    stack = np.array([b.ravel() for b in ops]).T  # (d*d, m)
    gram = dagger(stack) @ stack
    w, v = np.linalg.eigh(_hermitize(gram))
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    if w[0] <= 0:
        return []
    shape = ops[0].shape
    out = []
    for lam, col in zip(w, v.T):
        if lam <= tol.consolidate * w[0]:
            break
        out.append(_fix_phase((stack @ col).reshape(shape)))
    return out


def dissipator_distance(ops_a, ops_b, dim: int) -> float:
    """Frobenius distance between the dissipator superoperators of two jump families."""
    return frobenius_norm(dissipator_matrix(list(ops_a), dim) - dissipator_matrix(list(ops_b), dim))


def k1_map(C1, dfs: DfsData, rho_s):
    return -1j * commutator(C1, dfs.embed(rho_s))


def residual_order1(fast: LindbladGenerator, slow: LindbladGenerator, dfs: DfsData,
                    Ls1: LindbladGenerator, C1=None, kraus: KrausMap | None = None) -> float:
    """Largest violation of the order-one invariance equation over slow matrix units.

    With ``C1`` the full equation ``L0(K1 E) + L1(K0 E) = K0(Ls1 E)`` is
    tested; otherwise its ``R``-projection, which needs ``kraus``.
    """
    if C1 is None and kraus is None:
        raise ValueError("either C1 or kraus is required")
    worst = 0.0
    for e in dfs.matrix_units():
        rho0 = dfs.embed(e)
        target = dfs.embed(apply_generator(Ls1, e))
        if C1 is not None:
            lhs = apply_generator(fast, k1_map(C1, dfs, e)) + apply_generator(slow, rho0)
        else:
            lhs = kraus.apply(apply_generator(slow, rho0))
        worst = max(worst, frobenius_norm(lhs - target))
    return worst


def _order2_terms(slow, dfs, kraus, C1, Ls1):
    for e in dfs.matrix_units():
        k1e = k1_map(C1, dfs, e)
        k1_ls1 = k1_map(C1, dfs, apply_generator(Ls1, e))
        yield e, kraus.apply(apply_generator(slow, k1e)), kraus.apply(k1_ls1)


def residual_order2(slow: LindbladGenerator, dfs: DfsData, kraus: KrausMap,
                    model: "ReducedModel") -> float:
    """Distance between the projected order-two equation and the dissipator of ``B_ops``."""
    if model.C1 is None:
        raise PreconditionError("model has no second-order data")
    Ls1 = model.first_order()
    Ls2 = LindbladGenerator(np.zeros((dfs.slow_dim,) * 2), tuple(model.B_ops))
    worst = 0.0
    for e, r_l1k1, r_k1ls1 in _order2_terms(slow, dfs, kraus, model.C1, Ls1):
        formula = dfs.compress(r_l1k1 - r_k1ls1)
        worst = max(worst, frobenius_norm(formula - apply_generator(Ls2, e)))
    return worst


def projected_k1_residual(slow, dfs, kraus, model) -> float:
    """``max ||R(K1(Ls1(E)))||``, which vanishes identically in exact arithmetic."""
    Ls1 = model.first_order()
    return max((frobenius_norm(r) for _, _, r in _order2_terms(slow, dfs, kraus, model.C1, Ls1)),
               default=0.0)


@dataclass(frozen=True)
class ReducedModel:
    slow_dim: int
    epsilon: float
    S0: np.ndarray = field(repr=False)
    H_s1: np.ndarray
    A_ops: tuple = ()
    C1: np.ndarray | None = field(default=None, repr=False)
    B_ops: tuple = ()
    order: int = 1
    residuals: dict = field(default_factory=dict)
    notes: tuple = ()

    @property
    def is_trivial(self) -> bool:
        """A one-dimensional slow space carries no dynamics at any order."""
        return self.slow_dim == 1

    def with_epsilon(self, epsilon: float) -> "ReducedModel":
        return dataclasses.replace(self, epsilon=float(epsilon))

    def first_order(self) -> LindbladGenerator:
        return LindbladGenerator(self.H_s1, tuple(self.A_ops))

    def generator(self, epsilon: float | None = None, consolidate: bool = True,
                  tol: Tolerances = DEFAULT) -> LindbladGenerator:
        """``eps Ls1 + eps^2 Ls2`` as a generator on the slow space.

        On a one-dimensional slow space every Lindbladian vanishes, and the
        zero generator is returned outright.
        """
        eps = self.epsilon if epsilon is None else float(epsilon)
        if self.is_trivial:
            return LindbladGenerator.zero(1)
        a_ops, b_ops = list(self.A_ops), list(self.B_ops)
        if consolidate:
            a_ops, b_ops = consolidate_jumps(a_ops, tol), consolidate_jumps(b_ops, tol)
        jumps = tuple(np.sqrt(eps) * a for a in a_ops) + tuple(eps * b for b in b_ops)
        return LindbladGenerator(eps * self.H_s1, jumps)

    def lift(self, rho_s, epsilon: float | None = None):
        return kraus_parametrization(self, rho_s, epsilon)


def kraus_parametrization(model: ReducedModel, rho_s, epsilon: float | None = None):
    """``K0(rho_s) + eps K1(rho_s)``; exactly trace one, positive only to O(eps^2)."""
    eps = model.epsilon if epsilon is None else float(epsilon)
    rho_s = np.asarray(rho_s, dtype=complex)
    rho0 = model.S0 @ rho_s @ dagger(model.S0)
    if model.C1 is None or eps == 0:
        return rho0
    return rho0 - 1j * eps * commutator(model.C1, rho0)


def build_reduced_model(fast: LindbladGenerator, slow: LindbladGenerator, epsilon: float,
                        order: int = 2, *, tol: Tolerances = DEFAULT,
                        analysis: FastAnalysis | None = None, strict: bool = False,
                        cross_check=None) -> ReducedModel:
    """Eliminate the fast dynamics and return the reduced model with its residuals.

    An order-2 request on a model outside the single-jump/Hamiltonian class
    falls back to order 1 with a note, or raises
    :class:`PreconditionError` when ``strict``.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if fast.dim != slow.dim:
        raise DimensionError(f"fast dim {fast.dim} != slow dim {slow.dim}")
    if analysis is None:
        analysis = certify(fast, tol, cross_check=cross_check)
    dfs, kraus = analysis.dfs, analysis.kraus
    notes = []

    Ls1 = first_order_generator(slow, kraus, dfs, tol)
    residuals = {
        "rp0": analysis.report.rp0_residual,
        "lambda_norm": analysis.report.lambda_norm_residual,
        "H_s1_hermiticity": float(np.max(np.abs(Ls1.hamiltonian - dagger(Ls1.hamiltonian)))),
    }
    sum_ada = 0.0
    for L1 in slow.jumps:
        a_all = [dagger(dfs.S0) @ m @ L1 @ dfs.S0 for m in kraus.operators]
        lhs = sum(dagger(a) @ a for a in a_all)
        sum_ada = max(sum_ada, frobenius_norm(lhs - dfs.compress(dagger(L1) @ L1)))
    residuals["sum_AdA"] = sum_ada

    C1, B_ops = None, ()
    if order == 2:
        reason = order2_precondition_failure(fast, slow, dfs)
        if reason is not None:
            if strict:
                raise PreconditionError(reason)
            notes.append(f"second order unavailable, reduced to order 1: {reason}")
            log.info("order 2 unavailable: %s", reason)
            order = 1
    if order == 2:
        L0, H1 = fast.jumps[0], slow.hamiltonian
        C1 = c1_operator(L0, H1, dfs, tol)
        B_ops = tuple(second_order_jumps(L0, H1, kraus, dfs, tol))
        pinv = pseudo_inverse_psd(dagger(L0) @ L0, tol.rel_tol_pinv, tol)
        bdb = sum((dagger(b) @ b for b in B_ops), np.zeros((dfs.slow_dim,) * 2, dtype=complex))
        residuals["sum_BdB"] = frobenius_norm(bdb - 4 * dfs.compress(H1 @ pinv @ H1))
        residuals["C1_block"] = frobenius_norm(dfs.P0 @ C1 @ dfs.P0)
        residuals["order1"] = residual_order1(fast, slow, dfs, Ls1, C1=C1)
    else:
        residuals["order1"] = residual_order1(fast, slow, dfs, Ls1, kraus=kraus)

    model = ReducedModel(
        slow_dim=dfs.slow_dim,
        epsilon=float(epsilon),
        S0=dfs.S0,
        H_s1=Ls1.hamiltonian,
        A_ops=tuple(Ls1.jumps),
        C1=C1,
        B_ops=B_ops,
        order=order,
    )
    if order == 2:
        residuals["order2"] = residual_order2(slow, dfs, kraus, model)
        residuals["order2_projected_k1"] = projected_k1_residual(slow, dfs, kraus, model)
    if model.is_trivial:
        notes.append("slow space is one-dimensional: the reduced generator is identically zero")
    return dataclasses.replace(model, residuals=residuals, notes=tuple(notes))
