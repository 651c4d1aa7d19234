"""Built-in models: a low-Q cavity coupled to a qubit, and desk-scale companions.

Every builder first writes a model document in the file format and then
evaluates it through :func:`qael.modelspec.model_from_dict`, so a model
built here and the same document loaded from disk are bit-identical.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .asymptotics import certify
from .config import DEFAULT, Tolerances
from .errors import ModelError
from .modelspec import ModelDefinition, _sigma, format_complex, model_from_dict
from .operators import (
    LindbladGenerator,
    apply_generator,
    commutator,
    dagger,
    frobenius_norm,
    kron,
)
from .reduction import build_reduced_model, consolidate_jumps

TRUNCATIONS = (8, 12, 16, 24)
QUANTITIES = ("zeno_coeff", "damping_rate", "lambda_norm")
CONVERGENCE_REL = 1e-6
EQUIVALENCE_TOL = 1e-8


@dataclass(frozen=True)
class CavityQubitParams:
    """Cavity decay ``kappa``, coupling ``g``, drive ``u`` and Fock truncation."""

    kappa: float = 10.0
    g: float = 0.1
    u: complex = 1.0
    n_trunc: int = 16

    def __post_init__(self):
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "u", complex(self.u))
        if not self.kappa > 0:
            raise ModelError(f"kappa must be positive, got {self.kappa}")
        if self.g < 0:
            raise ModelError(f"g must be nonnegative, got {self.g}")
        if int(self.n_trunc) != self.n_trunc or self.n_trunc < 8:
            raise ModelError(f"n_trunc must be an integer >= 8, got {self.n_trunc}")
        a = abs(self.alpha)
        if a * a + 6 * a >= self.n_trunc:
            raise ModelError(
                f"truncation inadequate: |alpha|^2 + 6|alpha| = {a * a + 6 * a:.3g}"
                f" is not below n_trunc = {self.n_trunc}"
            )
        if self.g / self.kappa > 0.2:
            warnings.warn(f"g/kappa = {self.g / self.kappa:.3g} is outside the perturbative"
                          " regime (> 0.2)", stacklevel=3)

    @property
    def alpha(self) -> complex:
        return 2 * self.u / self.kappa

    def with_truncation(self, n: int) -> "CavityQubitParams":
        return CavityQubitParams(self.kappa, self.g, self.u, n)


def matrix_source(m) -> str:
    """Exact model-language text for a numeric matrix, as a sum of ``basis`` terms."""
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    terms = [f"{format_complex(m[i, j])}*basis({n}, {i}, {j})"
             for i in range(n) for j in range(n) if m[i, j] != 0]
    return " + ".join(terms) if terms else "0"


def _cavity_symbols(n):
    return {
        "a": f"kron(destroy({n}), eye(2))",
        "b": f"kron(eye({n}), sigmam)",
        "id": f"kron(eye({n}), eye(2))",
    }


def cavity_qubit_document(p: CavityQubitParams, H_B: str | None = None) -> dict:
    """Model document for the cavity-qubit system, optionally with a slow ``I (x) H_B``."""
    symbols = _cavity_symbols(p.n_trunc)
    slow_h = "a'*b + a*b'"
    if H_B is not None:
        if p.g == 0:
            raise ModelError("a slow H_B term needs g > 0")
        symbols["hb"] = f"kron(eye({p.n_trunc}), {H_B})"
        slow_h += f" + {format_complex(1.0 / p.g)}*hb"
    doc = {
        "factors": [{"name": "cavity", "dim": p.n_trunc}, {"name": "qubit", "dim": 2}],
        "symbols": symbols,
        "fast": {
            "hamiltonian": "0",
            "jumps": [f"{format_complex(math.sqrt(p.kappa))}*(a - {format_complex(p.alpha)}*id)"],
        },
        "slow": {"hamiltonian": slow_h, "jumps": []},
        "epsilon": p.g,
        "options": {
            "model": "cavity-qubit",
            "kappa": p.kappa,
            "g": p.g,
            "u": [p.u.real, p.u.imag],
            "n_trunc": p.n_trunc,
        },
    }
    if H_B is not None:
        doc["options"]["H_B"] = H_B
    return doc


def drive_equivalence_residual(p: CavityQubitParams, block: int | None = None) -> float:
    """Compare ``kappa D[a - alpha]`` with ``[u a^dag - u* a, .] + kappa D[a]``.

    Both are applied to every matrix unit with Fock indices up to
    ``block`` (default ``n_trunc - 4``); returns the largest Frobenius gap.
    """
    n = p.n_trunc
    block = n - 4 if block is None else block
    a = kron(np.diag(np.sqrt(np.arange(1, n)), 1), np.eye(2))
    eye = np.eye(2 * n)
    shifted = LindbladGenerator(np.zeros((2 * n, 2 * n)), (math.sqrt(p.kappa) * (a - p.alpha * eye),))
    damped = LindbladGenerator(np.zeros((2 * n, 2 * n)), (math.sqrt(p.kappa) * a,))
    drive = p.u * dagger(a) - np.conj(p.u) * a
    worst = 0.0
    idx = range(2 * (block + 1))
    for i in idx:
        for j in idx:
            e = np.zeros((2 * n, 2 * n), dtype=complex)
            e[i, j] = 1.0
            lhs = apply_generator(shifted, e)
            rhs = commutator(drive, e) + apply_generator(damped, e)
            worst = max(worst, frobenius_norm(lhs - rhs))
    return worst


def build_cavity_qubit(p: CavityQubitParams) -> ModelDefinition:
    """Fast cavity damping ``sqrt(kappa)(a - alpha)``, slow exchange ``a^dag b + a b^dag``, ``eps = g``."""
    resid = drive_equivalence_residual(p)
    if resid > EQUIVALENCE_TOL:
        raise ModelError(f"displaced-damping equivalence fails (residual {resid:.3e})")
    return model_from_dict(cavity_qubit_document(p), allow_zero_epsilon=True)


def build_with_slow_B_hamiltonian(p: CavityQubitParams, H_B: str = "sigmaz") -> ModelDefinition:
    """Cavity-qubit model whose slow Hamiltonian also carries ``(1/g) I (x) H_B``.

    After scaling by ``eps = g`` the extra term is ``I (x) H_B`` at full
    strength. ``H_B`` is model-language source for a qubit operator.
    """
    return model_from_dict(cavity_qubit_document(p, H_B), allow_zero_epsilon=True)


def expected_reduced_cavity_qubit(p: CavityQubitParams) -> LindbladGenerator:
    """Closed-form reduced qubit generator: Zeno drive plus ``4 g^2 / kappa`` decay."""
    sp, sm = _sigma("sigmap"), _sigma("sigmam")
    h = p.g * (p.alpha * sp + np.conj(p.alpha) * sm)
    if p.g == 0:
        return LindbladGenerator(h, ())
    return LindbladGenerator(h, (math.sqrt(4 * p.g**2 / p.kappa) * sm,))


def purcell_document(kappa: float, g: float) -> dict:
    return {
        "factors": [{"name": "A", "dim": 2}, {"name": "B", "dim": 2}],
        "fast": {
            "hamiltonian": "0",
            "jumps": [f"{format_complex(math.sqrt(kappa))}*kron(sigmam, eye(2))"],
        },
        "slow": {"hamiltonian": "kron(sigmap, sigmam) + kron(sigmam, sigmap)", "jumps": []},
        "epsilon": float(g),
        "options": {"model": "purcell", "kappa": float(kappa), "g": float(g)},
    }


def build_purcell_two_qubit(kappa: float, g: float) -> ModelDefinition:
    """A damped qubit A exchanging excitations with a qubit B.

    The slow space is ``|g>_A (x) C^2``; B inherits decay at rate ``4 g^2 / kappa``.
    """
    if not kappa > 0 or g < 0:
        raise ModelError("need kappa > 0 and g >= 0")
    return model_from_dict(purcell_document(kappa, g), allow_zero_epsilon=True)


def _random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_model_document(seed: int, dim: int | None = None, slow_dim: int | None = None,
                          slow_jumps: int = 0, epsilon: float = 0.01) -> dict:
    """A random model whose fast part is a single jump ``X (I - P0)``.

    ``P0`` projects onto a randomly oriented ``slow_dim``-dimensional
    subspace, which the jump annihilates. The slow part is a random
    Hamiltonian plus ``slow_jumps`` random jump operators.
    """
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(3, 13)) if dim is None else int(dim)
    if slow_dim is None:
        slow_dim = int(rng.integers(1, min(4, dim - 1) + 1))
    if not 1 <= slow_dim < dim <= 12:
        raise ModelError(f"need 1 <= slow_dim < dim <= 12, got slow_dim={slow_dim}, dim={dim}")
    v = _random_unitary(rng, dim)[:, :slow_dim]
    q = np.eye(dim) - v @ dagger(v)
    x = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2 * dim)
    L0 = x @ q
    h = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H1 = (h + dagger(h)) / (2 * math.sqrt(2 * dim))
    jumps = [(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2 * dim)
             for _ in range(slow_jumps)]
    return {
        "factors": [{"name": "system", "dim": dim}],
        "fast": {"hamiltonian": "0", "jumps": [matrix_source(L0)]},
        "slow": {"hamiltonian": matrix_source(H1), "jumps": [matrix_source(j) for j in jumps]},
        "epsilon": float(epsilon),
        "options": {"model": "random", "seed": int(seed), "slow_dim": slow_dim},
    }


def random_qualifying_model(seed: int, **kwargs) -> ModelDefinition:
    return model_from_dict(random_model_document(seed, **kwargs))


EXAMPLES = {
    "cavity-qubit": "low-Q cavity damping a qubit (kappa, g, u, n_trunc)",
    "cavity-qubit-hb": "cavity-qubit with an extra slow qubit Hamiltonian (adds --hb)",
    "purcell": "two qubits, one strongly damped (kappa, g)",
    "random": "random qualifying single-jump model (seed, dim)",
}


def example_document(name: str, *, kappa=10.0, g=0.1, u=1.0, n_trunc=16, hb="sigmaz",
                     seed=0, dim=None) -> dict:
    if name == "cavity-qubit":
        return cavity_qubit_document(CavityQubitParams(kappa, g, u, n_trunc))
    if name == "cavity-qubit-hb":
        return cavity_qubit_document(CavityQubitParams(kappa, g, u, n_trunc), hb)
    if name == "purcell":
        return purcell_document(kappa, g)
    if name == "random":
        return random_model_document(seed, dim=dim)
    raise ModelError(f"unknown example {name!r}; choose from {', '.join(sorted(EXAMPLES))}")


@functools.lru_cache(maxsize=16)
def _cavity_reduction(kappa, g, u, n, tol):
    p = CavityQubitParams(kappa, g, u, n)
    fast, slow, eps, _ = build_cavity_qubit(p)
    analysis = certify(fast, tol)
    return build_reduced_model(fast, slow, eps, 2, tol=tol, analysis=analysis), analysis


def _quantity(model, analysis, quantity, g):
    if quantity == "zeno_coeff":
        return complex(model.H_s1[1, 0])
    if quantity == "damping_rate":
        if model.order < 2:
            return None
        b = consolidate_jumps(model.B_ops)
        return float(g**2 * sum(frobenius_norm(x) ** 2 for x in b))
    if quantity == "lambda_norm":
        return float(np.sum(np.abs(analysis.lambdas) ** 2))
    raise ModelError(f"unknown quantity {quantity!r}; choose from {', '.join(QUANTITIES)}")


@dataclass(frozen=True)
class ConvergenceTable:
    quantity: str
    rows: tuple  # (n_trunc, value); value None where the quantity is unavailable
    differences: tuple  # |value_k - value_{k-1}|, None next to a missing value
    converged: bool
    notes: tuple = ()

    def value(self, n_trunc: int):
        return dict(self.rows)[n_trunc]

    def to_dict(self) -> dict:
        def enc(v):
            return [v.real, v.imag] if isinstance(v, complex) else v
        return {
            "quantity": self.quantity,
            "rows": [[n, enc(v)] for n, v in self.rows],
            "differences": list(self.differences),
            "converged": self.converged,
            "notes": list(self.notes),
        }


def truncation_convergence(p: CavityQubitParams, quantity: str, truncations=TRUNCATIONS,
                           tol: Tolerances = DEFAULT) -> ConvergenceTable:
    """Recompute a reduced-model quantity across Fock truncations.

    Convergence means the last successive relative change is below 1e-6.
    The damping rate needs the second-order formulas, which refuse a
    truncation too small for the fast jump to annihilate the truncated
    coherent state; such rows hold ``None``.
    """
    if quantity not in QUANTITIES:
        raise ModelError(f"unknown quantity {quantity!r}; choose from {', '.join(QUANTITIES)}")
    rows, notes = [], []
    for n in truncations:
        model, analysis = _cavity_reduction(p.kappa, p.g, p.u, int(n), tol)
        value = _quantity(model, analysis, quantity, p.g)
        if value is None:
            notes.append(f"n_trunc={n}: " + "; ".join(model.notes))
        rows.append((int(n), value))
    diffs = tuple(None if a[1] is None or b[1] is None else float(abs(b[1] - a[1]))
                  for a, b in zip(rows, rows[1:]))
    last = rows[-1][1]
    if not diffs:
        converged = last is not None
    else:
        converged = (diffs[-1] is not None
                     and diffs[-1] <= CONVERGENCE_REL * max(abs(last), 1e-300))
    return ConvergenceTable(quantity, tuple(rows), diffs, converged, tuple(notes))
