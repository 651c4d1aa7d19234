"""Full-versus-reduced trajectory comparison."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import FastAnalysis, certify
from .config import DEFAULT, Tolerances
from .errors import ModelError, NumericalError
from .operators import (
    LindbladGenerator,
    dagger,
    liouvillian_matrix,
    matrix_exponential,
    trace_norm,
    unvec,
    vec,
)
from .reduction import ReducedModel, build_reduced_model, kraus_parametrization

log = logging.getLogger(__name__)

DEFAULT_POINTS = 400


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return 0.5 * trace_norm(a - b)


def nearest_density(rho):
    """Clip negative eigenvalues and renormalize; returns ``(rho, clipped_mass)``."""
    rho = 0.5 * (rho + dagger(rho))
    w, v = np.linalg.eigh(rho)
    clipped = float(-np.sum(w[w < 0]))
    w = np.clip(w, 0.0, None)
    out = (v * w) @ dagger(v)
    return out / np.trace(out).real, clipped


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    # largest Hermiticity/trace correction applied at any step
    max_correction: float = 0.0

    def __len__(self):
        return len(self.times)

    @property
    def traces(self):
        return np.trace(self.states, axis1=1, axis2=2).real

    @property
    def min_eigenvalues(self):
        herm = 0.5 * (self.states + dagger(self.states))
        return np.linalg.eigvalsh(herm)[:, 0]


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d sequence")
    if times[0] < 0:
        raise ValueError("times must start at t >= 0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def propagate(gen: LindbladGenerator, rho0, times, *, renormalize: bool = True) -> Trajectory:
    """Exact exponential stepping of ``d rho/dt = L(rho)`` from ``times[0]``.

    On a uniform grid the one-step propagator is computed once and reused.
    With ``renormalize`` each state is re-Hermitized and rescaled to the
    initial trace; the largest correction is kept on the trajectory.
    """
    times = _check_times(times)
    rho0 = np.asarray(rho0, dtype=complex)
    L = liouvillian_matrix(gen)
    d = gen.dim
    states = np.empty((times.size, d, d), dtype=complex)
    states[0] = rho0
    tr0 = np.trace(rho0)
    steps = {}
    v = vec(rho0)
    worst = 0.0
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        key = round(dt, 12)
        if key not in steps:
            steps[key] = matrix_exponential(L, dt)
        v = steps[key] @ v
        rho = unvec(v, d)
        if not np.all(np.isfinite(rho)):
            raise NumericalError(f"state became non-finite at t = {times[k]:.6g}")
        if renormalize:
            herm = 0.5 * (rho + dagger(rho))
            corr = float(np.max(np.abs(rho - herm)))
            tr = np.trace(herm)
            if abs(tr0) > 0:
                corr = max(corr, abs(tr - tr0))
                herm = herm * (tr0 / tr)
            rho = herm
            worst = max(worst, corr)
            v = vec(rho)
        states[k] = rho
    if worst > 0:
        log.debug("propagate: largest renormalization correction %.3e", worst)
    return Trajectory(times, states, worst)


@dataclass(frozen=True)
class ComparisonReport:
    epsilon: float
    order: int
    times: np.ndarray
    trace_distance: np.ndarray
    max_error: float
    final_error: float
    full_trace: np.ndarray = field(default=None, repr=False)
    full_min_eig: np.ndarray = field(default=None, repr=False)
    clipped_mass: float = 0.0
    lifted_min_eig: float = 0.0

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "order": self.order,
            "horizon": float(self.times[-1]),
            "points": int(self.times.size),
            "max_error": self.max_error,
            "final_error": self.final_error,
            "clipped_mass": self.clipped_mass,
            "lifted_min_eig": self.lifted_min_eig,
            "max_trace_drift": float(np.max(np.abs(self.full_trace - 1.0))),
            "min_full_eig": float(np.min(self.full_min_eig)),
        }

    def write_csv(self, fh):
        """RFC-4180 CSV with columns t, error, trace, min_eig."""
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["t", "error", "trace", "min_eig"])
        for row in zip(self.times, self.trace_distance, self.full_trace, self.full_min_eig):
            writer.writerow([format(float(x), ".17g") for x in row])


def full_generator(fast: LindbladGenerator, slow: LindbladGenerator, epsilon: float):
    return fast + slow.scaled(epsilon)


def compare(fast: LindbladGenerator, slow: LindbladGenerator, model: ReducedModel, rho_s0,
            times, epsilon: float | None = None) -> ComparisonReport:
    """Propagate full and reduced dynamics and measure their trace distance.

    The full system starts on the approximate slow manifold: the lifted
    state ``K(rho_s0)``, with negative eigenvalues clipped.
    """
    eps = model.epsilon if epsilon is None else float(epsilon)
    times = _check_times(times)
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    lifted = kraus_parametrization(model, rho_s0, eps)
    lifted_min = float(np.linalg.eigvalsh(0.5 * (lifted + dagger(lifted)))[0])
    rho_full0, clipped = nearest_density(lifted)
    if clipped > 0:
        log.debug("compare: clipped %.3e of negative mass from the lifted state", clipped)
    full = propagate(full_generator(fast, slow, eps), rho_full0, times)
    reduced = propagate(model.generator(eps), rho_s0, times)
    errors = np.array([
        trace_distance(rf, kraus_parametrization(model, rs, eps))
        for rf, rs in zip(full.states, reduced.states)
    ])
    return ComparisonReport(
        epsilon=eps,
        order=model.order,
        times=times,
        trace_distance=errors,
        max_error=float(np.max(errors)),
        final_error=float(errors[-1]),
        full_trace=full.traces,
        full_min_eig=full.min_eigenvalues,
        clipped_mass=clipped,
        lifted_min_eig=lifted_min,
    )


@dataclass(frozen=True)
class SweepResult:
    reports: tuple
    slope: float | None
    intercept: float | None
    model: ReducedModel = field(repr=False)

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "order": self.model.order,
            "points": [r.summary() for r in self.reports],
        }


def horizon_for(policy, epsilon: float, gap: float) -> float:
    """Final time for ``("fixed", T)`` or ``("slow", tau)``; ``T=None`` means ``10/gap``."""
    kind, value = policy
    if kind == "fixed":
        return 10.0 / gap if value is None else float(value)
    if kind == "slow":
        if epsilon <= 0:
            raise ModelError("slow-time horizon needs epsilon > 0")
        return float(value) / epsilon**2
    raise ModelError(f"unknown horizon policy {kind!r}")


def fit_slope(epsilons, errors):
    """Least-squares slope of ``log(error)`` against ``log(epsilon)``."""
    pts = [(math.log(e), math.log(r)) for e, r in zip(epsilons, errors) if e > 0 and r > 0]
    if len(pts) < 2:
        return None, None
    x, y = np.array(pts).T
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def epsilon_sweep(fast: LindbladGenerator, slow: LindbladGenerator, rho_s0, epsilons,
                  horizon=("fixed", None), *, order: int = 2, points: int = DEFAULT_POINTS,
                  jobs: int = 1, tol: Tolerances = DEFAULT,
                  analysis: FastAnalysis | None = None, strict: bool = False) -> SweepResult:
    """Compare full and reduced dynamics across epsilon and fit the error exponent."""
    epsilons = [float(e) for e in epsilons]
    if len(epsilons) < 3:
        raise ModelError("need >= 3 epsilons")
    if any(e < 0 for e in epsilons):
        raise ModelError("epsilons must be nonnegative")
    if analysis is None:
        analysis = certify(fast, tol)
    gap = analysis.spectrum.gap
    positive = [e for e in epsilons if e > 0]
    if positive and max(positive) / min(positive) < 10:
        warnings.warn("epsilon values span less than one decade; the fitted slope is coarse",
                      stacklevel=2)
    strength = 2 * np.linalg.norm(slow.hamiltonian, 2) + sum(
        np.linalg.norm(L, 2) ** 2 for L in slow.jumps)
    if max(epsilons) * strength >= gap / 4:
        warnings.warn(f"largest epsilon * ||L1|| = {max(epsilons) * strength:.3g} is not"
                      f" below gap/4 = {gap / 4:.3g}", stacklevel=2)
    base = build_reduced_model(fast, slow, max(epsilons), order, tol=tol,
                               analysis=analysis, strict=strict)

    def run(eps):
        t_end = horizon_for(horizon, eps, gap)
        times = np.linspace(0.0, t_end, points)
        return compare(fast, slow, base.with_epsilon(eps), rho_s0, times)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(run, epsilons))
    else:
        reports = [run(e) for e in epsilons]
    slope, intercept = fit_slope(epsilons, [r.max_error for r in reports])
    return SweepResult(tuple(reports), slope, intercept, base)


@dataclass(frozen=True)
class InvariantCheck:
    name: str
    value: float
    threshold: float
    # "max": pass when value <= threshold; "min": when value >= threshold
    kind: str = "max"

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.kind == "max" else self.value >= self.threshold

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "kind": self.kind, "passed": self.passed}


RESIDUAL_THRESHOLDS = {
    "order1": 1e-9,
    "order2": 1e-8,
    "sum_AdA": 1e-9,
    "sum_BdB": 1e-9,
    "rp0": 1e-8,
    "lambda_norm": 1e-8,
}
TRACE_DRIFT_TOL = 1e-9
MIN_EIG_TOL = -1e-8
CHOI_TOL = -1e-9


def generator_structure_checks(gen: LindbladGenerator, times=(0.1, 1.0, 10.0)) -> list:
    """Trace and Hermiticity preservation of ``gen`` and Choi positivity of ``exp(t gen)``."""
    from .operators import choi_matrix

    d = gen.dim
    L = liouvillian_matrix(gen)
    tp = float(np.linalg.norm(dagger(L) @ vec(np.eye(d))))
    hp = 0.0
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            lhs = unvec(L @ vec(e.T.copy()), d)
            hp = max(hp, float(np.max(np.abs(lhs - dagger(unvec(L @ vec(e), d))))))
    choi_min = min(
        float(np.linalg.eigvalsh(_herm(choi_matrix(matrix_exponential(L, t))))[0]) for t in times
    )
    return [
        InvariantCheck("trace_preservation", tp, 1e-9),
        InvariantCheck("hermiticity_preservation", hp, 1e-9),
        InvariantCheck("choi_min_eig", choi_min, CHOI_TOL, "min"),
    ]


def _herm(a):
    return 0.5 * (a + dagger(a))


def invariant_suite(model: ReducedModel, reports=(), epsilon: float | None = None) -> list:
    """Every check the CLI gates its exit status on."""
    checks = [InvariantCheck(f"residual_{k}" if k.startswith("order") else k, float(v), t)
              for k, t in RESIDUAL_THRESHOLDS.items()
              if (v := model.residuals.get(k)) is not None]
    checks += generator_structure_checks(model.generator(epsilon))
    for r in reports:
        tag = f"[eps={r.epsilon:g}]"
        checks.append(InvariantCheck(f"trace_drift{tag}",
                                     float(np.max(np.abs(r.full_trace - 1.0))), TRACE_DRIFT_TOL))
        checks.append(InvariantCheck(f"min_eig{tag}", float(np.min(r.full_min_eig)),
                                     MIN_EIG_TOL, "min"))
        checks.append(InvariantCheck(f"trace_distance_range{tag}",
                                     float(np.max(r.trace_distance)), 1.0 + 1e-9))
    return checks
