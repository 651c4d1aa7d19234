"""Acceptance criteria 1-7, each printing one PASS/FAIL line."""

import json
import math
import time
import warnings

import numpy as np
import pytest

from qael.asymptotics import certify
from qael.cli import initial_state, main
from qael.models import (
    CavityQubitParams,
    build_cavity_qubit,
    build_purcell_two_qubit,
    build_with_slow_B_hamiltonian,
    random_qualifying_model,
    truncation_convergence,
)
from qael.modelspec import evaluate
from qael.operators import LindbladGenerator, dagger, frobenius_norm
from qael.reduction import (
    build_reduced_model,
    c1_operator,
    dissipator_distance,
    first_order_jumps,
    kraus_parametrization,
    second_order_jumps,
)
from qael.simulate import epsilon_sweep, generator_structure_checks

SIGMAM = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMAP = SIGMAM.T.copy()
PARAMS = CavityQubitParams(kappa=10.0, g=0.1, u=1.0, n_trunc=16)


@pytest.fixture
def verdict(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        with capman.global_and_fixture_disabled():
            print("\n" + line)
        assert passed, line

    return emit


def _cavity_reduction(order=2):
    m = build_cavity_qubit(PARAMS)
    analysis = certify(m.fast, m.tolerances)
    return m, analysis, build_reduced_model(m.fast, m.slow, m.epsilon, order, analysis=analysis)


def _random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_criterion_1_zeno_hamiltonian(verdict):
    t0 = time.perf_counter()
    _, _, red = _cavity_reduction()
    elapsed = time.perf_counter() - t0
    alpha = PARAMS.alpha
    expected = alpha * SIGMAP + np.conj(alpha) * SIGMAM
    rel = frobenius_norm(red.H_s1 - expected) / frobenius_norm(expected)
    verdict(1, rel < 1e-7 and elapsed < 10.0,
            f"H_s1 relative error {rel:.2e} (< 1e-7), runtime {elapsed:.1f}s (< 10s)")


def test_criterion_2_second_order_damping(verdict):
    t0 = time.perf_counter()
    _, _, red = _cavity_reduction()
    (jump,) = red.generator().jumps
    target = math.sqrt(4 * PARAMS.g**2 / PARAMS.kappa) * SIGMAM
    phase = jump[0, 1] / abs(jump[0, 1])
    shape_err = frobenius_norm(jump - phase * target) / frobenius_norm(target)
    rate = frobenius_norm(jump) ** 2
    rate_err = abs(rate - 4 * PARAMS.g**2 / PARAMS.kappa) / (4 * PARAMS.g**2 / PARAMS.kappa)
    table = truncation_convergence(PARAMS, "damping_rate")
    beyond = [d for (n, _), d in zip(table.rows[1:], table.differences) if n > 16]
    elapsed = time.perf_counter() - t0
    ok = (rate_err < 1e-6 and shape_err < 1e-6 and beyond and all(d is not None and d < 1e-8
          for d in beyond) and elapsed < 60.0)
    verdict(2, ok, f"rate relative error {rate_err:.2e} (< 1e-6), shape error {shape_err:.2e},"
                   f" changes beyond n_trunc=16 {beyond} (< 1e-8), runtime {elapsed:.1f}s (< 60s)")


def test_criterion_3_vanishing_correction(verdict):
    base = build_cavity_qubit(PARAMS)
    analysis = certify(base.fast, base.tolerances)
    m = build_with_slow_B_hamiltonian(PARAMS, "sigmaz")
    hb_full = m.slow.hamiltonian - base.slow.hamiltonian
    extra = frobenius_norm(c1_operator(m.fast.jumps[0], hb_full, analysis.dfs))
    red = build_reduced_model(m.fast, m.slow, m.epsilon, 2, analysis=analysis)
    alpha = PARAMS.alpha
    expected = PARAMS.g * (alpha * SIGMAP + np.conj(alpha) * SIGMAM) + evaluate("sigmaz")
    ham_err = float(np.max(np.abs(red.generator().hamiltonian - expected)))
    verdict(3, extra < 1e-10 and ham_err < 1e-9,
            f"C1 contribution of H_B {extra:.2e} (< 1e-10),"
            f" reduced Hamiltonian error {ham_err:.2e} (< 1e-9)")


def _identity_residuals(model, rng):
    analysis = certify(model.fast, model.tolerances)
    red = build_reduced_model(model.fast, model.slow, model.epsilon, 2, analysis=analysis)
    dfs, kraus = analysis.dfs, analysis.kraus
    d = model.dim
    # a generic slow jump exercises the first-order dissipator identity
    L1 = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2 * d)
    a_ops = [dagger(dfs.S0) @ m @ L1 @ dfs.S0 for m in kraus.operators]
    sum_ada = frobenius_norm(sum(dagger(a) @ a for a in a_ops) - dfs.compress(dagger(L1) @ L1))
    U = _random_unitary(rng, len(kraus))
    mixed = kraus.mixed(U)
    L0, H1 = model.fast.jumps[0], model.slow.hamiltonian
    mixing = max(
        dissipator_distance(first_order_jumps(L1, kraus, dfs),
                            first_order_jumps(L1, mixed, dfs), dfs.slow_dim),
        dissipator_distance(second_order_jumps(L0, H1, kraus, dfs),
                            second_order_jumps(L0, H1, mixed, dfs), dfs.slow_dim),
    )
    r = red.residuals
    return {
        "order1": r["order1"],
        "order2": r["order2"],
        "sum_AdA": sum_ada,
        "sum_BdB": r["sum_BdB"],
        "rp0": r["rp0"],
        "lambda_norm": r["lambda_norm"],
        "kraus_mixing": mixing,
    }


def test_criterion_4_exact_identities(verdict):
    t0 = time.perf_counter()
    limits = {"order1": 1e-9, "order2": 1e-8, "sum_AdA": 1e-9, "sum_BdB": 1e-9,
              "rp0": 1e-8, "lambda_norm": 1e-8, "kraus_mixing": 1e-9}
    rng = np.random.default_rng(0)
    models = [("cavity", build_cavity_qubit(PARAMS)),
              ("purcell", build_purcell_two_qubit(1.0, 0.05))]
    models += [(f"random[{s}]", random_qualifying_model(s)) for s in range(20)]
    worst = dict.fromkeys(limits, 0.0)
    failures = []
    for name, model in models:
        for key, value in _identity_residuals(model, rng).items():
            worst[key] = max(worst[key], value)
            if not value <= limits[key]:
                failures.append(f"{name}:{key}={value:.2e}")
    elapsed = time.perf_counter() - t0
    summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(4, not failures and elapsed < 300.0,
            f"worst over {len(models)} models: {summary}; runtime {elapsed:.1f}s (< 300s)"
            + (f"; failures {failures}" if failures else ""))


def test_criterion_5_structure_preservation(verdict):
    rng = np.random.default_rng(5)
    physical = [("cavity", build_cavity_qubit(PARAMS)),
                ("cavity-hb", build_with_slow_B_hamiltonian(PARAMS, "sigmaz")),
                ("purcell", build_purcell_two_qubit(1.0, 0.05))]
    physical_names = {n for n, _ in physical}
    randoms = [(f"random[{s}]", random_qualifying_model(s)) for s in range(5)]
    failures = []
    worst_trace, worst_min = 0.0, math.inf
    for name, model in physical + randoms:
        for order in (1, 2):
            red = build_reduced_model(model.fast, model.slow, model.epsilon, order)
            gen = red.generator()
            if gen.dim > 1:
                checks = generator_structure_checks(gen)
                failures += [f"{name}/o{order}:{c.name}={c.value:.2e}" for c in checks
                             if not c.passed]
            eps = model.epsilon
            # the fixed floor presumes an O(1) correction; random models get
            # their own scale, the first-order bound eps^2 ||C1||^2
            scale = 1.0 if name in physical_names or red.C1 is None else max(
                1.0, np.linalg.norm(red.C1, 2) ** 2 / 10)
            for _ in range(10):
                psi = rng.normal(size=red.slow_dim) + 1j * rng.normal(size=red.slow_dim)
                rho = np.outer(psi, psi.conj()) / np.vdot(psi, psi).real
                lifted = kraus_parametrization(red, rho)
                tr_err = abs(np.trace(lifted) - 1)
                wmin = float(np.linalg.eigvalsh((lifted + dagger(lifted)) / 2)[0])
                worst_trace = max(worst_trace, tr_err)
                if scale == 1.0:
                    worst_min = min(worst_min, wmin / eps**2)
                if tr_err > 1e-13 or wmin < -10 * scale * eps**2:
                    failures.append(f"{name}/o{order}: trace {tr_err:.1e}, min eig {wmin:.1e}")
    verdict(5, not failures,
            f"reduced generators TP/HP/CP at t in (0.1, 1, 10); lifted trace error"
            f" {worst_trace:.1e} (<= 1e-13), physical models min eig / eps^2 {worst_min:.2f}"
            f" (>= -10), random models within eps^2 ||C1||^2"
            + (f"; failures {failures[:5]}" if failures else ""))


def test_criterion_6_epsilon_scaling(verdict):
    t0 = time.perf_counter()
    m = build_cavity_qubit(PARAMS)
    analysis = certify(m.fast, m.tolerances)
    ratios = [0.02, 0.01, 0.005]
    couplings = [r * PARAMS.kappa for r in ratios]
    rho_s0 = initial_state("random", 2, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = epsilon_sweep(m.fast, m.slow, rho_s0, couplings, ("fixed", 10.0 / analysis.spectrum.gap),
                            order=2, analysis=analysis)
    errs = [r.max_error for r in res.reports]
    monotone = all(a > b for a, b in zip(errs, errs[1:]))
    elapsed = time.perf_counter() - t0
    verdict(6, 1.7 <= res.slope <= 2.5 and monotone and elapsed < 300.0,
            f"slope {res.slope:.3f} in [1.7, 2.5], max errors {['%.2e' % e for e in errs]}"
            f" strictly decreasing={monotone}, runtime {elapsed:.1f}s (< 300s)")


def test_criterion_7_degenerate_cases(verdict, tmp_path, capsys):
    decay = LindbladGenerator(np.zeros((2, 2)), (SIGMAM,))
    slow = LindbladGenerator(np.array([[0, 1], [1, 0]], dtype=complex))
    red = build_reduced_model(decay, slow, 0.1, 2)
    trivial = red.is_trivial and red.generator().is_zero() and any(
        "one-dimensional" in n for n in red.notes)
    doc = {
        "factors": [{"name": "A", "dim": 2}, {"name": "B", "dim": 2}],
        "fast": {"hamiltonian": "0", "jumps": ["kron(sigmam, eye(2))", "0.5*kron(sigmam, eye(2))"]},
        "slow": {"hamiltonian": "kron(sigmap, sigmam) + kron(sigmam, sigmap)"},
        "epsilon": 0.05,
    }
    path = tmp_path / "two_jumps.json"
    path.write_text(json.dumps(doc))
    code = main(["reduce", str(path), "--order", "2"])
    err = capsys.readouterr().err
    verdict(7, trivial and code == 3 and "jump" in err,
            f"slow_dim=1 zero generator reported={trivial}; order-2 on two fast jumps exit {code}"
            f" (expect 3) with reason {err.strip()!r}")
