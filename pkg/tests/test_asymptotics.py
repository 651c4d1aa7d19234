import math

import numpy as np
import pytest

from qael.asymptotics import (
    analyze_spectrum,
    certify,
    identify_dfs,
    invariant_operators,
    kraus_eigenvalues,
    kraus_from_choi,
    spectrum_violation,
    steady_projector,
)
from qael.errors import AssumptionError
from qael.operators import (
    LindbladGenerator,
    choi_matrix,
    dagger,
    liouvillian_matrix,
    matrix_exponential,
    partial_trace,
    unvec,
    vec,
)
from qael.reduction import dissipator_distance, first_order_jumps, second_order_jumps

from conftest import SIGMAM

DECAY = LindbladGenerator(np.zeros((2, 2)), (SIGMAM,))
G = np.diag([1, 0]).astype(complex)


def rand_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ dagger(a)
    return rho / np.trace(rho)


def random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_decay_spectrum():
    spec = analyze_spectrum(liouvillian_matrix(DECAY))
    assert np.allclose(sorted(spec.eigenvalues.real), [-1, -0.5, -0.5, 0], atol=1e-12)
    assert spec.gap == pytest.approx(0.5)
    assert spec.zero_multiplicity_algebraic == spec.zero_multiplicity_geometric == 1
    assert spectrum_violation(spec) is None


def test_zero_generator_is_not_dissipative():
    spec = analyze_spectrum(np.zeros((4, 4)))
    assert spec.gap is None
    assert spectrum_violation(spec) == "not_dissipative"
    with pytest.raises(AssumptionError) as info:
        certify(LindbladGenerator.zero(2))
    assert info.value.check == "not_dissipative"
    assert info.value.report is not None and not info.value.report.qualifies


def test_jordan_zero_block_is_flagged():
    spec = analyze_spectrum(np.array([[0, 1, 0], [0, 0, 0], [0, 0, -1]], dtype=complex))
    assert spec.zero_multiplicity_algebraic == 2
    assert spec.zero_multiplicity_geometric == 1
    assert spectrum_violation(spec) == "zero_not_semisimple"


def test_decay_projector_and_kraus():
    L = liouvillian_matrix(DECAY)
    R = steady_projector(L)
    rng = np.random.default_rng(0)
    for _ in range(5):
        out = unvec(R @ vec(rand_density(rng, 2)))
        assert np.allclose(out, G, atol=1e-12)
    K = kraus_from_choi(R)
    assert K.reconstruction_residual < 1e-10
    assert K.completeness_residual < 1e-8
    assert np.allclose(K.superoperator(), R, atol=1e-10)
    dfs = identify_dfs(R, DECAY)
    assert dfs.slow_dim == 1
    lams, resid = kraus_eigenvalues(K, dfs)
    assert sorted(np.abs(lams)) == pytest.approx([0, 1], abs=1e-12)
    inv = invariant_operators(DECAY, R)
    assert len(inv) == 1
    J = inv[0] / inv[0][0, 0]
    assert np.allclose(J, np.eye(2), atol=1e-12)


def test_identity_projector():
    R = np.eye(4, dtype=complex)
    K = kraus_from_choi(R)
    assert len(K) == 1
    assert np.allclose(K.operators[0], np.eye(2), atol=1e-12)
    dfs = identify_dfs(R, LindbladGenerator.zero(2))
    assert dfs.slow_dim == 2
    assert np.allclose(dfs.P0, np.eye(2))
    assert np.allclose(dagger(dfs.S0) @ dfs.S0, np.eye(2))
    lams, _ = kraus_eigenvalues(K, dfs)
    assert np.allclose(lams, [1])
    assert len(invariant_operators(LindbladGenerator.zero(2), R)) == 4


def test_thermal_qubit_is_not_dfs():
    thermal = LindbladGenerator(np.zeros((2, 2)), (SIGMAM, 0.5 * SIGMAM.T))
    with pytest.raises(AssumptionError) as info:
        certify(thermal)
    assert info.value.check == "not_dfs"


def test_cavity_spectrum_and_dfs(cavity_params, cavity_analysis):
    a = cavity_analysis
    assert a.spectrum.zero_multiplicity_algebraic == 4
    assert a.spectrum.gap == pytest.approx(cavity_params.kappa / 2, rel=1e-9)
    assert a.dfs.slow_dim == 2
    S0, P0 = a.dfs.S0, a.dfs.P0
    assert np.max(np.abs(dagger(S0) @ S0 - np.eye(2))) < 1e-10
    assert np.max(np.abs(P0 @ P0 - P0)) < 1e-10
    assert np.max(np.abs(P0 - dagger(P0))) < 1e-10
    assert a.report.qualifies
    assert a.report.rp0_residual <= 1e-8
    assert a.report.lambda_norm_residual <= 1e-8
    # H_0 = |alpha> (x) C^2
    n = cavity_params.n_trunc
    alpha = cavity_params.alpha
    coh = np.array([math.exp(-abs(alpha) ** 2 / 2) * alpha**k / math.sqrt(math.factorial(k))
                    for k in range(n)])
    ref = np.kron(np.outer(coh, coh.conj()), np.eye(2))
    assert np.max(np.abs(P0 - ref)) < 1e-7


def test_cavity_lambdas_are_coherent_amplitudes(cavity_params, cavity_analysis):
    alpha = cavity_params.alpha
    lams = cavity_analysis.lambdas
    for k in range(cavity_params.n_trunc):
        ref = math.exp(-abs(alpha) ** 2 / 2) * alpha**k / math.sqrt(math.factorial(k))
        assert abs(lams[k] - ref) < 1e-7


def test_cavity_kraus_reconstructs_projector(cavity_params, cavity_analysis):
    rng = np.random.default_rng(1)
    n = cavity_params.n_trunc
    K = cavity_analysis.kraus
    P0_cav = partial_trace(cavity_analysis.dfs.P0, [n, 2], 0) / 2
    for _ in range(3):
        rho = rand_density(rng, 2 * n)
        expected = np.kron(P0_cav, partial_trace(rho, [n, 2], 1))
        assert np.max(np.abs(K.apply(rho) - expected)) < 1e-7


def test_cavity_projector_properties(cavity_analysis):
    a = cavity_analysis
    L, R = a.liouvillian, a.R
    assert np.linalg.norm(R @ L) <= 1e-8 * max(1, np.linalg.norm(L))
    assert np.linalg.norm(L @ R) <= 1e-8 * max(1, np.linalg.norm(L))
    assert a.projector_checks.propagation < 1e-6
    c = choi_matrix(R)
    assert np.min(np.linalg.eigvalsh((c + dagger(c)) / 2)) > -1e-9
    rng = np.random.default_rng(2)
    d = a.dfs.dim
    P0 = a.dfs.P0
    for _ in range(3):
        rho = rand_density(rng, d)
        out = unvec(R @ vec(rho), d)
        assert abs(np.trace(out) - 1) < 1e-10
        assert np.max(np.abs(P0 @ out - out)) < 1e-9
        assert np.max(np.abs(out @ P0 - out)) < 1e-9
    assert len(invariant_operators(a.generator, R)) == a.dfs.slow_dim ** 2


def test_projector_matches_long_time_propagation(purcell):
    L = liouvillian_matrix(purcell.fast)
    R = steady_projector(L, cross_check=False)
    assert np.linalg.norm(R - matrix_exponential(L, 80.0)) < 1e-6


def test_kraus_mixing_invariance(cavity, cavity_analysis):
    a = cavity_analysis
    rng = np.random.default_rng(3)
    U = random_unitary(rng, len(a.kraus))
    mixed = a.kraus.mixed(U)
    assert np.linalg.norm(mixed.superoperator() - a.kraus.superoperator()) < 1e-9
    L0, H1 = cavity.fast.jumps[0], cavity.slow.hamiltonian
    b1 = second_order_jumps(L0, H1, a.kraus, a.dfs)
    b2 = second_order_jumps(L0, H1, mixed, a.dfs)
    assert dissipator_distance(b1, b2, 2) < 1e-9
    L1 = cavity.fast.jumps[0] @ cavity.slow.hamiltonian
    a1 = first_order_jumps(L1, a.kraus, a.dfs)
    a2 = first_order_jumps(L1, mixed, a.dfs)
    assert dissipator_distance(a1, a2, 2) < 1e-9


def test_kraus_output_is_canonical(cavity, cavity_analysis):
    again = certify(cavity.fast, cavity.tolerances)
    for m1, m2 in zip(again.kraus.operators, cavity_analysis.kraus.operators):
        assert np.array_equal(m1, m2)


def test_report_serializes(cavity_analysis):
    d = cavity_analysis.report.to_dict()
    assert d["qualifies"] is True
    assert d["slow_dim"] == 2
    assert len(d["lambda"]) == len(cavity_analysis.lambdas)
