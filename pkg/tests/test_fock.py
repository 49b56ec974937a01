import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import poisson

from qclmi import analytic, fock
from qclmi.core import ConvergenceError, DensitySpec, ModelSpec, SubsystemState

from conftest import NELSON

G = SubsystemState("gaussian")
F = SubsystemState("fock")


def test_uncoupled_spectrum_model_basis():
    m = ModelSpec("bilinear", 0.7, 1.3, 0.0, 0.5)
    basis = fock.FockBasis.for_model(m, 12, frequency="model")
    ev = np.sort(np.linalg.eigvalsh(fock.build_hamiltonian(m, basis).toarray()))
    expected = sorted(0.5 * (0.7 * (a + 0.5) + 1.3 * (b + 0.5)) for a in range(13) for b in range(13))
    low = [e for e in expected if e < 0.5 * (0.7 + 1.3) * 6]
    np.testing.assert_allclose(ev[: len(low)], low, atol=1e-10)


def test_rwa_coupling_equals_ladder_form():
    lam, hbar = 0.37, 0.8
    m = ModelSpec("rwa", 1.0, 1.0, lam, hbar)
    basis = fock.FockBasis(9, 9)
    H = fock.build_hamiltonian(m, basis).toarray()
    n = 10
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    I = np.eye(n)
    num = a.T @ a
    H0 = hbar * (np.kron(num, I) + np.kron(I, num) + np.eye(n * n))
    HI = lam * hbar * (np.kron(a.T, a) + np.kron(a, a.T))
    np.testing.assert_allclose(H, H0 + HI, atol=1e-12)


@pytest.mark.parametrize("model", [ModelSpec("bilinear", lam=0.4), ModelSpec("rwa", lam=0.4), NELSON])
def test_hamiltonian_hermitian(model):
    H = fock.build_hamiltonian(model, fock.FockBasis(8, 8))
    assert abs(H - H.T).max() == 0.0 and not np.iscomplexobj(H.toarray())


def test_nelson_matrix_elements_against_dense_position_grid():
    """Kept matrix elements equal <m|H|n> computed with Hermite functions on a fine grid."""
    hbar = 0.3
    basis = fock.FockBasis(5, 5)
    H = fock.build_hamiltonian(NELSON.__class__("nelson", NELSON.omega1, NELSON.omega2, 0.0, hbar), basis)
    H = H.toarray()
    x = np.linspace(-8, 8, 32001)
    dx = x[1] - x[0]
    phi = fock._hermite_functions(x, 5, 1.0, hbar)  # rows: levels
    d = lambda f: np.gradient(f, dx, axis=-1)  # noqa: E731
    # <m1 m2| -q1 p1 p2 |n1 n2> with p = -i hbar d/dx; symmetrised q1 p1.
    q_ = phi * x
    def mat(A, B):
        return A @ B.T * dx
    Q2 = mat(phi, phi * x**2)
    Q = mat(phi, q_)
    Dm = mat(phi, d(phi))
    QD = mat(phi, x * d(phi))
    w1sq, w2sq = NELSON.omega1**2, NELSON.omega2**2
    K = -hbar**2 * mat(phi, d(d(phi)))
    H1 = 0.5 * (K + w1sq * Q2)
    H2 = 0.5 * (K + w2sq * Q2)
    I = np.eye(6)
    sym_qp = -1j * hbar * 0.5 * (QD + (QD + np.eye(6)))  # (q p + p q)/2 with p q = q p - i hbar
    p2 = -1j * hbar * Dm
    Hn = np.kron(H1, I) + np.kron(I, H2) - np.kron(sym_qp, p2) + 0.5 * np.kron(Q2, Q2)
    # Compare levels well inside the truncation (grid derivative is exact to ~1e-6 there).
    keep = [basis.index(i, j) for i in range(3) for j in range(3)]
    np.testing.assert_allclose(H[np.ix_(keep, keep)], Hn.real[np.ix_(keep, keep)], atol=1e-5)
    assert np.max(abs(Hn.imag[np.ix_(keep, keep)])) < 1e-5


def test_initial_state_examples():
    basis = fock.FockBasis(6, 6)
    psi = fock.initial_state(DensitySpec(G, F), basis, 1.0)
    assert abs(psi[basis.index(0, 1)]) == pytest.approx(1.0, abs=1e-12)
    assert np.sum(abs(psi) ** 2) == pytest.approx(1.0, abs=1e-14)


def test_coherent_amplitudes_poisson_oracle():
    hbar = 0.5
    q, p = 1.0 * math.sqrt(2 * hbar), 0.0  # alpha = 1
    c = fock.mode_state(SubsystemState("gaussian", q, p), 20, 1.0, hbar)
    assert np.sum(abs(c) ** 2) == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(abs(c) ** 2, poisson.pmf(np.arange(21), 1.0), atol=1e-10)


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_coherent_state_is_eigenvector_of_annihilation(q, p):
    hbar = 0.5
    c = fock.mode_state(SubsystemState("gaussian", q, p), 40, 1.0, hbar)
    a = np.diag(np.sqrt(np.arange(1, 41)), 1)
    alpha = (q + 1j * p) / math.sqrt(2 * hbar)
    np.testing.assert_allclose((a @ c)[:30], alpha * c[:30], atol=1e-9)


def test_truncation_error_reports_required_level():
    with pytest.raises(fock.TruncationError) as err:
        fock.mode_state(SubsystemState("gaussian", 3.0, 0.0), 5, 1.0, 0.5)
    assert err.value.n_required > 5
    assert isinstance(err.value, ConvergenceError)


def test_propagate_identity_and_number_conservation():
    m = ModelSpec("bilinear", lam=0.0, hbar=1.0)
    basis = fock.FockBasis(4, 4)
    H = fock.build_hamiltonian(m, basis)
    psi0 = fock.initial_state(DensitySpec(F, F), basis, 1.0)
    np.testing.assert_allclose(fock.propagate(H, psi0, 0.0, 1.0), psi0, atol=1e-14)
    psi = fock.propagate(H, psi0, 2.7, 1.0)
    np.testing.assert_allclose(abs(psi) ** 2, abs(psi0) ** 2, atol=1e-13)


def test_propagate_matches_expm_oracle_and_krylov():
    m = ModelSpec("rwa", lam=0.6, hbar=0.7)
    basis = fock.FockBasis(7, 7)
    H = fock.build_hamiltonian(m, basis)
    psi0 = fock.initial_state(DensitySpec(SubsystemState("gaussian", 0.3, 0.2), F), basis, 0.7)
    ref = expm(-1j * H.toarray() * 1.9 / 0.7) @ psi0
    np.testing.assert_allclose(fock.propagate(H, psi0, 1.9, 0.7), ref, atol=1e-12)
    kry = fock.Propagator(H, 0.7, dense_limit=0).states(psi0, np.linspace(0, 1.9, 5))[-1]
    np.testing.assert_allclose(kry, ref, atol=1e-10)


def test_rwa_exchange_amplitude():
    m = ModelSpec("rwa", 1.0, 1.0, 1.0, 1.0)
    basis = fock.FockBasis(3, 3)
    H = fock.build_hamiltonian(m, basis)
    psi0 = fock.initial_state(DensitySpec(G, F), basis, 1.0)
    for t in (0.2, 0.9, 2.5):
        psi = fock.propagate(H, psi0, t, 1.0)
        assert abs(psi[basis.index(1, 0)]) == pytest.approx(abs(math.sin(t)), abs=1e-12)


def test_rwa_fock_fock_populations_at_eighth_period():
    lam = 1.0
    m = ModelSpec("rwa", 1.0, 1.0, lam, 1.0)
    basis = fock.FockBasis(3, 3)
    psi = fock.propagate(fock.build_hamiltonian(m, basis),
                         fock.initial_state(DensitySpec(F, F), basis, 1.0), math.pi / 8, 1.0)
    rho = fock.reduced_density(psi, basis, 1)
    np.testing.assert_allclose(np.diag(rho).real[:3], [0.25, 0.5, 0.25], atol=1e-12)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


def test_product_state_reduced_is_pure():
    basis = fock.FockBasis(10, 10)
    psi = fock.initial_state(DensitySpec(SubsystemState("gaussian", 0.5, 0.1), F), basis, 0.5)
    rho = fock.reduced_density(psi, basis, 1)
    assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-12)
    assert fock.linear_entropy(rho) == pytest.approx(0.0, abs=1e-12)
    assert fock.qlmi(psi, basis) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_partial_trace_matches_loop_and_schmidt(n1, n2, seed):
    rng = np.random.default_rng(seed)
    basis = fock.FockBasis(n1, n2)
    psi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    psi /= np.linalg.norm(psi)
    rho1 = np.zeros((n1 + 1, n1 + 1), complex)
    for a in range(n1 + 1):
        for b in range(n1 + 1):
            rho1[a, b] = sum(psi[basis.index(a, k)] * psi[basis.index(b, k)].conj() for k in range(n2 + 1))
    np.testing.assert_allclose(fock.reduced_density(psi, basis, 1), rho1, atol=1e-13)
    s1 = fock.linear_entropy(fock.reduced_density(psi, basis, 1))
    s2 = fock.linear_entropy(fock.reduced_density(psi, basis, 2))
    assert s1 == pytest.approx(s2, abs=1e-12)
    assert np.trace(fock.reduced_density(psi, basis, 2)).real == pytest.approx(1.0, abs=1e-12)


def test_rwa_fock_fock_entropy_is_8u():
    lam = 0.8
    times = np.linspace(0, 2, 41)
    run = fock.fock_series(ModelSpec("rwa", 1.0, 1.0, lam, 1.0), DensitySpec(F, F), times, nmax=4)
    np.testing.assert_allclose(run.columns["S1_q"], 8 * analytic.rwa_u(times, lam), atol=1e-12)
    s = np.sin(2 * lam * times) ** 2
    np.testing.assert_allclose(run.columns["S1_q"], 2 * s - 1.5 * s**2, atol=1e-12)


def test_fock_series_escalates_then_fails():
    m = ModelSpec("bilinear", 1.0, 1.0, 0.9, 1.0)
    d = DensitySpec(SubsystemState("gaussian", 0.5, 0.0))
    with pytest.raises(ConvergenceError) as err:
        fock.fock_series(m, d, np.linspace(0, 3, 4), nmax=10, tol=1e-14)
    assert err.value.diagnostic == "fock_truncation"
    run = fock.fock_series(m, d, np.linspace(0, 3, 4), nmax=10, tol=1e-3)
    assert run.diagnostics["fock_check_delta"] < 1e-3


def test_fock_series_escalation_recovers():
    """A too-small first level fails the doubling check once and passes after escalation."""
    m = ModelSpec("bilinear", 1.0, 1.0, 0.9, 1.0)
    d = DensitySpec(SubsystemState("gaussian", 0.5, 0.0))
    run = fock.fock_series(m, d, np.linspace(0, 3, 4), nmax=6, tol=1e-4)
    assert run.diagnostics["fock_escalated"] and run.diagnostics["fock_nmax"] == 12


def test_bilinear_fock_agrees_with_gaussian():
    from qclmi.gaussian import gaussian_series

    m = ModelSpec("bilinear", 1.0, 1.0, 0.9, 1.0)
    d = DensitySpec(SubsystemState("gaussian", 0.5, 0.0))
    times = np.linspace(0, 3, 7)
    run = fock.fock_series(m, d, times, nmax=30, check=False)
    ref = gaussian_series(m, d, times)
    np.testing.assert_allclose(run.columns["I_q"], ref["I_q"], atol=1e-4)
    assert run.diagnostics["norm_drift"] < 1e-10
    assert run.diagnostics["schmidt_gap"] < 1e-12
