import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qclmi import analytic, gaussian, liouville
from qclmi.core import ConfigError, DensitySpec, ModelSpec, SubsystemState

from conftest import NELSON, make_config

BIL = ModelSpec("bilinear", 1.0, 1.0, 0.9, 1.0)


def test_quadratic_form_entries():
    np.testing.assert_array_equal(gaussian.quadratic_form(ModelSpec("bilinear", lam=0.0)), np.eye(4))
    M = gaussian.quadratic_form(BIL)
    assert M[0, 2] == M[2, 0] == 0.9 and M[1, 3] == 0
    R = gaussian.quadratic_form(ModelSpec("rwa", lam=0.4))
    assert R[0, 2] == R[2, 0] == R[1, 3] == R[3, 1] == 0.4
    with pytest.raises(ConfigError):
        gaussian.quadratic_form(NELSON)


def test_propagator_identity_and_quarter_period():
    M = gaussian.quadratic_form(ModelSpec("bilinear", lam=0.0))
    np.testing.assert_array_equal(gaussian.symplectic_propagator(M, 0.0), np.eye(4))
    S = gaussian.symplectic_propagator(M, math.pi / 2)
    np.testing.assert_allclose(S @ [1, 0, 0, 0], [0, -1, 0, 0], atol=1e-15)


def test_coherent_state_stationary_without_coupling():
    st0 = gaussian.coherent_state(DensitySpec(), 0.3)
    M = gaussian.quadratic_form(ModelSpec("bilinear", lam=0.0))
    for t in (0.3, 2.0, 11.0):
        np.testing.assert_allclose(gaussian.evolve(st0, gaussian.symplectic_propagator(M, t)).cov, st0.cov,
                                   atol=1e-14)


@given(st.floats(-0.9, 0.9), st.floats(-30, 30))
def test_det_cov_invariant(lam, t):
    st0 = gaussian.coherent_state(DensitySpec(), 0.7)
    st1 = gaussian.evolve(st0, gaussian.symplectic_propagator(gaussian.quadratic_form(ModelSpec("rwa", lam=lam)), t))
    assert np.linalg.det(st1.cov) == pytest.approx(np.linalg.det(st0.cov), rel=1e-9)
    assert st1.satisfies_uncertainty()


def test_evolved_cov_matches_classical_moments_by_quadrature():
    """Wigner covariance + hbar/2 equals the covariance of the evolved Husimi density."""
    hbar, t = 1.0, 1.0
    cfg = make_config(lam=0.9, hbar=hbar)
    ev = liouville.DensityEvaluator.from_config(cfg)
    grid = liouville.QuadratureGrid.around(np.zeros(4), np.full(4, 2.2), 4.0, (26, 26, 26, 26))
    X = grid.nodes()
    P = liouville.density_at(ev, X, t)
    W = np.einsum("i,j,k,l->ijkl", *grid.weights).ravel()
    moments = np.einsum("n,ni,nj->ij", P * W, X, X)
    st1 = gaussian.evolve(gaussian.coherent_state(cfg.density, hbar),
                          gaussian.symplectic_propagator(gaussian.quadratic_form(BIL), t))
    S = gaussian.symplectic_propagator(gaussian.quadratic_form(BIL), t)
    # Husimi covariance is the Wigner covariance smoothed by hbar/2 at t = 0, then transported.
    np.testing.assert_allclose(moments, 2 * st1.cov, atol=1e-6)
    np.testing.assert_allclose(moments, hbar * S @ S.T, atol=1e-6)


def test_purity_examples():
    st0 = gaussian.coherent_state(DensitySpec(), 0.4)
    assert gaussian.reduced_purity(st0, 1) == pytest.approx(1.0, abs=1e-15)
    assert gaussian.linear_entropies(st0) == pytest.approx((0.0, 0.0), abs=1e-15)
    mixed = gaussian.CovarianceState(np.zeros(4), 0.4 * np.eye(4), 0.4)
    assert gaussian.reduced_purity(mixed, 1) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(gaussian.ImpureStateError):
        gaussian.qlmi_gaussian(mixed)


def test_uncertainty_violation_raised():
    bad = gaussian.CovarianceState(np.zeros(4), 0.1 * np.eye(4), 0.4)
    with pytest.raises(gaussian.UncertaintyViolation):
        gaussian.reduced_purity(bad, 2)
    assert not bad.satisfies_uncertainty()


def test_bilinear_schmidt_equality_and_oracle():
    times = np.linspace(0, 10, 101)
    out = gaussian.gaussian_series(BIL, DensitySpec(SubsystemState("gaussian", 1.0, 0.0)), times)
    assert np.max(abs(out["S1_q"] - out["S2_q"])) < 1e-12
    ref = [analytic.bilinear_icl_oracle(BIL, [1, 0, 0, 0], t) for t in times]
    assert np.max(abs(out["I_q"] - ref)) < 1e-12
    assert abs(out["I_q"][0]) < 1e-15


def test_rwa_coherent_inputs_stay_unentangled():
    times = np.linspace(0, 2 * math.pi, 50)
    d = DensitySpec(SubsystemState("gaussian", 0.7, -0.2), SubsystemState("gaussian", -0.4, 0.5))
    out = gaussian.gaussian_series(ModelSpec("rwa", lam=0.8, hbar=1.0), d, times)
    assert np.max(abs(out["I_q"])) < 1e-12
