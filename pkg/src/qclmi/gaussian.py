"""Exact quantum evolution of Gaussian states under quadratic Hamiltonians.

A Gaussian state is fully described by its mean and its symmetrised (Wigner)
covariance matrix; a quadratic Hamiltonian ``H = x^T M x / 2`` moves both by
the same symplectic matrix as the classical flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, DensitySpec, ModelSpec
from .flows import J4, _quadratic_matrix, propagator_from_matrix

__all__ = [
    "CovarianceState",
    "UncertaintyViolation",
    "ImpureStateError",
    "quadratic_form",
    "symplectic_propagator",
    "coherent_state",
    "evolve",
    "reduced_purity",
    "global_purity",
    "linear_entropies",
    "qlmi_gaussian",
    "gaussian_series",
]


class UncertaintyViolation(ValueError):
    """A covariance block violates the Robertson-Schroedinger bound."""


class ImpureStateError(ValueError):
    """The linear mutual information formula used here needs a globally pure state."""


@dataclass(frozen=True)
class CovarianceState:
    """Mean vector and Wigner covariance of a two-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray
    hbar: float

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (4, 4) or not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
            raise ValueError("covariance must be a symmetric 4x4 matrix")

    def block(self, subsystem: int) -> np.ndarray:
        i = 0 if subsystem == 1 else 2
        return self.cov[i : i + 2, i : i + 2]

    def satisfies_uncertainty(self, tol: float = 1e-10) -> bool:
        """``cov + i (hbar/2) J`` positive semidefinite."""
        ev = np.linalg.eigvalsh(self.cov + 0.5j * self.hbar * J4)
        return bool(ev.min() >= -tol * max(1.0, self.hbar))


def quadratic_form(model: ModelSpec) -> np.ndarray:
    """Symmetric ``M`` with ``H = x^T M x / 2`` in the ``(q1, p1, q2, p2)`` ordering."""
    if not model.is_quadratic:
        raise ConfigError(f"{model.kind} is not quadratic", "model")
    return _quadratic_matrix(model)


def symplectic_propagator(M, t: float) -> np.ndarray:
    """``S(t) = exp(J M t)``, in closed form for the exchange-symmetric couplings."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T):
        raise ValueError("M must be symmetric")
    return propagator_from_matrix(M, t)


def coherent_state(density: DensitySpec, hbar: float) -> CovarianceState:
    """Product of two coherent states: Wigner covariance ``(hbar/2) I``."""
    if not density.is_gaussian:
        raise ConfigError("both factors must be coherent states", "state1")
    return CovarianceState(density.center.astype(float), 0.5 * hbar * np.eye(4), hbar)


def evolve(state: CovarianceState, S) -> CovarianceState:
    S = np.asarray(S, dtype=float)
    cov = S @ state.cov @ S.T
    return CovarianceState(S @ state.mean, 0.5 * (cov + cov.T), state.hbar)


def reduced_purity(state: CovarianceState, subsystem: int, tol: float = 1e-10) -> float:
    """``tr rho_k**2 = (hbar/2) / sqrt(det sigma_k)``.

    Raises
    ------
    UncertaintyViolation
        If ``det sigma_k < (hbar/2)**2`` beyond ``tol`` (relative).
    """
    det = float(np.linalg.det(state.block(subsystem)))
    floor = (0.5 * state.hbar) ** 2
    if det < floor * (1 - tol):
        raise UncertaintyViolation(f"det sigma_{subsystem} = {det:.6g} < (hbar/2)^2 = {floor:.6g}")
    return 0.5 * state.hbar / np.sqrt(det)


def global_purity(state: CovarianceState) -> float:
    """``tr rho**2 = (hbar/2)**2 / sqrt(det cov)``."""
    return (0.5 * state.hbar) ** 2 / np.sqrt(np.linalg.det(state.cov))


def linear_entropies(state: CovarianceState) -> tuple[float, float]:
    return 1.0 - reduced_purity(state, 1), 1.0 - reduced_purity(state, 2)


def qlmi_gaussian(state: CovarianceState, purity_tol: float = 1e-8) -> float:
    """``I = S1 + S2 - S1 S2`` for a globally pure state.

    Raises
    ------
    ImpureStateError
        If the global purity differs from 1 by more than ``purity_tol``.
    """
    mu = global_purity(state)
    if abs(mu - 1.0) > purity_tol:
        raise ImpureStateError(f"global purity {mu:.12g} is not 1")
    s1, s2 = linear_entropies(state)
    return s1 + s2 - s1 * s2


def gaussian_series(model: ModelSpec, density: DensitySpec, times) -> dict:
    """``S1_q``, ``S2_q``, ``I_q`` and the global purity at each time."""
    M = quadratic_form(model)
    st0 = coherent_state(density, model.hbar)
    out = {k: np.empty(len(times)) for k in ("S1_q", "S2_q", "I_q", "global_purity")}
    for i, t in enumerate(times):
        st = evolve(st0, symplectic_propagator(M, t))
        s1, s2 = linear_entropies(st)
        out["S1_q"][i], out["S2_q"][i] = s1, s2
        out["I_q"][i] = qlmi_gaussian(st)
        out["global_purity"][i] = global_purity(st)
    return out
