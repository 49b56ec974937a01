"""Closed-form reference curves.

* RWA coupling with ``omega = 1``: Fock-state and coherent-times-Fock inputs.
* Quadratic couplings with Gaussian Husimi inputs: the classical mutual
  information from exact Gaussian integrals (no quadrature).
"""

from __future__ import annotations

import math

import numpy as np

from .core import ConfigError, ModelSpec, UnstableModelError, _check_quadratic_stability
from .flows import linear_propagator

__all__ = [
    "rwa_u",
    "rwa_fock_fock",
    "rwa_coh_fock",
    "purification_period",
    "bilinear_icl_oracle",
    "gaussian_marginal_purities",
]


def rwa_u(t, lam):
    """``u(t) = sin^2(2 lam t) (5 + 3 cos 4 lam t) / 32``; the classical CSLE for Fock inputs."""
    t = np.asarray(t, dtype=float)
    s = np.sin(2 * lam * t) ** 2
    return s * (5.0 + 3.0 * np.cos(4 * lam * t)) / 32.0


def rwa_fock_fock(t, lam) -> dict:
    """Mutual informations for ``|1> x |1>``: ``I = 8u(2 - 8u)``, ``I_cl = u(2 - u)``."""
    u = rwa_u(t, lam)
    return {"I": 8 * u * (2 - 8 * u), "I_cl": u * (2 - u)}


def rwa_coh_fock(t, lam) -> dict:
    """Mutual informations for ``|alpha = 0> x |1>``."""
    t = np.asarray(t, dtype=float)
    s = np.sin(2 * lam * t) ** 2
    c = np.cos(4 * lam * t)
    return {"I": s * (7 + c) / 8.0, "I_cl": s * (15 + c) / 64.0}


def purification_period(lam: float) -> float:
    """Time ``pi / (2 lam)`` at which the RWA entropies return to zero."""
    return math.pi / (2 * lam)


def _integral(K, b, c):
    """``log`` of ``int exp(-x^T K x + 2 b^T x + c) dx`` over ``R^n``."""
    n = K.shape[0]
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0:
        raise ValueError("quadratic form is not positive definite")
    return 0.5 * n * math.log(math.pi) - 0.5 * logdet + float(b @ np.linalg.solve(K, b)) + c


def gaussian_marginal_purities(A, center, hbar) -> tuple[float, float]:
    """``int P_k**2`` for ``P(x) = exp(-|A x - c|^2 / 2 hbar) / (4 pi^2 hbar^2)``.

    The marginal over the other plane is integrated exactly by completing the
    square with the blocks of the precision matrix ``K = A^T A / (2 hbar)``.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(center, dtype=float)
    K = A.T @ A / (2 * hbar)
    b = A.T @ c / (2 * hbar)
    c0 = -float(c @ c) / (2 * hbar) - 2 * math.log(2 * math.pi * hbar)
    out = []
    for keep, drop in (([0, 1], [2, 3]), ([2, 3], [0, 1])):
        alpha = K[np.ix_(keep, keep)]
        beta = K[np.ix_(drop, drop)]
        gamma = K[np.ix_(keep, drop)]
        bk, bd = b[keep], b[drop]
        # Marginal: exp(-y^T K1 y + 2 b1^T y + c1) with the dropped plane integrated out.
        binv_g = np.linalg.solve(beta, gamma.T)
        K1 = alpha - gamma @ binv_g
        b1 = bk - binv_g.T @ bd
        c1 = c0 + float(bd @ np.linalg.solve(beta, bd)) + math.log(math.pi) - 0.5 * np.linalg.slogdet(beta)[1]
        out.append(math.exp(_integral(2 * K1, 2 * b1, 2 * c1)))
    return out[0], out[1]


def bilinear_icl_oracle(model: ModelSpec, center, t: float) -> float:
    """Classical linear mutual information of a Gaussian Husimi density, exactly.

    Works for any stable quadratic model; the result does not depend on
    ``center`` because the linear flow only translates the mean.
    """
    if not model.is_quadratic:
        raise ConfigError(f"{model.kind} is not quadratic", "model")
    _check_quadratic_stability(model)
    A0 = np.eye(4)
    At = linear_propagator(model, -t)
    p10, p20 = gaussian_marginal_purities(A0, center, model.hbar)
    p1, p2 = gaussian_marginal_purities(At, center, model.hbar)
    s1, s2 = 1 - p1 / p10, 1 - p2 / p20
    return s1 + s2 - s1 * s2
