"""Truncated Fock-basis propagation of pure two-mode states.

Each mode ``k`` uses the number basis of an oscillator with frequency
``nu_k`` (by default 1, the frequency of the initial coherent states), so
``q = sqrt(hbar/2nu) (a + a^+)`` and ``p = i sqrt(hbar nu/2) (a^+ - a)``. Polynomials in ``q`` and ``p`` are formed
in a slightly larger space and then projected, so every kept matrix element is
exact. The Nelson cross term is Weyl ordered, ``-(q1 p1 + p1 q1) p2 / 2``. For
all three models the resulting matrix is real symmetric.

Initial states follow the classical Husimi width: coherent states and ``|1>``
of a unit-frequency oscillator, expanded in the ``nu`` basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import expm_multiply

from .core import ConvergenceError, DensitySpec, ModelSpec, SubsystemState

__all__ = [
    "FockBasis",
    "TruncationError",
    "NonHermitianError",
    "build_hamiltonian",
    "mode_state",
    "initial_state",
    "Propagator",
    "propagate",
    "reduced_density",
    "linear_entropy",
    "qlmi",
    "trunc_pop",
    "fock_series",
]

DENSE_LIMIT = 2500


class TruncationError(ConvergenceError):
    """Initial state does not fit the truncated basis; ``n_required`` estimates what would."""

    def __init__(self, message, n_required):
        super().__init__(message, diagnostic="truncation")
        self.n_required = n_required


class NonHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class FockBasis:
    """Product basis ``|n1, n2>`` with ``n_k <= nk_max`` and flat index ``n1 (n2_max+1) + n2``."""

    n1_max: int
    n2_max: int
    nu1: float = 1.0
    nu2: float = 1.0

    def __post_init__(self):
        if self.n1_max < 0 or self.n2_max < 0:
            raise ValueError("truncation levels must be >= 0")

    @property
    def dims(self) -> tuple[int, int]:
        return (self.n1_max + 1, self.n2_max + 1)

    @property
    def dim(self) -> int:
        return (self.n1_max + 1) * (self.n2_max + 1)

    def index(self, n1: int, n2: int) -> int:
        if not (0 <= n1 <= self.n1_max and 0 <= n2 <= self.n2_max):
            raise IndexError((n1, n2))
        return n1 * (self.n2_max + 1) + n2

    def levels(self, i: int) -> tuple[int, int]:
        return divmod(i, self.n2_max + 1)

    @classmethod
    def for_model(cls, model: ModelSpec, nmax: int, frequency: str = "unit") -> "FockBasis":
        """``frequency="unit"`` matches the initial states, ``"model"`` diagonalises ``H1 + H2``."""
        if frequency == "model":
            return cls(nmax, nmax, model.omega1, model.omega2)
        return cls(nmax, nmax, 1.0, 1.0)


def _ladder(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n)), 1, format="csr")


def _mode_ops(n: int, nu: float, hbar: float):
    """``q`` and ``P`` (with ``p = i P``) on ``n`` levels; both real."""
    a = _ladder(n)
    q = math.sqrt(hbar / (2 * nu)) * (a + a.T)
    P = math.sqrt(hbar * nu / 2) * (a.T - a)
    return q.tocsr(), P.tocsr()


def build_hamiltonian(model: ModelSpec, basis: FockBasis, check: bool = True) -> sp.csr_matrix:
    """Real symmetric sparse matrix of the model Hamiltonian on ``basis``.

    Raises
    ------
    NonHermitianError
        If ``max|H - H^T|`` exceeds ``1e-12`` times the largest entry.
    """
    pad = 4
    h = model.hbar
    n1, n2 = basis.n1_max + 1, basis.n2_max + 1
    q1, P1 = _mode_ops(n1 + pad, basis.nu1, h)
    q2, P2 = _mode_ops(n2 + pad, basis.nu2, h)
    I1, I2 = sp.identity(n1 + pad, format="csr"), sp.identity(n2 + pad, format="csr")
    w1sq, w2sq = model.omega1**2, model.omega2**2
    # p^2 = -P^2 since p = iP.
    H1 = 0.5 * (-(P1 @ P1) + w1sq * (q1 @ q1))
    H2 = 0.5 * (-(P2 @ P2) + w2sq * (q2 @ q2))
    H = sp.kron(H1, I2) + sp.kron(I1, H2)
    if model.kind in ("bilinear", "rwa"):
        H = H + model.lam * sp.kron(q1, q2)
        if model.kind == "rwa":
            H = H - model.lam * sp.kron(P1, P2)  # p1 p2 = -P1 P2
    elif model.kind == "nelson":
        sym = q1 @ P1 + P1 @ q1  # (q1 p1 + p1 q1) = i sym
        H = H + 0.5 * sp.kron(sym, P2)  # -(i sym)(i P2)/2
        H = H + 0.5 * sp.kron(q1 @ q1, q2 @ q2)
    keep1 = np.arange(n1)
    keep2 = np.arange(n2)
    flat = (keep1[:, None] * (n2 + pad) + keep2[None, :]).ravel()
    H = H.tocsr()[flat][:, flat].tocsr()
    H.eliminate_zeros()
    if check:
        asym = abs(H - H.T).max() if H.nnz else 0.0
        scale = max(abs(H).max(), 1.0) if H.nnz else 1.0
        if asym > 1e-12 * scale:
            raise NonHermitianError(f"assembled Hamiltonian is not Hermitian (max asym {asym:.3e})")
    return H


def _hermite_functions(x, nmax, nu, hbar):
    """Rows ``phi_n(x)`` for ``n = 0..nmax`` of the frequency-``nu`` oscillator."""
    xi = x * math.sqrt(nu / hbar)
    out = np.empty((nmax + 1, len(x)))
    out[0] = (nu / (math.pi * hbar)) ** 0.25 * np.exp(-0.5 * xi * xi)
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for n in range(1, nmax):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * xi * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def _unit_wavefunction(sub: SubsystemState, x, hbar):
    """Position wavefunction of a unit-frequency coherent state or of ``|1>``."""
    g = (1.0 / (math.pi * hbar)) ** 0.25
    if sub.kind == "fock":
        return g * math.sqrt(2.0 / hbar) * x * np.exp(-x * x / (2 * hbar)) + 0j
    q, p = sub.q, sub.p
    return g * np.exp(-((x - q) ** 2) / (2 * hbar) + 1j * p * x / hbar - 0.5j * p * q / hbar)


def _mode_amplitudes(sub: SubsystemState, nmax: int, nu: float, hbar: float) -> np.ndarray:
    if nu == 1.0:
        if sub.kind == "fock":
            c = np.zeros(nmax + 1, dtype=complex)
            if sub.n <= nmax:
                c[sub.n] = 1.0
            return c
        alpha = (sub.q + 1j * sub.p) / math.sqrt(2 * hbar)
        n = np.arange(nmax + 1)
        logfact = np.array([math.lgamma(k + 1) for k in n])
        if alpha == 0:
            return (n == 0).astype(complex)
        mag = np.exp(-0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * logfact)
        return mag * np.exp(1j * n * np.angle(alpha))
    # General frequency: project onto Hermite functions on a dense grid.
    width = math.sqrt(hbar / nu) * math.sqrt(2 * nmax + 1) + 12 * math.sqrt(hbar) + abs(sub.q)
    width = max(width, 12 * math.sqrt(hbar / nu))
    x = np.linspace(-width, width, max(4000, 40 * (nmax + 1)))
    dx = x[1] - x[0]
    phi = _hermite_functions(x, nmax, nu, hbar)
    psi = _unit_wavefunction(sub, x, hbar)
    return (phi @ psi) * dx


def mode_state(sub: SubsystemState, nmax: int, nu: float, hbar: float, tol: float = 1e-8) -> np.ndarray:
    """Normalised amplitudes of one mode's initial state on ``nmax + 1`` levels.

    Raises
    ------
    TruncationError
        If more than ``tol`` of the norm lies above ``nmax``.
    """
    c = _mode_amplitudes(sub, nmax, nu, hbar)
    loss = 1.0 - float(np.vdot(c, c).real)
    if loss > tol:
        big = max(2 * nmax, nmax + 100)
        cb = _mode_amplitudes(sub, big, nu, hbar)
        tail = 1.0 - np.cumsum(abs(cb) ** 2)
        ok = np.flatnonzero(tail <= tol)
        need = int(ok[0]) if ok.size else big
        raise TruncationError(
            f"initial state loses {loss:.2e} of its norm above n={nmax}; need n_max >= {need}", need
        )
    return c / np.linalg.norm(c)


def initial_state(density: DensitySpec, basis: FockBasis, hbar: float, tol: float = 1e-8) -> np.ndarray:
    """Product state vector over ``basis`` (flat index ``n1 (n2_max+1) + n2``)."""
    c1 = mode_state(density.first, basis.n1_max, basis.nu1, hbar, tol)
    c2 = mode_state(density.second, basis.n2_max, basis.nu2, hbar, tol)
    return np.kron(c1, c2)


class Propagator:
    """``psi(t) = exp(-i H t / hbar) psi0``.

    Dense diagonalisation (reused for every time) up to ``DENSE_LIMIT``
    states; sparse Krylov exponentials on a uniform grid above that.
    """

    def __init__(self, H, hbar: float, dense_limit: int = DENSE_LIMIT):
        self.H = H.tocsr() if sp.issparse(H) else sp.csr_matrix(H)
        self.hbar = hbar
        self.dense = self.H.shape[0] <= dense_limit
        if self.dense:
            try:
                self.evals, self.evecs = eigh(self.H.toarray())
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"diagonalisation failed: {exc}", diagnostic="eigh") from exc

    def states(self, psi0, times) -> np.ndarray:
        """Rows ``psi(t_k)`` for increasing, uniformly spaced ``times`` (dense path takes any)."""
        psi0 = np.asarray(psi0, dtype=complex)
        times = np.asarray(times, dtype=float)
        if self.dense:
            c = self.evecs.T @ psi0
            phase = np.exp(-1j * np.outer(times, self.evals) / self.hbar)
            return (phase * c) @ self.evecs.T
        A = (-1j / self.hbar) * self.H
        if len(times) == 1:
            return expm_multiply(A * times[0], psi0)[None, :]
        out = expm_multiply(A, psi0, start=times[0], stop=times[-1], num=len(times), endpoint=True)
        return np.asarray(out)

    def energy(self, psi) -> float:
        psi = np.asarray(psi)
        return float(np.vdot(psi, self.H @ psi).real)


def propagate(H, psi0, t: float, hbar: float) -> np.ndarray:
    return Propagator(H, hbar).states(psi0, [t])[0]


def _matrix(psi, basis: FockBasis) -> np.ndarray:
    return np.asarray(psi).reshape(basis.dims)


def reduced_density(psi, basis: FockBasis, subsystem: int) -> np.ndarray:
    """``rho_1 = C C^+`` or ``rho_2 = C^T C^*`` with ``C[n1, n2]`` the amplitudes."""
    C = _matrix(psi, basis)
    rho = C @ C.conj().T if subsystem == 1 else C.T @ C.conj()
    return 0.5 * (rho + rho.conj().T)


def linear_entropy(rho) -> float:
    """``1 - tr rho**2`` via the squared Frobenius norm."""
    rho = np.asarray(rho)
    return 1.0 - float(np.sum(abs(rho) ** 2))


def qlmi(psi, basis: FockBasis) -> float:
    s1 = linear_entropy(reduced_density(psi, basis, 1))
    s2 = linear_entropy(reduced_density(psi, basis, 2))
    return s1 + s2 - s1 * s2


def trunc_pop(psi, basis: FockBasis) -> float:
    """Largest population held by the top two levels of either mode."""
    pop = abs(_matrix(psi, basis)) ** 2
    p1 = pop.sum(axis=1)
    p2 = pop.sum(axis=0)
    return float(max(p1[-2:].sum(), p2[-2:].sum()))


@dataclass
class FockRun:
    """Per-time quantum columns plus run diagnostics."""

    columns: dict
    diagnostics: dict = field(default_factory=dict)


def _entropies(states, basis):
    n = len(states)
    S1, S2, tp = np.empty(n), np.empty(n), np.empty(n)
    for i, psi in enumerate(states):
        S1[i] = linear_entropy(reduced_density(psi, basis, 1))
        S2[i] = linear_entropy(reduced_density(psi, basis, 2))
        tp[i] = trunc_pop(psi, basis)
    return S1, S2, tp


def _run(model, density, times, nmax):
    basis = FockBasis.for_model(model, nmax)
    H = build_hamiltonian(model, basis)
    psi0 = initial_state(density, basis, model.hbar)
    prop = Propagator(H, model.hbar)
    states = prop.states(psi0, times)
    S1, S2, tp = _entropies(states, basis)
    norms = np.linalg.norm(states, axis=1)
    e0 = prop.energy(psi0)
    energies = np.array([prop.energy(s) for s in states])
    return {
        "S1_q": S1,
        "S2_q": S2,
        "I_q": S1 + S2 - S1 * S2,
        "trunc_pop": tp,
        "norm_drift": float(np.max(abs(norms - 1.0))),
        "energy_drift": float(np.max(abs(energies - e0))),
        "schmidt_gap": float(np.max(abs(S1 - S2))),
        "method": "eigh" if prop.dense else "krylov",
        "dim": basis.dim,
    }


def fock_series(model: ModelSpec, density: DensitySpec, times, nmax: int = 40, check: bool = True,
                tol: float = 1e-3) -> FockRun:
    """Quantum entropies in the truncated basis with an optional doubling check.

    With ``check`` the run is repeated at ``2 nmax``; if ``I`` moves by ``tol`` or
    more the truncation is escalated once to ``2 nmax`` (checked against
    ``4 nmax``). A second failure raises :class:`ConvergenceError`.
    """
    level = nmax
    primary = _run(model, density, times, level)
    diag = {"fock_nmax": level}
    if check:
        for attempt in range(2):
            ref = _run(model, density, times, 2 * level)
            delta = float(np.max(abs(ref["I_q"] - primary["I_q"])))
            diag.update({"fock_check_nmax": 2 * level, "fock_check_delta": delta})
            if delta < tol:
                break
            if attempt == 1:
                raise ConvergenceError(
                    f"doubling n_max from {level} to {2 * level} changes I by {delta:.3e} >= {tol:g}",
                    diagnostic="fock_truncation",
                )
            level, primary = 2 * level, ref
            diag["fock_nmax"] = level
            diag["fock_escalated"] = True
    cols = {k: primary[k] for k in ("S1_q", "S2_q", "I_q", "trunc_pop")}
    for k in ("norm_drift", "energy_drift", "schmidt_gap", "method", "dim"):
        diag[k] = primary[k]
    diag["trunc_pop_max"] = float(np.max(primary["trunc_pop"]))
    if diag["norm_drift"] > 1e-8:
        diag["norm_flag"] = True
    return FockRun(cols, diag)
