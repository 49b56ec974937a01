"""Classical Hamiltonian flows, energies and Poincare sections.

All three models belong to one polynomial family

    H = (p1**2 + w1**2 q1**2)/2 + (p2**2 + w2**2 q2**2)/2
        + cq q1 q2 + cp p1 p2 + cn (-q1 p1 p2 + q1**2 q2**2 / 2)

so a single RK4 kernel serves every model. The quadratic members (``cn = 0``)
also have an exact linear flow, which is what :func:`flow` uses for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.spatial import cKDTree

from ._backend import kernels
from ._fallback import _rhs, _rk4
from .core import ConfigError, ConvergenceError, ModelSpec, PhasePoint

__all__ = [
    "FlowPlan",
    "SectionPoint",
    "SectionResult",
    "make_plan",
    "hamiltonian_coefficients",
    "energy",
    "linear_propagator",
    "propagator_from_matrix",
    "flow",
    "flow_with_drift",
    "inverse_flow",
    "flow_points",
    "seed_state",
    "poincare_section",
    "dispersion_statistic",
    "classify_seeds",
    "select_centers",
]

J4 = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class FlowPlan:
    """How to move points along the Hamiltonian flow of ``model``.

    Parameters
    ----------
    model : ModelSpec
    method : {"analytic", "rk4"}
    rk4_dt : float
        Fixed RK4 step; only used when ``method == "rk4"``.
    bound : float
        Trajectories with ``max|x_i| >= bound`` are declared escaped (NaN).
    drift_tol : float
        Allowed energy drift per unit time (at the ``E = 0.05`` scale) before
        :func:`flow` raises.
    """

    model: ModelSpec
    method: str = "analytic"
    rk4_dt: float = 1e-3
    bound: float = math.inf
    drift_tol: float = 1e-9

    def __post_init__(self):
        if self.method not in ("analytic", "rk4"):
            raise ConfigError(f"unknown flow method {self.method!r}", "method")
        if self.method == "rk4" and not self.rk4_dt > 0:
            raise ConfigError("must be positive", "rk4_dt")
        if self.method == "analytic" and not self.model.is_quadratic:
            raise ConfigError("no analytic flow for a non-quadratic model", "model")


def make_plan(model: ModelSpec, rk4_dt: float = 1e-3, method: str | None = None, **kw) -> FlowPlan:
    """Analytic flow for quadratic models, RK4 otherwise (unless ``method`` is forced)."""
    if method is None:
        method = "analytic" if model.is_quadratic else "rk4"
    return FlowPlan(model, method, rk4_dt, **kw)


def hamiltonian_coefficients(model: ModelSpec) -> np.ndarray:
    """``(w1**2, w2**2, cq, cp, cn)`` of the shared polynomial family."""
    w1sq, w2sq = model.omega1**2, model.omega2**2
    if model.kind == "bilinear":
        return np.array([w1sq, w2sq, model.lam, 0.0, 0.0])
    if model.kind == "rwa":
        return np.array([w1sq, w2sq, model.lam, model.lam, 0.0])
    if model.kind == "nelson":
        return np.array([w1sq, w2sq, 0.0, 0.0, 1.0])
    raise ConfigError(f"unknown model {model.kind!r}", "model")


def energy(model: ModelSpec, x) -> float | np.ndarray:
    """Total energy ``H1 + H2 + H_I``; accepts a PhasePoint or an ``(..., 4)`` array."""
    if isinstance(x, PhasePoint):
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    q1, p1, q2, p2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    w1sq, w2sq, cq, cp, cn = hamiltonian_coefficients(model)
    h = 0.5 * (p1 * p1 + w1sq * q1 * q1) + 0.5 * (p2 * p2 + w2sq * q2 * q2)
    h = h + cq * q1 * q2 + cp * p1 * p2 + cn * (-q1 * p1 * p2 + 0.5 * q1 * q1 * q2 * q2)
    return float(h) if np.ndim(h) == 0 else h


def _mode_block(a: float, b: float, t: float) -> np.ndarray:
    # Solution of (a p^2 + b q^2)/2: q(t) = q cos(Wt) + a p sin(Wt)/W, W = sqrt(ab).
    w = math.sqrt(a * b)
    c = math.cos(w * t)
    s = t * float(np.sinc(w * t / math.pi))  # sin(Wt)/W, finite as W -> 0
    return np.array([[c, a * s], [-b * s, c]])


_ROT = np.array(
    [[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, -1, 0], [0, 1, 0, -1]], dtype=float
) / math.sqrt(2.0)  # (q1,p1,q2,p2) -> (u+, v+, u-, v-)


def propagator_from_matrix(M, t: float) -> np.ndarray:
    """Linear flow map ``exp(J M t)`` of ``H = x^T M x / 2``.

    Exchange-symmetric forms (equal diagonal blocks, cross terms only between
    like coordinates) are solved in closed form through the ``(x1 +/- x2)/sqrt(2)``
    normal modes; anything else falls back to a matrix exponential.
    """
    M = np.asarray(M, dtype=float)
    if t == 0:
        return np.eye(4)
    sym = (
        M[0, 0] == M[2, 2]
        and M[1, 1] == M[3, 3]
        and M[0, 1] == M[2, 3] == M[0, 3] == M[1, 2] == 0.0
        and M[1, 0] == M[3, 2] == M[3, 0] == M[2, 1] == 0.0
    )
    if not sym:
        return expm(J4 @ M * t)
    bp, bm = M[0, 0] + M[0, 2], M[0, 0] - M[0, 2]
    ap, am = M[1, 1] + M[1, 3], M[1, 1] - M[1, 3]
    if ap * bp < 0 or am * bm < 0:
        return expm(J4 @ M * t)
    B = np.zeros((4, 4))
    B[:2, :2] = _mode_block(ap, bp, t)
    B[2:, 2:] = _mode_block(am, bm, t)
    return _ROT.T @ B @ _ROT


def _quadratic_matrix(model: ModelSpec) -> np.ndarray:
    w1sq, w2sq, cq, cp, cn = hamiltonian_coefficients(model)
    if cn != 0.0:
        raise ConfigError(f"{model.kind} is not quadratic", "model")
    M = np.diag([w1sq, 1.0, w2sq, 1.0])
    M[0, 2] = M[2, 0] = cq
    M[1, 3] = M[3, 1] = cp
    return M


def linear_propagator(model: ModelSpec, t: float) -> np.ndarray:
    """4x4 matrix ``S(t)`` with ``x(t) = S(t) x(0)`` for a quadratic model."""
    return propagator_from_matrix(_quadratic_matrix(model), t)


def _rk4_steps(t: float, dt: float) -> tuple[int, float]:
    """Number of full steps and the final partial step that lands exactly on ``|t|``."""
    t = abs(t)
    n = int(t // dt)
    rem = t - n * dt
    if dt - rem <= 1e-12 * dt:
        n, rem = n + 1, 0.0
    if rem <= 1e-14 * max(1.0, t):
        rem = 0.0
    return n, rem


def flow_points(plan: FlowPlan, X, t: float) -> np.ndarray:
    """Propagate every row of ``X`` (shape ``(N, 4)``) by time ``t``.

    Escaped RK4 trajectories come back as rows of NaN.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    if t == 0:
        return X.copy()
    if plan.method == "analytic":
        return X @ linear_propagator(plan.model, t).T
    Y = X.copy()
    n, rem = _rk4_steps(t, plan.rk4_dt)
    sign = 1.0 if t > 0 else -1.0
    coeffs = hamiltonian_coefficients(plan.model)
    if n:
        kernels.rk4_advance(Y, sign * plan.rk4_dt, n, coeffs, plan.bound)
    if rem:
        kernels.rk4_advance(Y, sign * rem, 1, coeffs, plan.bound)
    return Y


def flow_with_drift(plan: FlowPlan, x0: PhasePoint, t: float) -> tuple[PhasePoint, float]:
    """Flow a single point and report ``|H(x(t)) - H(x0)|``."""
    y = flow_points(plan, x0.as_array()[None, :], t)[0]
    if not np.all(np.isfinite(y)):
        raise ConvergenceError(
            f"trajectory from {x0.as_tuple()} escaped before t={t:g}", diagnostic="escape"
        )
    drift = abs(energy(plan.model, y) - energy(plan.model, x0))
    return PhasePoint.from_array(y), drift


def flow(plan: FlowPlan, x0: PhasePoint, t: float) -> PhasePoint:
    """``phi_t(x0)``; negative ``t`` runs the flow backwards.

    Raises
    ------
    ConvergenceError
        If an RK4 trajectory escapes or its energy drift exceeds
        ``plan.drift_tol`` per unit time.
    """
    y, drift = flow_with_drift(plan, x0, t)
    if plan.method == "rk4":
        scale = max(1.0, abs(energy(plan.model, x0)) / 0.05)
        limit = plan.drift_tol * max(1.0, abs(t)) * scale
        if drift > limit:
            raise ConvergenceError(
                f"RK4 energy drift {drift:.3e} exceeds {limit:.3e} (rk4_dt={plan.rk4_dt:g})",
                diagnostic="energy_drift",
            )
    return y


def inverse_flow(plan: FlowPlan, x: PhasePoint, t: float) -> PhasePoint:
    """``phi_t^{-1}(x)``, i.e. the flow run for time ``-t``."""
    return flow(plan, x, -t)


# --- Poincare sections --------------------------------------------------------------


@dataclass(frozen=True)
class SectionPoint:
    """One upward crossing of ``q1 = 0`` (``p1 > 0``) by orbit ``seed_index``."""

    q2: float
    p2: float
    seed_index: int
    crossing_index: int
    p1: float = float("nan")
    energy_error: float = float("nan")
    residual_q1: float = 0.0


@dataclass
class SectionResult:
    """Section points plus per-seed bookkeeping.

    ``status`` holds ``"ok"``, ``"short"`` (ran out of time), ``"escaped"`` or
    ``"rejected"`` for each seed; ``errors`` maps seed index to a message.
    """

    points: list[SectionPoint]
    seeds: np.ndarray
    energy: float
    status: list[str]
    errors: dict[int, str] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def for_seed(self, i: int) -> np.ndarray:
        """``(q2, p2)`` rows belonging to seed ``i`` in crossing order."""
        pts = [(p.q2, p.p2) for p in self.points if p.seed_index == i]
        return np.array(pts, dtype=float).reshape(-1, 2)


def seed_state(model: ModelSpec, E: float, q2: float, p2: float) -> PhasePoint:
    """Point ``(0, p1, q2, p2)`` with ``p1 > 0`` on the shell ``H = E``.

    Raises
    ------
    ValueError
        If no positive ``p1`` reaches the shell (seed lies outside it).
    """
    # H(0, p1, q2, p2) is quadratic in p1 for every model in the family.
    h0 = energy(model, np.array([0.0, 0.0, q2, p2]))
    hp = energy(model, np.array([0.0, 1.0, q2, p2]))
    hm = energy(model, np.array([0.0, -1.0, q2, p2]))
    a = 0.5 * (hp + hm) - h0
    b = 0.5 * (hp - hm)
    c = h0 - E
    disc = b * b - 4 * a * c
    if disc < 0:
        raise ValueError(f"seed (q2={q2:g}, p2={p2:g}) lies outside the shell E={E:g}")
    p1 = (-b + math.sqrt(disc)) / (2 * a)
    if not p1 > 0:
        raise ValueError(f"seed (q2={q2:g}, p2={p2:g}) has no p1 > 0 on the shell E={E:g}")
    return PhasePoint(0.0, p1, float(q2), float(p2))


def _hermite_root(L, R, fL, fR, h):
    """Root in [0, h] of the cubic Hermite interpolant of q1 between two RK4 states."""

    def q(s):
        s2, s3 = s * s, s * s * s
        return (
            (2 * s3 - 3 * s2 + 1) * L[0]
            + (s3 - 2 * s2 + s) * h * fL[0]
            + (-2 * s3 + 3 * s2) * R[0]
            + (s3 - s2) * h * fR[0]
        )

    lo, hi = 0.0, 1.0
    if q(hi) < 0:  # interpolant misses the bracket; fall back to linear
        return h * L[0] / (L[0] - R[0])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if q(mid) < 0:
            lo = mid
        else:
            hi = mid
    return h * 0.5 * (lo + hi)


def _refine_crossing(L, R, h, coeffs, tol=1e-10):
    c = tuple(coeffs)
    fL = _rhs(L[None, :], c)[0]
    fR = _rhs(R[None, :], c)[0]
    tau = _hermite_root(L, R, fL, fR, h)
    x = _rk4(L[None, :], tau, c)[0]
    for _ in range(8):
        if abs(x[0]) < 0.01 * tol:
            break
        v = _rhs(x[None, :], c)[0][0]
        if v == 0:
            break
        x = _rk4(x[None, :], -x[0] / v, c)[0]
    return x


def poincare_section(
    model: ModelSpec,
    E: float,
    seeds,
    crossings_per_seed: int,
    rk4_dt: float = 1e-3,
    bound: float = 3.0,
    max_time: float | None = None,
) -> SectionResult:
    """Upward ``q1 = 0`` crossings (``p1 > 0``) of orbits launched from ``(q2, p2)`` seeds.

    Each seed is completed to a full point with :func:`seed_state`; seeds off the
    shell are rejected individually and recorded in ``errors``. Crossings are
    bracketed by the RK4 kernel, located by bisection on the cubic Hermite
    interpolant and polished with Newton substeps to ``|q1| < 1e-10``.

    Parameters
    ----------
    max_time : float, optional
        Integration budget per seed; defaults to three linear periods of the
        first oscillator per requested crossing.
    """
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    status = ["rejected"] * len(seeds)
    errors: dict[int, str] = {}
    starts, idx = [], []
    for i, (q2, p2) in enumerate(seeds):
        try:
            starts.append(seed_state(model, E, q2, p2).as_array())
            idx.append(i)
        except ValueError as exc:
            errors[i] = str(exc)
    points: list[SectionPoint] = []
    if not starts:
        return SectionResult(points, seeds, E, status, errors)

    if max_time is None:
        max_time = crossings_per_seed * 3 * 2 * math.pi / model.omega1
    max_steps = int(math.ceil(max_time / rk4_dt))
    coeffs = hamiltonian_coefficients(model)
    X0 = np.ascontiguousarray(np.array(starts))
    left, right, owner, st = kernels.section_crossings(
        X0, rk4_dt, max_steps, crossings_per_seed, coeffs, bound
    )
    counts = {}
    for L, R, o in zip(left, right, owner):
        seed_i = idx[int(o)]
        x = _refine_crossing(L, R, rk4_dt, coeffs)
        k = counts.get(seed_i, 0)
        counts[seed_i] = k + 1
        points.append(
            SectionPoint(
                q2=float(x[2]),
                p2=float(x[3]),
                seed_index=seed_i,
                crossing_index=k,
                p1=float(x[1]),
                energy_error=float(abs(energy(model, x) - E)),
                residual_q1=float(abs(x[0])),
            )
        )
    for j, code in enumerate(st):
        seed_i = idx[j]
        status[seed_i] = ("ok", "short", "escaped")[int(code)]
        if code == 2:
            errors[seed_i] = (
                f"orbit left the box |x_i| < {bound:g} after {counts.get(seed_i, 0)} crossings"
            )
    return SectionResult(points, seeds, E, status, errors)


# --- regular / chaotic labelling ------------------------------------------------------


def dispersion_statistic(points, r_small: float = 0.03, r_large: float = 0.1) -> float:
    """Neighbour-count dimension of a set of section points.

    Counts point pairs closer than ``r * extent`` at two radii (``extent`` is the
    diagonal of the orbit's bounding box) and returns the log-slope between
    them. Points strung along curves (regular tori, island chains) give values
    near 1 or below, a scattered chaotic orbit gives values near 2.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 16:
        return float("nan")
    extent = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if extent == 0:
        return 0.0
    tree = cKDTree(pts)
    small = tree.count_neighbors(tree, r_small * extent) - len(pts)
    large = tree.count_neighbors(tree, r_large * extent) - len(pts)
    return math.log(max(large, 1) / max(small, 1)) / math.log(r_large / r_small)


def classify_seeds(section: SectionResult, regular_below=1.3, chaotic_above=1.4) -> list[str]:
    """Label each seed ``"regular"``, ``"chaotic"``, ``"escaped"`` or ``"unclear"``."""
    labels = []
    for i in range(len(section.seeds)):
        if section.status[i] == "escaped":
            labels.append("escaped")
            continue
        d = dispersion_statistic(section.for_seed(i))
        if not math.isfinite(d):
            labels.append("unclear")
        elif d < regular_below:
            labels.append("regular")
        elif d > chaotic_above:
            labels.append("chaotic")
        else:
            labels.append("unclear")
    return labels


def select_centers(section: SectionResult, labels=None) -> dict:
    """Pick one deep-regular and one deep-chaotic section point as packet centers.

    The regular center is the regular-family point farthest from every chaotic
    point, and vice versa. Centers come back as ``(q2, p2)`` section
    coordinates; :func:`seed_state` completes them to on-shell points.
    """
    labels = labels if labels is not None else classify_seeds(section)
    reg = np.array([[p.q2, p.p2] for p in section.points if labels[p.seed_index] == "regular"])
    cha = np.array(
        [[p.q2, p.p2] for p in section.points if labels[p.seed_index] in ("chaotic", "escaped")]
    )
    if len(reg) == 0 or len(cha) == 0:
        raise ConvergenceError("section lacks a regular or a chaotic family", diagnostic="section")
    d_reg, _ = cKDTree(cha).query(reg)
    d_cha, _ = cKDTree(reg).query(cha)
    return {
        "regular": tuple(reg[int(np.argmax(d_reg))]),
        "chaotic": tuple(cha[int(np.argmax(d_cha))]),
    }
