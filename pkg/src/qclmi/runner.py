"""Experiment orchestration: one shared time grid, every applicable pipeline, manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy

from . import __version__, analytic, flows, gaussian, liouville
from ._backend import BACKEND
from .core import ConvergenceError, EntropySeries, ValidatedConfig, config_to_mapping
from .fock import fock_series

__all__ = [
    "quantum_route",
    "simulate_config",
    "poincare_config",
    "section_seeds",
    "content_hash",
    "write_atomic",
    "write_simulation",
    "write_poincare",
    "LIOUVILLE_TOL",
    "DRIFT_TOL",
    "NORM_TOL",
]

LIOUVILLE_TOL = 1e-2  # relative change of int P**2 allowed before a run aborts
DRIFT_TOL = 1e-9  # RK4 energy drift per unit time
NORM_TOL = 1e-10  # quantum norm and energy drift


def content_hash(text: str | bytes) -> str:
    """Git-style blob hash (``sha1("blob <len>\\0" + content)``)."""
    data = text.encode("utf-8") if isinstance(text, str) else text
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def quantum_route(cfg: ValidatedConfig) -> str:
    q = cfg.numerics.quantum
    if q != "auto":
        return q
    if cfg.model.is_quadratic and cfg.density.is_gaussian:
        return "gaussian"
    return "fock"


def _versions() -> dict:
    return {
        "qclmi": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "backend": BACKEND,
    }


def _reference_columns(cfg: ValidatedConfig, times) -> dict | None:
    """Closed-form overlays where the configuration admits one."""
    m, d = cfg.model, cfg.density
    if m.is_quadratic and d.is_gaussian:
        ref = np.array([analytic.bilinear_icl_oracle(m, d.center, t) for t in times])
        return {"I_ref": ref, "Icl_ref": ref}
    if m.kind != "rwa" or not (m.omega1 == m.omega2 == 1.0):
        return None
    kinds = sorted(s.kind for s in d.factors)
    if kinds == ["fock", "fock"]:
        r = analytic.rwa_fock_fock(times, m.lam)
    elif kinds == ["fock", "gaussian"] and all(s.center == (0.0, 0.0) for s in d.factors):
        r = analytic.rwa_coh_fock(times, m.lam)
    else:
        return None
    return {"I_ref": r["I"], "Icl_ref": r["I_cl"]}


def _rk4_drift(cfg: ValidatedConfig) -> float | None:
    """Energy drift per unit time of the density center's own trajectory."""
    if cfg.flow_method != "rk4":
        return None
    plan = flows.make_plan(cfg.model, cfg.numerics.rk4_dt, "rk4")
    x0 = cfg.density.center
    xt = flows.flow_points(plan, x0[None, :], cfg.grid.t_max)[0]
    if not np.all(np.isfinite(xt)):
        return math.inf
    return abs(flows.energy(cfg.model, xt) - flows.energy(cfg.model, x0)) / max(1.0, cfg.grid.t_max)


def _quantum(cfg: ValidatedConfig, times):
    route = quantum_route(cfg)
    if route == "none":
        return None, {"route": "none"}
    if route == "gaussian":
        g = gaussian.gaussian_series(cfg.model, cfg.density, times)
        diag = {
            "route": "gaussian",
            "global_purity_drift": float(np.max(abs(g["global_purity"] - 1.0))),
            "schmidt_gap": float(np.max(abs(g["S1_q"] - g["S2_q"]))),
        }
        return {k: g[k] for k in ("S1_q", "S2_q", "I_q")}, diag
    n = cfg.numerics
    run = fock_series(cfg.model, cfg.density, times, nmax=n.fock_nmax, check=n.fock_check)
    diag = {"route": "fock", **run.diagnostics}
    return run.columns, diag


def simulate_config(cfg: ValidatedConfig, threads: int = 1) -> tuple[EntropySeries, dict]:
    """Run every pipeline that applies to ``cfg`` on its time grid.

    Returns the series and a diagnostics dict. Classical and quantum pipelines
    run concurrently when ``threads > 1``; results do not depend on it.

    Raises
    ------
    ConvergenceError
        When the Liouville invariant, the RK4 energy drift, the quantum norm or
        the Fock truncation check exceeds its threshold.
    """
    times = cfg.grid.times
    timing = {}

    def classical():
        t0 = time.perf_counter()
        out = liouville.classical_series(cfg)
        timing["classical_s"] = time.perf_counter() - t0
        return out

    def quantum():
        t0 = time.perf_counter()
        out = _quantum(cfg, times)
        timing["quantum_s"] = time.perf_counter() - t0
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fc, fq = pool.submit(classical), pool.submit(quantum)
            cl, (qcols, qdiag) = fc.result(), fq.result()
    else:
        cl = classical()
        qcols, qdiag = quantum()

    series = EntropySeries(times=times.copy())
    for key in ("S1_cl", "S2_cl", "I_cl", "purity_check"):
        series.set(key, cl[key])
    series.set("mc_stderr", cl["mc_stderr"] if "mc_stderr" in cl else np.full(len(times), np.nan))
    if qcols is not None:
        for key in ("S1_q", "S2_q", "I_q"):
            series.set(key, qcols[key])
        if "trunc_pop" in qcols:
            series.set("trunc_pop", qcols["trunc_pop"])
    ref = _reference_columns(cfg, times)
    if ref is not None:
        series.set("I_ref", ref["I_ref"])
        series.set("Icl_ref", ref["Icl_ref"])
    if "I_mc" in cl:
        series.set("I_mc", cl["I_mc"])

    diag = {
        "liouville_max_rel_change": float(np.max(abs(cl["purity_check"] - 1.0))),
        "cslmi_forms_max_gap": float(np.max(abs(cl["I_cl"] - cl["I_direct"]))),
        "min_marginal_mass": float(min(np.min(cl["mass1"]), np.min(cl["mass2"]))),
        "grid": cl["grid"],
        "quantum": qdiag,
        "timing": timing,
    }
    drift = _rk4_drift(cfg)
    if drift is not None:
        diag["rk4_energy_drift_per_time"] = drift
    series.diagnostics = diag

    if diag["liouville_max_rel_change"] > LIOUVILLE_TOL:
        raise ConvergenceError(
            f"int P^2 changed by {diag['liouville_max_rel_change']:.3e} (> {LIOUVILLE_TOL:g}); "
            "refine grid_n or shorten tmax",
            diagnostic="liouville_invariant",
        )
    if drift is not None and drift > DRIFT_TOL:
        raise ConvergenceError(
            f"RK4 energy drift {drift:.3e} per unit time exceeds {DRIFT_TOL:g}", diagnostic="rk4_energy_drift"
        )
    for key in ("norm_drift", "energy_drift"):
        if qdiag.get(key, 0.0) > NORM_TOL:
            raise ConvergenceError(
                f"quantum {key.replace('_', ' ')} {qdiag[key]:.3e} exceeds {NORM_TOL:g}", diagnostic=key
            )
    return series, diag


# --- Poincare sections -----------------------------------------------------------------------


def _shell_q2_max(cfg: ValidatedConfig, E: float) -> float:
    """Largest ``q2`` with ``H(0, 0, q2, 0) <= E`` (bisection)."""
    f = lambda q: flows.energy(cfg.model, np.array([0.0, 0.0, q, 0.0])) - E  # noqa: E731
    hi = 1.0
    while f(hi) < 0 and hi < 1e6:
        hi *= 2
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo


def section_seeds(cfg: ValidatedConfig) -> np.ndarray:
    """Default seeds: evenly spaced along ``p2 = 0`` across 95% of the shell."""
    E = cfg.numerics.energy
    qmax = _shell_q2_max(cfg, E)
    q = np.linspace(-0.95 * qmax, 0.95 * qmax, cfg.numerics.section_seeds)
    return np.stack((q, np.zeros_like(q)), axis=1)


def poincare_config(cfg: ValidatedConfig, seeds=None) -> tuple[flows.SectionResult, dict]:
    """Section, seed labels and the selected regular/chaotic packet centers."""
    n = cfg.numerics
    seeds = section_seeds(cfg) if seeds is None else np.asarray(seeds, dtype=float)
    t0 = time.perf_counter()
    sec = flows.poincare_section(cfg.model, n.energy, seeds, n.section_crossings, n.rk4_dt)
    labels = flows.classify_seeds(sec)
    info = {
        "energy": n.energy,
        "seeds": [list(map(float, s)) for s in sec.seeds],
        "labels": labels,
        "dispersion": [flows.dispersion_statistic(sec.for_seed(i)) for i in range(len(sec.seeds))],
        "status": sec.status,
        "errors": {str(k): v for k, v in sec.errors.items()},
        "max_energy_error": max((p.energy_error for p in sec), default=float("nan")),
        "max_q1_residual": max((p.residual_q1 for p in sec), default=float("nan")),
    }
    try:
        picks = flows.select_centers(sec, labels)
    except ConvergenceError as exc:
        info["centers_error"] = str(exc)
    else:
        info["centers"] = {
            name: flows.seed_state(cfg.model, n.energy, q2, p2).as_tuple()
            for name, (q2, p2) in picks.items()
        }
    info["timing_s"] = time.perf_counter() - t0
    return sec, info


def section_csv(sec: flows.SectionResult) -> str:
    lines = ["q2,p2,seed_index,crossing_index"]
    for p in sec:
        lines.append(f"{p.q2:.12g},{p.p2:.12g},{p.seed_index},{p.crossing_index}")
    return "\n".join(lines) + "\n"


# --- writing -------------------------------------------------------------------------------


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _manifest(cfg, config_text, outputs, extra, threads=1):
    return _json_safe(
        {
            "config": config_to_mapping(cfg),
            "config_hash": content_hash(config_text),
            "seed": cfg.numerics.seed,
            "threads": threads,
            "versions": _versions(),
            "outputs": outputs,
            **extra,
        }
    )


def manifest_name(stem: str) -> str:
    return f"{stem}.manifest.json"


def write_simulation(cfg, config_text, out_dir, stem, threads=1) -> dict:
    """Run, then write ``<stem>.csv`` and ``<stem>.manifest.json`` into ``out_dir``."""
    t0 = time.perf_counter()
    series, diag = simulate_config(cfg, threads=threads)
    csv = series.to_csv()
    csv_name = f"{stem}.csv"
    write_atomic(os.path.join(out_dir, csv_name), csv)
    man = _manifest(
        cfg,
        config_text,
        {csv_name: content_hash(csv)},
        {"kind": "simulate", "columns": series.header(), "diagnostics": diag,
         "wall_clock_s": time.perf_counter() - t0},
        threads,
    )
    write_atomic(os.path.join(out_dir, manifest_name(stem)), json.dumps(man, indent=2, sort_keys=True) + "\n")
    return man


def write_poincare(cfg, config_text, out_dir, stem) -> dict:
    t0 = time.perf_counter()
    sec, info = poincare_config(cfg)
    csv = section_csv(sec)
    csv_name = f"{stem}.section.csv"
    write_atomic(os.path.join(out_dir, csv_name), csv)
    man = _manifest(
        cfg,
        config_text,
        {csv_name: content_hash(csv)},
        {"kind": "poincare", "section": info, "wall_clock_s": time.perf_counter() - t0},
    )
    write_atomic(
        os.path.join(out_dir, manifest_name(f"{stem}.section")), json.dumps(man, indent=2, sort_keys=True) + "\n"
    )
    return man
