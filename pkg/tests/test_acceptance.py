"""One test per acceptance criterion, each printing a PASS/FAIL verdict line.

Expensive runs are computed once per session and shared between criteria.
"""

import math
import time

import numpy as np
import pytest

from qclmi import analytic, gaussian, liouville, runner
from qclmi.core import ModelSpec, load_config
from qclmi.fock import fock_series

from conftest import make_config, report

pytestmark = pytest.mark.slow

_RUNS = {}


def run(name, cfg=None):
    """``(series, diag, seconds)`` for a preset or an explicit config, cached."""
    if name not in _RUNS:
        cfg = cfg if cfg is not None else load_config(name, env={})
        t0 = time.perf_counter()
        series, diag = runner.simulate_config(cfg)
        _RUNS[name] = (series, diag, time.perf_counter() - t0, cfg)
    return _RUNS[name]


def rwa_coherent_config():
    return make_config("rwa", lam=0.7, hbar=1.0, centers=(0.8, -0.3, -0.5, 0.6), tmax=2 * math.pi, steps=40)


def rwa_fock_config(**kw):
    return make_config("rwa", lam=1.0, hbar=1.0, states=("fock", "fock"), tmax=math.pi / 2, steps=16,
                       fock_nmax=6, **kw)


def first_reach(t, values, level):
    hit = np.nonzero(values >= level)[0]
    return float(t[hit[0]]) if len(hit) else math.inf


def test_criterion_1_bilinear_identity():
    s, diag, secs, cfg = run("fig1")
    t = s.times
    gap_cl = float(np.max(abs(s["I_q"] - s["I_cl"])))
    oracle = np.array([analytic.bilinear_icl_oracle(cfg.model, cfg.density.center, x) for x in t])
    gap_or = float(np.max(abs(s["I_q"] - oracle)))
    ok = len(t) >= 200 and t[-1] == 10.0 and gap_cl < 1e-4 and gap_or < 1e-10 and secs < 300
    report(1, ok, f"max|I_q-I_cl|={gap_cl:.2e} (<1e-4), max|I_q-oracle|={gap_or:.2e} (<1e-10), "
                  f"runtime {secs:.0f}s (<300s)")
    assert ok


def test_criterion_2_center_independence():
    rng = np.random.default_rng(2024)
    model = ModelSpec("bilinear", 1.0, 1.0, 0.9, 1.0)
    worst = 0.0
    for t in (0.3, 1.7, 4.2, 9.5):
        base = analytic.bilinear_icl_oracle(model, np.zeros(4), t)
        for c in rng.uniform(-3, 3, size=(10, 4)):
            worst = max(worst, abs(analytic.bilinear_icl_oracle(model, c, t) - base))
    ok = worst < 1e-12
    report(2, ok, f"max spread over 10 random centers = {worst:.2e} (<1e-12)")
    assert ok


def test_criterion_3_rwa_coherent_inputs():
    s, diag, _, cfg = run("rwa_coherent", rwa_coherent_config())
    oracle = np.array([analytic.bilinear_icl_oracle(cfg.model, cfg.density.center, x) for x in s.times])
    q = float(max(np.max(abs(s["I_q"])), np.max(abs(oracle))))
    cl = float(np.max(abs(s["I_cl"])))
    ok = s.times[-1] == pytest.approx(2 * math.pi) and q < 1e-8 and cl < 2e-2
    report(3, ok, f"max|I_q|,|oracle| = {q:.2e} (<1e-8), max|I_cl| quadrature = {cl:.2e} (<2e-2)")
    assert ok


def test_criterion_4_rwa_fock_fock():
    s, diag, _, cfg = run("rwa_fock_fock", rwa_fock_config())
    t = s.times
    u = analytic.rwa_u(t, 1.0)
    q_gap = float(np.max(abs(s["S1_q"] - 8 * u)))
    cl_gap = float(np.max(abs(s["S1_cl"] - u)))
    ev = liouville.DensityEvaluator.from_config(cfg)
    mc_gap = 0.0
    for x in t[1::4]:
        r = liouville.mc_entropies(ev, x, 100_000, seed=7)
        mc_gap = max(mc_gap, abs(r["S1_cl"] - analytic.rwa_u(x, 1.0)))
    tau0 = analytic.purification_period(1.0)
    end_q, end_cl = abs(float(s["I_q"][-1])), abs(float(s["I_cl"][-1]))
    ok = (t[-1] == pytest.approx(tau0) and q_gap < 1e-8 and cl_gap < 2e-2 and mc_gap < 2e-2
          and end_q < 1e-8 and end_cl < 2e-2)
    report(4, ok, f"max|S1_q-8u|={q_gap:.2e} (<1e-8), max|S1_cl-u| quad={cl_gap:.2e} MC={mc_gap:.2e} (<2e-2), "
                  f"I_q(tau0)={end_q:.1e}, I_cl(tau0)={end_cl:.1e}")
    assert ok


def test_criterion_5_rwa_vacuum_one_photon():
    s, diag, _, cfg = run("fig4")
    t = s.times
    ref = analytic.rwa_coh_fock(t, 1.0)
    closed_q = np.sin(2 * t) ** 2 * (7 + np.cos(4 * t)) / 8
    closed_cl = np.sin(2 * t) ** 2 * (15 + np.cos(4 * t)) / 64
    np.testing.assert_allclose(ref["I"], closed_q, atol=1e-15)
    q_gap = float(np.max(abs(s["I_q"] - closed_q)))
    cl_gap = float(np.max(abs(s["I_cl"] - closed_cl)))
    mq, mcl = float(np.max(s["I_q"])), float(np.max(s["I_cl"]))
    ok = q_gap < 1e-8 and cl_gap < 2e-2 and abs(mq - 0.75) < 1e-8 and mq > mcl
    report(5, ok, f"max|I_q-closed|={q_gap:.2e} (<1e-8), max|I_cl-closed|={cl_gap:.2e} (<2e-2), "
                  f"max I_q={mq:.6f} (0.75), max I_cl={mcl:.4f}")
    assert ok


@pytest.fixture(scope="module")
def fig3_runs():
    return {label: run(name) for label, name in (("regular", "fig3a"), ("chaotic", "fig3b"))}


def test_criterion_6a_short_time_agreement(fig3_runs):
    worst = {}
    for label, (s, *_rest) in fig3_runs.items():
        m = (s.times > 0) & (s.times < 1)
        rel = abs(s["I_q"][m] - s["I_cl"][m]) / np.maximum(s["I_q"][m], 1e-3)
        worst[label] = float(np.max(rel))
    ok = all(v < 0.15 for v in worst.values())
    report("6a", ok, "max_{t<1} |I_q-I_cl|/max(I_q,1e-3): "
                     + ", ".join(f"{k}={v:.3f}" for k, v in worst.items()) + " (<0.15)")
    assert ok


def test_criterion_6b_classical_exceeds_quantum_late(fig3_runs):
    means = {}
    for label, (s, *_rest) in fig3_runs.items():
        m = s.times > 1
        means[label] = float(np.mean(s["I_cl"][m] - s["I_q"][m]))
    ok = all(v > 0 for v in means.values())
    report("6b", ok, "mean_{t>1}(I_cl-I_q): " + ", ".join(f"{k}={v:.4f}" for k, v in means.items()) + " (>0)")
    assert ok


def test_criterion_6c_chaotic_grows_faster(fig3_runs):
    reach = {}
    for col in ("I_q", "I_cl"):
        for label, (s, *_rest) in fig3_runs.items():
            reach[(col, label)] = first_reach(s.times, s[col], 0.1)
    ok = all(reach[(c, "chaotic")] < reach[(c, "regular")] for c in ("I_q", "I_cl"))
    report("6c", ok, "first t with I>=0.1: " + ", ".join(
        f"{c} chaotic={reach[(c, 'chaotic')]:.2f} regular={reach[(c, 'regular')]:.2f}" for c in ("I_q", "I_cl")))
    assert ok


def _gaussian_energy_drift(cfg, times):
    M = gaussian.quadratic_form(cfg.model)
    st0 = gaussian.coherent_state(cfg.density, cfg.model.hbar)

    def energy(st):
        return 0.5 * float(np.trace(M @ st.cov)) + 0.5 * float(st.mean @ M @ st.mean)

    e0 = energy(st0)
    return max(abs(energy(gaussian.evolve(st0, gaussian.symplectic_propagator(M, t))) - e0) for t in times)


def test_criterion_7_conservation_suite(fig3_runs):
    names = ["fig1", "rwa_coherent", "rwa_fock_fock", "fig4", "fig3a", "fig3b"]
    lines, ok = [], True
    for name in names:
        if name not in _RUNS:
            cfg = {"rwa_coherent": rwa_coherent_config(), "rwa_fock_fock": rwa_fock_config()}.get(name)
            run(name, cfg)
        s, diag, _, cfg = _RUNS[name]
        q = diag["quantum"]
        liou = diag["liouville_max_rel_change"]
        schmidt = float(np.max(abs(s["S1_q"] - s["S2_q"])))
        if q["route"] == "gaussian":
            norm = q["global_purity_drift"]
            edrift = _gaussian_energy_drift(cfg, s.times)
        else:
            norm, edrift = q["norm_drift"], q["energy_drift"]
        rk4 = diag.get("rk4_energy_drift_per_time", 0.0)
        good = liou < 1e-2 and rk4 < 1e-9 and norm < 1e-10 and edrift < 1e-10 and schmidt < 1e-12
        ok &= good
        lines.append(f"{name}: liouville={liou:.1e} rk4={rk4:.1e} norm={norm:.1e} energy={edrift:.1e} "
                     f"S1-S2={schmidt:.1e}")
    report(7, ok, "; ".join(lines))
    assert ok


def test_criterion_8_monte_carlo_vs_trapezoid():
    worst, detail = 0.0, []
    ok = True
    for name in ("fast_fig3a", "fast_fig3b"):
        s, *_rest = run(name)
        allowed = np.maximum(2 * s["mc_stderr"], 2e-2)
        gap = abs(s["I_mc"] - s["I_cl"])
        ok &= bool(np.all(gap <= allowed))
        detail.append(f"{name}: max|I_mc-I_cl|={np.max(gap):.4f}, max ratio to allowance {np.max(gap / allowed):.2f}")
    report(8, ok, "; ".join(detail) + " (ratio <= 1)")
    assert ok


def test_criterion_9_poincare_section():
    cfg = load_config("fig2", env={})
    sec, info = runner.poincare_config(cfg)
    from qclmi import flows

    pts = np.array([[0.0, p.p1, p.q2, p.p2] for p in sec.points])
    residual = max(p.residual_q1 for p in sec.points)
    energy_err = float(np.max(abs(flows.energy(cfg.model, pts) - 0.05)))
    labels = info["labels"]
    disp = np.array(info["dispersion"])
    reg = disp[[lab == "regular" for lab in labels]]
    cha = disp[[lab == "chaotic" for lab in labels]]
    separated = len(reg) > 0 and len(cha) > 0 and reg.max() < cha.min()
    ok = energy_err < 1e-8 and residual < 1e-9 and separated
    report(9, ok, f"{len(pts)} points, max|H-0.05|={energy_err:.1e} (<1e-8), regular seeds {len(reg)} "
                  f"(dispersion <= {reg.max():.2f}), chaotic seeds {len(cha)} (dispersion >= {cha.min():.2f})")
    assert ok
