"""Acceptance suite: one PASS/FAIL line per criterion.

Every test records a line ``ACC-nn name: PASS|FAIL | measurements`` that is
repeated in the terminal summary, then asserts the criterion.  Thresholds are
the pinned values below; nothing is relaxed when a criterion fails.
"""
import time

import numpy as np
import pytest

from conftest import record
from stratheat import experiments as ex
from stratheat.config import ExperimentConfig

BASE = ExperimentConfig(threads=4)


def _report(num, name, ok, detail, elapsed, limit):
    within = elapsed < limit
    verdict = "PASS" if ok and within else "FAIL"
    record(f"{num:02d}", f"ACC-{num:02d} {name}: {verdict} | {detail} | {elapsed:.1f}s (limit {limit:g}s)")
    return ok and within


def _ratios(rows):
    return ", ".join("n={}: {:.3f}".format(r["n"], r["ratio"]) for r in rows)


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def test_acc01_spectral_exactness():
    res, dt = _timed(ex.spectral_exactness, BASE)
    err = res.summary["max_error"]
    assert _report(1, "spectral_exactness", err <= 1e-12, f"max |a_k - e^(-k^2 pi^2 t) a_k(0)| = {err:.2e} (<= 1e-12)", dt, 1.0)


def test_acc02_constant_field_correction():
    res, dt = _timed(ex.constant_field_correction, BASE)
    d = res.summary["max_difference"]
    assert _report(2, "constant_field_correction", d <= 1e-14, f"max |c=0 - c=1/2| = {d:.2e} (<= 1e-14)", dt, 1.0)


def test_acc03_wong_zakai_discrimination():
    res, dt = _timed(ex.wong_zakai_convergence, BASE)
    meds = [r["median_distance"] for r in res.rows]
    dec = bool(np.all(np.diff(meds) < 0))
    r0, r1 = res.summary["ratio_c0_over_chalf"], res.summary["ratio_c1_over_chalf"]
    ok = dec and r0 >= 2.0 and r1 >= 2.0
    detail = (f"medians {', '.join(f'{m:.3f}' for m in meds)} strictly decreasing={dec}; "
              f"n=64 ratio d(c=0)/d(c=1/2) = {r0:.2f}, d(c=1)/d(c=1/2) = {r1:.2f} (need >= 2); "
              f"L2-norm ratios {res.summary['l2_ratio_c0_over_chalf']:.2f}, "
              f"{res.summary['l2_ratio_c1_over_chalf']:.2f}")
    assert _report(3, "wong_zakai_discrimination", ok, detail, dt, 600)


def test_acc04_donsker_moment_condition_i():
    cfg = BASE.replace(p=2, mc_count=20000)
    res, dt = _timed(ex.moments_tightness, cfg, "donsker")
    rows = res.rows
    fam = [r for r in rows if r["family"] == "donsker"]
    bm = [r for r in rows if r["family"] == "brownian"][0]
    bounded = all(r["ratio"] <= 4 * fam[0]["ratio"] for r in fam)
    control = abs(bm["ratio"] - 3.0) <= 3 * bm["se"]
    detail = (f"ratios {_ratios(fam)} (<= 4x n=10); "
              f"Brownian {bm['ratio']:.3f} +- {bm['se']:.3f} vs 3")
    assert _report(4, "donsker_moment_condition_i", bounded and control, detail, dt, 120)


def test_acc05_kac_moment_condition_i():
    cfg = BASE.replace(p=1, mc_count=20000)
    res, dt = _timed(ex.moments_tightness, cfg, "kac-stroock")
    fam = [r for r in res.rows if r["family"] == "kac-stroock"]
    bm = [r for r in res.rows if r["family"] == "brownian"][0]
    bounded = all(r["ratio"] <= 4 * fam[0]["ratio"] for r in fam)
    control = abs(bm["ratio"] - 1.0) <= 3 * bm["se"]
    viol = res.summary["lipschitz_violations"]
    detail = (f"ratios {_ratios(fam)} (<= 4x n=10); "
              f"Brownian {bm['ratio']:.3f} +- {bm['se']:.3f} vs 1; Lipschitz violations {viol} "
              f"over {res.summary['lipschitz_paths_checked']} paths")
    assert _report(5, "kac_stroock_moment_condition_i", bounded and control and viol == 0, detail, dt, 120)


def test_acc06_coupling_rates():
    cfg = BASE.replace(p=2, mc_count=5000)
    t0 = time.perf_counter()
    d = ex.coupling_rates(cfg, "donsker")
    k = ex.coupling_rates(cfg, "kac")
    dt = time.perf_counter() - t0
    fd, fk = d.summary["fit"], k.summary["fit"]
    ok = fd["slope"] <= -0.4 and fd["r2"] >= 0.9 and fk["slope"] <= -0.35 and fk["r2"] >= 0.9
    detail = (f"Donsker slope {fd['slope']:.3f} (<= -0.4) R2 {fd['r2']:.3f}; "
              f"Kac-Stroock slope {fk['slope']:.3f} (<= -0.35) R2 {fk['r2']:.3f} (>= 0.9); "
              f"sup moments D {[round(r['sup_moment'], 5) for r in d.rows]}, "
              f"K {[round(r['sup_moment'], 5) for r in k.rows]}")
    assert _report(6, "coupling_rates", ok, detail, dt, 600)


def test_acc07_chen_relation():
    res, dt = _timed(ex.chen_relation, BASE)
    r = res.rows
    ratios = [(x["ratio_lw"], x["ratio_lww"]) for x in r[1:]]
    halving = all(a <= 0.6 and b <= 0.6 for a, b in ratios)
    last = r[-1]
    tol = 1e-3 * res.summary["phi_norm"]
    small = last["max_residual_lw"] < tol and last["max_residual_lww"] < tol
    detail = (f"RMS ratios per doubling {', '.join(f'({a:.3f}, {b:.3f})' for a, b in ratios)} (<= 0.6); "
              f"max residuals at q=256 {last['max_residual_lw']:.2e}, {last['max_residual_lww']:.2e} "
              f"(< {tol:.2e})")
    assert _report(7, "chen_relation", halving and small, detail, dt, 120)


def test_acc08_remainder_ordering():
    res, dt = _timed(ex.roughness, BASE)
    f = res.summary["fits"]
    eQ, eK, eD = f["Q"]["exponent"], f["K"]["exponent"], f["dhat"]["exponent"]
    r2 = {k: v["r2"] for k, v in f.items()}
    ok = (eQ >= 1.0 > eK >= 0.55 > eD and 0.3 <= eD <= 0.6 and eQ > eK > eD
          and all(v >= 0.9 for v in r2.values()))
    detail = (f"exponents Q {eQ:.3f} (>= 1), K {eK:.3f} (in [0.55, 1)), dhat {eD:.3f} "
              f"(in [0.3, 0.55)); R2 Q {r2['Q']:.3f}, K {r2['K']:.3f}, dhat {r2['dhat']:.3f} (>= 0.9)")
    assert _report(8, "remainder_ordering", ok, detail, dt, 600)


@pytest.mark.parametrize("family", ["donsker", "kac-stroock"])
def test_acc09_weak_convergence(family):
    cfg = BASE.replace(n_list=[8, 32, 128], mc_count=2000)
    res, dt = _timed(ex.weak_convergence, cfg, family)
    parts, ok = [], True
    for fn in ("e1", "l2sq"):
        s = res.summary[fn]
        ok &= res.verdicts[f"{fn}_monotone"] and res.verdicts[f"{fn}_halved_or_within_3se"]
        parts.append(f"{fn}: gaps {', '.join(f'{g:.2e}' for g in s['gaps'])} "
                     f"(3 SE {', '.join(f'{3 * e:.1e}' for e in s['ses'])})")
    num = 9
    key = f"09{'a' if family == 'donsker' else 'b'}"
    line_ok = ok and dt < 900
    record(key, f"ACC-{num:02d} weak_convergence[{family}]: {'PASS' if line_ok else 'FAIL'} | "
                f"{'; '.join(parts)} | {dt:.1f}s (limit 900s)")
    assert line_ok


def test_acc10_weighted_sums():
    res, dt = _timed(ex.weighted_sums, BASE)
    zs = [r["z"] for r in res.rows]
    ok = all(abs(z) <= 3 for z in zs)
    detail = f"z-scores vs exact oracle {', '.join(f'{z:+.2f}' for z in zs)} (|z| <= 3)"
    assert _report(10, "weighted_sum_oracle", ok, detail, dt, 60)


def test_acc11_yosida():
    res, dt = _timed(ex.yosida_consistency, BASE)
    e = res.summary["max_error"]
    assert _report(11, "yosida_consistency", e <= 1e-5, f"max deviation {e:.2e} (<= 1e-5)", dt, 1.0)
