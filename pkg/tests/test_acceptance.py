"""Acceptance suite: one test and one PASS/FAIL summary line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines appear in
the "acceptance" section at the end of the report.
"""
import json
import math
from functools import lru_cache

import numpy as np
import pytest

from qspde.grid import TimeGrid
from qspde.harness import execute, preset
from qspde.harness.cli import main
from qspde.harness.scenarios import analytic_heat
from qspde.noise import sample_paths
from qspde.regularity import estimate_time_exponent, parabolic_holder_norm

pytestmark = pytest.mark.slow


@lru_cache(maxsize=None)
def _decomposed(name, nx, dt, replicas=20):
    return execute(preset(name, spde__nx=nx, spde__dt=dt, replicas=replicas, report__mode_times=[]),
                   "decompose")


def _column(out, key):
    return np.array([r[key] for r in out.records])


def test_c01_cli_rerun_is_bit_identical(tmp_path, verdict):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = QUASI\nspde.nx = 15\nspde.dt = 1e-3\nspde.T = 0.05\nreplicas = 4\n"
                   "run.chunk = 3\nreg.min_lags = 2\nconverge.ladder = 7:1e-3, 15:5e-4, 31:2.5e-4\n")
    bad = []
    for cmd in ("simulate", "decompose", "regularity", "checks", "converge"):
        dirs = [tmp_path / cmd / d for d in ("a", "b")]
        for d in dirs:
            main([cmd, "--config", str(cfg), "--out", str(d)])
        files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
        names_b = sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
        if files != names_b:
            bad.append(f"{cmd}: file sets differ")
            continue
        for f in files:
            a, b = (d / f for d in dirs)
            if f.name == "run.json":
                ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
                ja["config"].pop("output.dir"), jb["config"].pop("output.dir")
                same = ja == jb
            else:
                same = a.read_bytes() == b.read_bytes()
            if not same:
                bad.append(f"{cmd}/{f}")
    verdict("1 determinism", not bad, ", ".join(bad) or "5 commands, all outputs identical")


def test_c02_heat_reduction(verdict):
    cfg = preset("HEAT", output__fields=1)
    out = execute(cfg, "simulate")
    u = out.fields[0]["u"]
    t = np.linspace(0, cfg["spde.T"], u.shape[0])
    x = np.arange(1, cfg["spde.nx"] + 1) / (cfg["spde.nx"] + 1)
    err = float(np.max(np.abs(u - analytic_heat(cfg)(t, x))))
    # the time ladder uses a fine grid so the spatial error does not mask the time error
    time = execute(preset("HEAT", converge__ladder=[[511, 1e-4], [511, 5e-5], [511, 2.5e-5]],
                          converge__min_time_order=0.9), "converge")
    space = execute(preset("HEAT", converge__ladder=[[7, 2.5e-6], [15, 2.5e-6], [31, 2.5e-6]],
                           converge__min_space_order=1.9), "converge")
    t_ord = time.verdicts["time_order"]["orders"]
    s_ord = space.verdicts["space_order"]["orders"]
    ok = err <= 5e-3 and time.passed and space.passed
    verdict("2 heat reduction", ok,
            f"sup error {err:.2e}; time orders {[round(o, 3) for o in t_ord]}; "
            f"space orders {[round(o, 3) for o in s_ord]}")


def test_c03_ou_variance(verdict):
    sigma = 1.0
    out = execute(preset("ADDITIVE", spde__nx=15, spde__dt=2.5e-4, replicas=10_000, run__chunk=500,
                         noise__sigma=sigma, output__fields=0, output__series_replicas=0), "decompose")
    n = len(out.records)
    parts, ok = [], True
    for t in (0.05, 0.1):
        c = _column(out, f"z_mode1_t{t:g}")
        var = float(np.var(c, ddof=1))
        target = sigma**2 * (1 - math.exp(-2 * math.pi**2 * t)) / (2 * math.pi**2)
        se = var * math.sqrt(2.0 / (n - 1))
        ok &= abs(var - target) <= 3 * se
        parts.append(f"t={t:g}: {var:.5f} vs {target:.5f} ({abs(var - target) / se:.2f} SE)")
    verdict("3 OU variance", ok, "; ".join(parts))


def test_c04_decomposition_residual_decreases(verdict):
    coarse = _decomposed("QUASI", 63, 2e-4)
    fine = _decomposed("QUASI", 127, 5e-5)
    rc, rf = _column(coarse, "residual_sup"), _column(fine, "residual_sup")
    ratio = rc / rf
    ok = bool(np.all(np.isfinite(rc)) and np.all(np.isfinite(rf)) and np.all(ratio >= 1.5))
    verdict("4 decomposition identity", ok, f"per-replica ratio min {ratio.min():.2f}, median {np.median(ratio):.2f}")


def test_c05_energy_estimate(verdict):
    parts, ok = [], True
    for name in ("HEAT", "ADDITIVE", "QUASI"):
        ec = _column(_decomposed(name, 63, 2e-4), "energy_ratio")
        ef = _column(_decomposed(name, 127, 5e-5), "energy_ratio")
        drift = abs(ef.mean() / ec.mean() - 1)
        ok &= bool(ec.max() <= 10 and ef.max() <= 10 and drift <= 0.2)
        parts.append(f"{name} max {max(ec.max(), ef.max()):.3f} drift {100 * drift:.1f}%")
    verdict("5 energy estimate", ok, "; ".join(parts))


def test_c06_maximum_principle(verdict):
    worst = 0.0
    for cfg in (preset("HEAT"), preset("HEAT", spde__A="twoplus_sin", spde__u0="bump"),
                preset("HEAT", spde__A="twoplus_sin", spde__u0="parabola", spde__nx=255, spde__dt=1e-3)):
        v = execute(cfg, "decompose").verdicts["maxprinciple"]
        worst = max(worst, v["worst"])
    verdict("6 maximum principle", worst <= 1e-12, f"largest step increase {worst:.2e}")


def test_c07_compatibility(verdict):
    ok_run = execute(preset("COMPAT_K2_PASS"), "checks")
    bad_run = execute(preset("COMPAT_K2_FAIL"), "checks")
    h = 1.0 / (ok_run.config["spde.nx"] + 1)
    traces = ok_run.details["compatibility"]["traces"]
    largest = max(abs(v) for vals in traces.values() for v in vals)
    fail_trace = min(abs(v) for v in bad_run.details["compatibility"]["traces"]["u0_1"])
    ok = largest <= 10 * h and ok_run.passed and fail_trace >= 1 and not bad_run.passed
    verdict("7 compatibility", ok, f"pass preset largest trace {largest:.2e} (10h = {10 * h:.2e}); "
                                   f"fail preset |u0_1| trace {fail_trace:.4f}")


def test_c08_time_regularity_bands(verdict):
    add = execute(preset("ADDITIVE", replicas=100, reg__fields=["z"], report__mode_times=[]), "regularity")
    quasi = execute(preset("QUASI", replicas=20, reg__fields=["u"]), "regularity")
    heat = execute(preset("HEAT", reg__fields=["u"]), "regularity")
    ez = add.details["regularity"]["z"]["time_exponent"]["exponent"]
    eu = quasi.details["regularity"]["u"]["time_exponent"]["exponent"]
    eh = heat.details["regularity"]["u"]["time_exponent"]["exponent"]
    ok = 0.35 <= ez <= 0.50 and 0.30 <= eu <= 0.55 and eh >= 0.9
    verdict("8 time-regularity bands", ok, f"ADDITIVE z {ez:.3f}; QUASI u {eu:.3f}; HEAT u {eh:.3f}")


def test_c09_spatial_regularity_gain(verdict):
    cutoffs, ok, parts = [], True, []
    for p in (1.75, 2.0, 2.25):
        cfg = preset("LINEARQ", noise__q_power=p, noise__k_trunc=0, spde__nx=63, spde__dt=2.5e-6,
                     spde__T=0.02, replicas=20, reg__fields=["z"], reg__min_lags=3)
        har = execute(cfg.override(checks=["har"]), "checks").verdicts["har"]["passed"]
        bp = execute(cfg, "regularity").details["regularity"]["z"]["bessel"]
        stable = dict(zip(bp["a_list"], bp["stable"]))
        low = all(s for a, s in stable.items() if a <= 1.5)
        high = any(not s for a, s in stable.items() if a <= 3.0)
        ok &= bool(har and low and high)
        cutoffs.append(bp["cutoff"])
        parts.append(f"q_k=k^-{p:g}: surrogate {'ok' if har else 'fails'}, cutoff {bp['cutoff']:g}")
    monotone = all(a <= b for a, b in zip(cutoffs, cutoffs[1:])) and cutoffs[0] < cutoffs[-1]
    verdict("9 spatial-regularity gain", ok and monotone, "; ".join(parts))


def test_c10_estimator_calibration(verdict):
    t = np.linspace(0, 1, 4097)
    dt = t[1]
    e_sqrt = estimate_time_exponent(np.sqrt(t)[:, None], dt).exponent
    e_lin = estimate_time_exponent(t[:, None], dt).exponent
    tg = TimeGrid(4096, 1.0)
    e_bm = estimate_time_exponent(sample_paths(11, tg, 1, range(100)).values(), tg.dt).exponent
    rel = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        nt, nx = rng.integers(2, 6, size=2)
        v = rng.standard_normal((nt, nx))
        tt, xx = np.linspace(0, 0.04, nt), np.linspace(0, 1, nx)
        exact = parabolic_holder_norm(v, tt, xx, 0.5)
        sampled = parabolic_holder_norm(v, tt, xx, 0.5, max_exhaustive_pairs=0)
        rel.append(abs(sampled / exact - 1))
    ok = abs(e_sqrt - 0.5) <= 0.05 and abs(e_lin - 1) <= 0.05 and 0.42 <= e_bm <= 0.55 and max(rel) <= 0.05
    verdict("10 estimator calibration", ok,
            f"sqrt(t) {e_sqrt:.3f}; t {e_lin:.3f}; Brownian {e_bm:.3f}; Hoelder max rel gap {max(rel):.3f}")


def test_c11_growth(verdict):
    lq = execute(preset("LINEARQ", checks=["growth"]), "checks").verdicts["growth"]
    quad = execute(preset("ADDITIVE", noise__finite_dim="quadratic", checks=["growth"]), "checks").verdicts["growth"]
    ok = lq["passed"] and lq["constant"] <= 8 / 3 + 1e-6 and not quad["passed"]
    verdict("11 growth", ok, f"LINEARQ constant {lq['constant']:.6f}; quadratic passes={quad['passed']}")
