"""End-to-end acceptance checks.

One test per shipped guarantee, each printing a single PASS/FAIL line with
the measured numbers.  Budgets are fixed (seeds, rep counts, fit windows) so
every run reproduces the same values bit for bit.

Criterion 2 is expected to fail; see the assertion message for the geometry
behind it.
"""
import json
import math
import re
import time

import numpy as np
import pytest

from test_ifs import hausdorff_weights, random_system

from fracgauss import cli
from fracgauss.entropy import (MixedParams, covering_number, delta_curve,
                               fit_powerlaw, inner_entropy, packing_number,
                               sigma_curve, sigma_infty, sigma_line_curve)
from fracgauss.fields import conditional_variance, fbm, gram
from fracgauss.ifs import (builtin_system_names, enumerate_level_words,
                           gamma_exponent, load_system, sample_measure,
                           similarity_dimension)
from fracgauss.smalldev import Budget, verify

D_CANTOR = math.log(2) / math.log(3)
GAMMA_CANTOR = 2 * math.log(2) / math.log(6)
A_CANTOR = D_CANTOR / 0.5  # = gamma*q/(q - gamma) at (H, q) = (1/2, 2)


@pytest.fixture
def announce(capsys):
    """Print one always-visible status line per criterion."""
    def _line(num, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {num:02d}: {'PASS' if ok else 'FAIL'} "
                  f"- {detail}")
    return _line


def test_criterion_01_exponent_solvers(cantor, announce):
    t0 = time.perf_counter()
    d_err = abs(similarity_dimension(cantor) - D_CANTOR)
    g_err = abs(gamma_exponent(cantor, 0.5, 2.0).gamma - GAMMA_CANTOR)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        sys_h = hausdorff_weights(random_system(rng))
        h = float(rng.uniform(0.2, 1.0))
        q = float(rng.uniform(1.0, 10.0))
        d = similarity_dimension(sys_h)
        a = gamma_exponent(sys_h, h, q).a
        worst = max(worst, abs(a - d / h))
    dt = time.perf_counter() - t0
    ok = d_err <= 1e-9 and g_err <= 1e-9 and worst <= 1e-9 and dt < 1.0
    announce(1, ok, f"dim err {d_err:.2e}, gamma err {g_err:.2e}, "
                 f"worst identity err {worst:.2e}, {dt:.2f}s")
    assert d_err <= 1e-9
    assert g_err <= 1e-9
    assert worst <= 1e-9
    assert dt < 1.0


def test_criterion_02_word_cover_growth(cantor, sierpinski, announce):
    t0 = time.perf_counter()
    svals = np.arange(2, 9, dtype=float)
    report = []
    deficits = []
    for name, system in (("cantor", cantor), ("sierpinski", sierpinski)):
        gam = gamma_exponent(system, 0.5, 2.0).gamma
        counts = [len(enumerate_level_words(system, 0.5, 2.0, s))
                  for s in svals]
        slope = float(np.polyfit(svals, np.log(counts), 1)[0])
        rel = abs(slope - gam) / gam
        deficits.append(rel)
        report.append(f"{name} slope {slope:.4f} vs gamma {gam:.4f} "
                      f"({100 * rel:.1f}% off)")
    dt = time.perf_counter() - t0
    ok = max(deficits) <= 0.05 and dt < 10.0
    announce(2, ok, "; ".join(report) + f", {dt:.2f}s")
    assert dt < 10.0
    assert max(deficits) <= 0.05, (
        "integer levels quantize the cover: every unit step in s multiplies "
        "the count by exactly m, so the fitted slope is ln(m), about 10% "
        "below gamma for these two systems; the bound count <= c*exp(gamma*s)"
        " still holds (it is checked in test_ifs), but no linear fit on an "
        "integer s in 2..8 can land within 5% for lattice scale sets"
    )


def test_criterion_03_mixed_entropy_slopes(cantor, announce):
    t0 = time.perf_counter()
    params = MixedParams(0.5, 2.0, 1)
    ns = 2 ** np.arange(2, 9)  # m^2 .. m^8 for m = 2
    sig_slope = fit_powerlaw(sigma_curve(cantor, params, ns)).exponent
    del_slope = fit_powerlaw(delta_curve(cantor, params, ns)).exponent
    sig_target = -(1.0 / GAMMA_CANTOR - 1.0 / params.r)
    del_target = -1.0 / GAMMA_CANTOR
    sig_rel = abs(sig_slope - sig_target) / abs(sig_target)
    del_rel = abs(del_slope - del_target) / abs(del_target)
    dt = time.perf_counter() - t0
    ok = sig_rel <= 0.10 and del_rel <= 0.10 and dt < 30.0
    announce(3, ok, f"sigma slope {sig_slope:.5f} (target {sig_target:.5f}), "
                 f"delta slope {del_slope:.5f} (target {del_target:.5f}), "
                 f"{dt:.2f}s")
    assert sig_rel <= 0.10
    assert del_rel <= 0.10
    assert dt < 30.0


def test_criterion_04_inner_outer_band(cantor_level11, announce):
    t0 = time.perf_counter()
    params = MixedParams(0.5, 2.0, 1)
    ns = np.arange(4, 1025)
    sig = sigma_line_curve(cantor_level11, params, ns)
    dlt = delta_curve(cantor_level11, params, ns)
    power = 1.0 / params.r
    sig_vals = np.array([v for _, v in sig.points])
    dlt_vals = np.array([v for _, v in dlt.points])
    ratios = ns.astype(float) ** power * dlt_vals / sig_vals
    lo, hi = float(ratios.min()), float(ratios.max())
    dt = time.perf_counter() - t0
    ok = 0.1 <= lo and hi <= 10.0 and dt < 60.0
    announce(4, ok, f"ratio range [{lo:.4f}, {hi:.4f}] over n in 4..1024, "
                 f"{dt:.1f}s")
    assert lo >= 0.1
    assert hi <= 10.0
    assert dt < 60.0


def test_criterion_05_conditional_variance(announce):
    t0 = time.perf_counter()
    bm = fbm(0.5)
    rng = np.random.default_rng(77)
    worst_cv = 0.0
    for _ in range(50):
        t = float(rng.uniform(0.2, 1.0))
        tau = float(rng.uniform(0.01, 0.9 * t))
        grid = np.linspace(0.0, t - tau, int(rng.integers(5, 40)))
        cv = conditional_variance(bm, [t], grid.reshape(-1, 1))
        worst_cv = max(worst_cv, abs(cv - tau))
    worst_inc = 0.0
    for h in (0.3, 0.5, 0.7):
        k = fbm(h)
        for _ in range(20):
            s, t = sorted(rng.uniform(0.0, 1.0, size=2))
            g = gram(k, [[s], [t]])
            var = g[0, 0] + g[1, 1] - 2 * g[0, 1]
            worst_inc = max(worst_inc, abs(var - abs(t - s) ** (2 * h)))
    dt = time.perf_counter() - t0
    ok = worst_cv <= 1e-8 and worst_inc <= 1e-12 and dt < 5.0
    announce(5, ok, f"worst markov gap {worst_cv:.2e}, worst increment gap "
                 f"{worst_inc:.2e}, {dt:.2f}s")
    assert worst_cv <= 1e-8
    assert worst_inc <= 1e-12
    assert dt < 5.0


def test_criterion_06_mc_rate_lebesgue(announce):
    t0 = time.perf_counter()
    report = verify(fbm(0.5), 2.0, 7, lebesgue_dim=1, budget=Budget())
    dt = time.perf_counter() - t0
    a = report.a_fit
    ok = 1.6 <= a <= 2.4 and dt < 300.0
    announce(6, ok, f"a_fit {a:.4f} in [1.6, 2.4] (prediction 2), 256 sites, "
                 f"2e5 reps, eps in [0.25, 0.9], {dt:.1f}s")
    assert 1.6 <= a <= 2.4
    assert dt < 300.0


def test_criterion_07_mc_rate_cantor_l2(cantor, announce):
    t0 = time.perf_counter()
    budget = Budget(reps=200_000, eps_lo=0.12, eps_hi=0.22, eps_count=8)
    report = verify(fbm(0.5), 2.0, 7, system=cantor, budget=budget)
    dt = time.perf_counter() - t0
    cells = int(re.search(r"(\d+) cells", report.quadrature).group(1))
    rel = abs(report.a_fit - A_CANTOR) / A_CANTOR
    ok = rel <= 0.25 and cells >= 243 and dt < 600.0
    announce(7, ok, f"a_fit {report.a_fit:.4f} vs D/H {A_CANTOR:.4f} "
                 f"(rel {rel:.3f} <= 0.25), {cells} cells, 2e5 reps, "
                 f"{dt:.1f}s")
    assert cells >= 243
    assert rel <= 0.25
    assert dt < 600.0


def test_criterion_08_mc_rate_cantor_sup(cantor, announce):
    t0 = time.perf_counter()
    budget = Budget(reps=200_000, eps_lo=0.23, eps_hi=0.36, eps_count=10)
    report = verify(fbm(0.5), math.inf, 7, system=cantor, budget=budget)
    dt = time.perf_counter() - t0
    cells = int(re.search(r"(\d+) cells", report.quadrature).group(1))
    rel = abs(report.a_fit - A_CANTOR) / A_CANTOR
    ok = rel <= 0.25 and cells >= 243 and dt < 600.0
    announce(8, ok, f"a_fit {report.a_fit:.4f} vs D/H {A_CANTOR:.4f} "
                 f"(rel {rel:.3f} <= 0.25), {cells} cells, 2e5 reps, "
                 f"{dt:.1f}s")
    assert cells >= 243
    assert rel <= 0.25
    assert dt < 600.0


def test_criterion_09_entropy_sandwich(announce):
    t0 = time.perf_counter()
    sandwich_ok = True
    for name in builtin_system_names():
        pts = sample_measure(load_system(name), 500, seed=42).points
        for eps in (0.4, 0.2, 0.1, 0.05):
            cov = covering_number(pts, eps)
            pack = packing_number(pts, eps)
            cov_half = covering_number(pts, eps / 2)
            sandwich_ok = sandwich_ok and cov <= pack <= cov_half

    h = 0.5
    band_lo, band_hi = math.inf, -math.inf
    grids = [
        (1, np.linspace(0.0, 1.0, 513).reshape(-1, 1)),
        (2, np.stack(np.meshgrid(np.linspace(0, 1, 33),
                                 np.linspace(0, 1, 33)), -1).reshape(-1, 2)),
    ]
    for dim, pts in grids:
        for n in 2 ** np.arange(1, 8):
            ratio = (n ** (h / dim) * inner_entropy(pts, int(n)) ** h
                     / sigma_infty(pts, h, int(n)))
            band_lo = min(band_lo, ratio)
            band_hi = max(band_hi, ratio)
    dt = time.perf_counter() - t0
    ok = sandwich_ok and 0.1 <= band_lo and band_hi <= 10.0 and dt < 30.0
    announce(9, ok, f"sandwich holds on {len(builtin_system_names())} builtin "
                 f"clouds, band [{band_lo:.4f}, {band_hi:.4f}], {dt:.1f}s")
    assert sandwich_ok
    assert band_lo >= 0.1
    assert band_hi <= 10.0
    assert dt < 30.0


def test_criterion_10_manifest_replay(tmp_path, announce):
    base = ["verify", "--kernel", "fbm:0.5", "--q", "2", "--lebesgue-dim",
            "1", "--sites", "32", "--reps", "5000", "--eps-count", "6",
            "--seed", "7"]
    assert cli.run(base + ["--out", str(tmp_path / "a")]) == 0
    manifest = json.loads((tmp_path / "a.manifest.json").read_text())
    argv = list(manifest["argv"])
    argv[argv.index("--out") + 1] = str(tmp_path / "b")
    assert cli.run(argv) == 0
    assert cli.run(base + ["--out", str(tmp_path / "t1"),
                           "--threads", "1"]) == 0
    assert cli.run(base + ["--out", str(tmp_path / "t4"),
                           "--threads", "4"]) == 0
    replay_same = all(
        (tmp_path / ("a" + ext)).read_bytes()
        == (tmp_path / ("b" + ext)).read_bytes()
        for ext in (".curve.csv", ".report.json"))
    threads_same = all(
        (tmp_path / ("t1" + ext)).read_bytes()
        == (tmp_path / ("t4" + ext)).read_bytes()
        for ext in (".curve.csv", ".report.json"))
    announce(10, replay_same and threads_same,
             f"manifest replay bitwise identical: {replay_same}, "
             f"threads 1 vs 4 identical: {threads_same}")
    assert replay_same
    assert threads_same
