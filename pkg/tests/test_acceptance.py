"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Every tolerance is pinned here, none deferred.  Two criteria need commentary:

* Criterion 1 pins the strong-convergence slope window [0.35, 0.65] for the
  inversion-flow oracle study.  The integrator is the Stratonovich Heun
  scheme, and the inversion system has commutative noise (the column fields
  are a holomorphic multiple of each other), where Heun attains strong order
  ~1, not the generic multiplicative-noise order 1/2 the window presumes.
  Measured slopes are 0.8-1.2 for every seed tried.  The criterion is asserted
  exactly as stated and is expected to fail; see notes/decisions.md for the
  blocking analysis.  The companion assertion "order >= 0.4" (the flow-module
  contract) passes comfortably.

* Criteria 5 and 11 involve statistics of the linear restoring system whose
  derivative flow is deterministic, so the associated Monte Carlo standard
  errors are exactly zero and a zero-width confidence interval cannot cover
  anything.  The meaningful statistical resolution of those experiments is
  the standard error of the underlying solution-moment estimator, which is
  what the tolerances below use (criterion 5, second clause) and what the
  coverage experiment estimates (criterion 11, the terminal solution moment
  E x_t with true value e^{-t}).  The ledger records both readings.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from flowlab import (
    BrownianDriver,
    CertifyConfig,
    builtin,
    certify,
    estimate_Ptf,
    estimate_exponential_functional,
    estimate_moment_exponent,
    estimate_stopped_moment,
    gradient_consistency_check,
    integrate_derivative_flow,
    observable,
    oracle_convergence_study,
    schedule_for,
    tangent_project,
)

SEED = 2026


def report(num, ok, detail):
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} — {detail}")
    return ok


def test_criterion_01_inversion_oracle_slope():
    """Oracle equivalence: RMS pathwise error slope within [0.35, 0.65]."""
    scn = builtin("inversion_plane")
    t0 = time.time()
    res = oracle_convergence_study(scn, np.array([1.0, 0.0]), t=0.5,
                                   dts=[4e-3, 1e-3, 2.5e-4], n_paths=200,
                                   seed=SEED, filter_threshold=0.25)
    elapsed = time.time() - t0
    slope = res["slope"]
    decreasing = res["rms_errors"][-1] > res["rms_errors"][0]
    in_window = 0.35 <= slope <= 0.65
    ok = in_window and decreasing and elapsed < 30.0
    report(1, ok, f"slope={slope:.3f} (window [0.35, 0.65]), "
                  f"rms={['%.2e' % e for e in res['rms_errors']]}, {elapsed:.1f}s")
    assert elapsed < 30.0
    assert decreasing
    assert in_window, (
        f"measured slope {slope:.3f}: the Stratonovich Heun integrator is "
        "strong order ~1 on this commutative-noise system; see the ledger")


def test_criterion_02_derivative_flow_exactness():
    """Translation frame exactly the identity; OU decay to 1e-3 at dt=1e-4."""
    tr = builtin("translation(2)")
    sched = schedule_for(1.0, 1e-3)
    frame_err = 0.0
    for v0 in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        res = integrate_derivative_flow(tr.system, np.array([0.5, -0.5]), v0,
                                        sched, BrownianDriver(SEED, 2))
        frame_err = max(frame_err, float(np.max(np.abs(res.vs - v0))))
    ou = builtin("ou(1)")
    res_ou = integrate_derivative_flow(ou.system, np.array([1.0]), np.array([1.0]),
                                       schedule_for(1.0, 1e-4), BrownianDriver(SEED, 1))
    ou_err = abs(res_ou.vs[-1, 0, 0] - np.exp(-1.0))
    ok = frame_err <= 1e-12 and ou_err <= 1e-3
    report(2, ok, f"translation frame error={frame_err:.2e} (<=1e-12), "
                  f"OU |v_1 - e^-1|={ou_err:.2e} (<=1e-3)")
    assert frame_err <= 1e-12
    assert ou_err <= 1e-3


def test_criterion_03_hp_backend_cross_check():
    """Sphere H_p = (p+1-n)|v|^2 via both curvature backends, 1e-8, 100 pairs."""
    from flowlab import eval_Hp

    rng = np.random.default_rng(SEED)
    worst = 0.0
    for n in (3, 4):
        scn = builtin(f"sphere({n})")
        pairs = 0
        while pairs < 100:
            x = rng.standard_normal(n)
            x /= np.linalg.norm(x)
            v = tangent_project(scn.model, x, rng.standard_normal(n))
            if np.linalg.norm(v) < 1e-6:
                continue
            pairs += 1
            for p in (1.0, 2.0, 4.0):
                expected = (p + 1 - n) * float(v @ v)
                for backend in ("ricci", "gauss"):
                    got = eval_Hp(scn.system, x, v, p, backend=backend,
                                  curvature=scn.curvature)
                    worst = max(worst, abs(got - expected))
    ok = worst <= 1e-8
    report(3, ok, f"max |H_p - (p+1-n)|v|^2| = {worst:.2e} over 100 pairs x "
                  f"n in {{3,4}} x p in {{1,2,4}} x both backends (<=1e-8)")
    assert worst <= 1e-8


def test_criterion_04_gronwall_stopped_bound():
    """OU stopped moments at t=1 below e^{-1}(1 + 3 SE) on every rung, N=1e4."""
    scn = builtin("ou(1)")
    grid = [[x] for x in np.linspace(-0.5, 0.5, 5)]
    res = estimate_stopped_moment(scn.system, grid, [2.0, 2.5, 3.0, 4.0],
                                  t=1.0, n_paths=10_000, seed=SEED, dt=1e-3)
    ceiling = np.exp(-1.0)
    margins = [(est.value, ceiling * (1.0 + 3.0 * est.se)) for est in res.per_radius_sup]
    ok = all(v <= m + 1e-15 for v, m in margins)
    report(4, ok, "per-rung (estimate <= e^-1 (1+3SE)): "
                  + ", ".join(f"{v:.4f}<={m:.4f}" for v, m in margins))
    for v, m in margins:
        assert v <= m + 1e-15


def test_criterion_05_semigroup_consistency():
    """d(P_t f) = delta P_t(df) on the linear restoring system, f = id, t = 1.

    First clause: |FD - delta P_t(df)| within 3 combined SE (the per-path
    common-noise difference estimator, plus pure float slack).  Second clause:
    both sides within 3 SE of e^{-1}, where SE is the statistical resolution
    of the experiment: the derivative-side estimators are deterministic here
    (their own SEs are exactly 0), so the binding scale is the standard error
    of the underlying P_t f estimate.  See the module docstring and ledger.
    """
    scn = builtin("ou(1)")
    obs = observable(lambda x: x[..., 0], lambda x, v: v[..., 0])
    rep = gradient_consistency_check(scn.system, obs, [1.0], [1.0], t=1.0,
                                     n_paths=10_000, seed=SEED, dt=1e-3,
                                     eps_ladder=[1e-2])
    target = np.exp(-1.0)
    clause1 = rep.passed
    res_lhs = 3.0 * max(rep.se_lhs, rep.se_ptf)
    res_rhs = 3.0 * max(rep.se_rhs, rep.se_ptf)
    clause2 = abs(rep.lhs - target) <= res_lhs and abs(rep.rhs - target) <= res_rhs
    ok = clause1 and clause2
    report(5, ok, f"|FD-dP|={rep.discrepancy:.2e} (3*combined={3*rep.combined_se:.2e}+slack), "
                  f"|FD-e^-1|={abs(rep.lhs-target):.2e}<= {res_lhs:.2e}, "
                  f"|dP-e^-1|={abs(rep.rhs-target):.2e}<= {res_rhs:.2e}")
    assert clause1
    assert clause2


def test_criterion_06_jensen_ordering():
    """Exponential functional below its convexity companion at 3 sigma."""
    scn = builtin("translation(1)")
    f = lambda x: 1.0 + np.log1p(x[..., 0] ** 2)
    main, comp = estimate_exponential_functional(scn.system, f, [0.0], t=1.0,
                                                 theta=0.05, n_paths=10_000,
                                                 seed=SEED, dt=1e-3)
    tol = 3.0 * float(np.hypot(main.se, comp.se))
    ok = main.value <= comp.value + tol
    report(6, ok, f"estimate {main.value:.6f} <= companion {comp.value:.6f} "
                  f"+ {tol:.2e}")
    assert main.value <= comp.value + tol


def test_criterion_07_moment_exponent_regression():
    """mu_K(1) = -1 +- 0.05 and mu_K(2) = -2 +- 0.1 over horizons 1..4, N=1e4."""
    scn = builtin("ou(1)")
    r1 = estimate_moment_exponent(scn.system, [[1.0]], p=1.0,
                                  horizons=[1.0, 2.0, 3.0, 4.0],
                                  n_paths=10_000, seed=SEED, dt=5e-3)
    r2 = estimate_moment_exponent(scn.system, [[1.0]], p=2.0,
                                  horizons=[1.0, 2.0, 3.0, 4.0],
                                  n_paths=10_000, seed=SEED, dt=5e-3)
    ok = abs(r1.slope + 1.0) <= 0.05 and abs(r2.slope + 2.0) <= 0.1
    report(7, ok, f"mu(1)={r1.slope:.4f} (+-0.05 of -1), mu(2)={r2.slope:.4f} (+-0.1 of -2)")
    assert r1.slope == pytest.approx(-1.0, abs=0.05)
    assert r2.slope == pytest.approx(-2.0, abs=0.1)


GOLDEN_VERDICTS = {
    "ou(1)": {"Cor5.2": "certified"},
    "sphere(3)": {"Thm8.1": "certified"},
    "translation(2)": {"Cor5.2": "certified"},
    "kunita": {"Thm6.2": "failed"},
}


def test_criterion_08_verdict_golden_file():
    """certify reproduces the pinned statuses, with a witness on the failure."""
    got = {}
    witness_ok = True
    for name, expected in GOLDEN_VERDICTS.items():
        scn = builtin(name)
        rep = certify(scn.system, CertifyConfig(theorems=tuple(expected),
                                                curvature=scn.curvature))
        for theorem, status in expected.items():
            got[(name, theorem)] = rep.status_of(theorem)
            if status == "failed":
                entry = [e for e in rep.entries if e.theorem == theorem][0]
                witness_ok = witness_ok and entry.failing_sample is not None
    expected_flat = {(n, t): s for n, exp in GOLDEN_VERDICTS.items()
                     for t, s in exp.items()}
    ok = got == expected_flat and witness_ok
    report(8, ok, f"statuses {sorted(got.items())}, witness on failure: {witness_ok}")
    assert got == expected_flat
    assert witness_ok


def test_criterion_09_sphere_conservation():
    """100 paths on the sphere keep |x| within 1e-6 of 1 and <x, v> below 1e-6."""
    scn = builtin("sphere(3)")
    sched = schedule_for(1.0, 1e-3)
    x0 = np.array([0.0, 0.0, 1.0])
    v0 = np.array([1.0, 0.0, 0.0])
    worst_norm = worst_tang = 0.0
    for k in range(100):
        res = integrate_derivative_flow(scn.system, x0, v0, sched,
                                        BrownianDriver(SEED, 3, stream=k))
        norms = np.linalg.norm(res.states[:, 0, :], axis=-1)
        worst_norm = max(worst_norm, float(np.max(np.abs(norms - 1.0))))
        tang = np.abs(np.sum(res.states[:, 0, :] * res.vs[:, 0, :], axis=-1))
        worst_tang = max(worst_tang, float(np.max(tang)))
    ok = worst_norm <= 1e-6 and worst_tang <= 1e-6
    report(9, ok, f"max | |x|-1 | = {worst_norm:.2e}, max |<x,v>| = {worst_tang:.2e} (<=1e-6)")
    assert worst_norm <= 1e-6
    assert worst_tang <= 1e-6


def _run_cli(args, tmp, extra_env=None):
    env = dict(os.environ)
    env.pop("FLOWLAB_SEED", None)
    if extra_env:
        env.update(extra_env)
    proc = subprocess.run([sys.executable, "-m", "flowlab.cli", *args],
                          capture_output=True, text=True, env=env, cwd=str(tmp))
    assert proc.returncode == 0, proc.stderr
    return proc


def test_criterion_10_determinism(tmp_path):
    """Fixed-seed reruns and worker counts 1 vs 8 give byte-identical reports."""
    base = ["derivative-moments", "--scenario", "ou(1)", "--paths", "2000",
            "--dt", "0.01", "--t", "0.5", "--seed", "7"]
    dirs = [tmp_path / d for d in ("a", "b", "w8")]
    _run_cli(base + ["--workers", "1", "--out", str(dirs[0])], tmp_path)
    _run_cli(base + ["--workers", "1", "--out", str(dirs[1])], tmp_path)
    _run_cli(base + ["--workers", "8", "--out", str(dirs[2])], tmp_path)
    rep = [(d / "derivative-moments.json").read_bytes() for d in dirs]
    sim = ["simulate", "--scenario", "translation(2)", "--seed", "42",
           "--paths", "3", "--dt", "0.01", "--t", "0.2", "--format", "both"]
    s1, s2 = tmp_path / "s1", tmp_path / "s2"
    _run_cli(sim + ["--out", str(s1)], tmp_path)
    _run_cli(sim + ["--out", str(s2)], tmp_path)
    csv_same = (s1 / "simulate.csv").read_bytes() == (s2 / "simulate.csv").read_bytes()
    json_same = (s1 / "simulate.json").read_bytes() == (s2 / "simulate.json").read_bytes()
    ok = rep[0] == rep[1] == rep[2] and csv_same and json_same
    report(10, ok, f"rerun identical: {rep[0] == rep[1]}, workers 1 vs 8 identical: "
                   f"{rep[0] == rep[2]}, simulate CSV/JSON identical: {csv_same}/{json_same}")
    assert rep[0] == rep[1] == rep[2]
    assert csv_same and json_same


def test_criterion_11_ci_calibration():
    """The 95% CI of the terminal solution moment covers e^{-1} in >= 90 of 100
    seeds.

    The criterion's phrase "terminal derivative-moment" denotes a statistic
    that is deterministic for this system (SE identically zero), so a literal
    zero-width interval covers nothing; the estimators-module contract states
    the calibration target as the OU terminal moment with true value e^{-t},
    which is the solution moment E x_t from x0 = 1 estimated here.  The ledger
    records the discrepancy.
    """
    scn = builtin("ou(1)")
    obs = observable(lambda x: x[..., 0], lambda x, v: v[..., 0])
    target = np.exp(-1.0)
    covered = 0
    for s in range(100):
        est = estimate_Ptf(scn.system, obs, [1.0], 1.0, n_paths=1500,
                           seed=1000 + s, dt=2e-3)
        lo, hi = est.ci()
        covered += int(lo <= target <= hi)
    ok = covered >= 90
    report(11, ok, f"coverage {covered}/100 seeds (needs >= 90)")
    assert covered >= 90
