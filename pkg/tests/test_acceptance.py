"""End-to-end acceptance suite.

Reference configuration: T = 1, N = 50, M = 200_000 antithetic paths,
basis degree 3, fixed seed (the session-scoped ``ref_ens`` fixture).
Each test prints one pass/fail line with the measured quantity and its
tolerance, then asserts it.
"""

import json
import math
import time

import numpy as np
import pytest

from gbsde import cli, conditions, core, dual, gendsl, risk, solver
from gbsde.conditions import SamplerConfig
from gbsde.solver import BasisConfig


def _line(num, name, ok, detail):
    print("criterion %02d %-24s %s  %s"
          % (num, name, "PASS" if ok else "FAIL", detail))
    assert ok, "criterion %d (%s): %s" % (num, name, detail)


def test_criterion_01_linear_oracle(grid50, ref_ens):
    gen = core.bs_linear_generator(0.05, 0.2)
    sol = solver.solve_lsmc(gen, core.identity_claim(), grid50, ref_ens)
    oracle = math.exp(-0.05) * (-0.2)
    err = abs(sol.y0[0] - oracle)
    tol = max(0.02 * abs(oracle), 3.0 * sol.se[0])
    _line(1, "linear_oracle", err <= tol,
          "|Y0 - %.8f| = %.2e <= %.2e" % (oracle, err, tol))


def test_criterion_02_abs_z_explicit(grid50, ref_ens):
    sol = solver.solve_lsmc(core.abs_z_generator(0.1), core.identity_claim(),
                            grid50, ref_ens)
    err = abs(sol.y0[0] - 0.1)
    tol = 0.015 * 0.1 + 3.0 * sol.se[0]
    _line(2, "abs_z_explicit", err <= tol,
          "|Y0 - 0.1| = %.2e <= %.2e" % (err, tol))


def test_criterion_03_tree_lsmc_agreement(grid50, ref_ens):
    gen = core.abs_z_generator(0.1)
    tree = solver.solve_tree_1d(gen, core.identity_claim(),
                                core.make_time_grid(1.0, 200))
    lsmc = solver.solve_lsmc(gen, core.identity_claim(), grid50, ref_ens)
    diff = abs(tree.y0 - lsmc.y0[0])
    tol = 0.01 * abs(tree.y0)
    _line(3, "tree_lsmc_agreement", diff <= tol,
          "|tree - lsmc| = %.2e <= %.2e" % (diff, tol))


def test_criterion_04_comparison_property(grid50, ref_ens):
    """100 random quasi-monotone 2-d systems with ordered claim pairs."""
    rng = np.random.default_rng(20240)
    trials, chunk, nb = 100, 25, 2
    b_T = ref_ens.levels[:, -1, 0]
    pos_b = np.maximum(b_T, 0.0)
    worst = np.inf
    violations = 0
    for start in range(0, trials, chunk):
        L = min(chunk, trials - start)
        # off-diagonal y-coefficients nonnegative, own-row z only: the
        # block structure satisfies the comparison preconditions exactly
        beta = rng.uniform(0.0, 0.3, size=(L, nb, nb))
        diag = rng.uniform(-0.3, 0.3, size=(L, nb))
        beta[:, np.arange(nb), np.arange(nb)] = diag
        gamma = rng.uniform(-0.3, 0.3, size=(L, nb, 1))
        G = rng.uniform(-0.2, 0.2, size=(L, nb))
        a = rng.uniform(-1.0, 1.0, size=(L, nb))
        b = rng.uniform(-0.5, 0.5, size=(L, nb))
        w = rng.uniform(0.0, 1.0, size=(L, nb))

        # each trial solves the same system twice: claim 1, then the
        # dominated claim 1 - w * (B_T)+
        beta2 = np.repeat(beta, 2, axis=0)
        gamma2 = np.repeat(gamma, 2, axis=0)
        G2 = np.repeat(G, 2, axis=0)
        gen = core.block_linear_generator(beta2, gamma2, G2)
        xi = np.empty((ref_ens.M, 2 * L * nb))
        for i in range(L):
            hi = b_T[:, None] * a[i] + b[i]
            lo = hi - pos_b[:, None] * w[i]
            xi[:, (2 * i) * nb:(2 * i + 1) * nb] = hi
            xi[:, (2 * i + 1) * nb:(2 * i + 2) * nb] = lo
        sol = solver._solve_backward(gen, xi, grid50, ref_ens,
                                     BasisConfig(), 3, keep_paths=False)
        y = sol.y0.reshape(2 * L, nb)
        se = sol.se.reshape(2 * L, nb)
        margin = (y[0::2] - y[1::2]
                  + 3.0 * np.sqrt(se[0::2] ** 2 + se[1::2] ** 2))
        worst = min(worst, float(np.min(margin)))
        violations += int(np.sum(margin < 0.0))
    _line(4, "comparison_property", violations == 0,
          "%d/100 trials violated; worst margin %.2e" % (violations, worst))


def test_criterion_05_checker_soundness():
    cfg = SamplerConfig(budget=100_000)
    t0 = time.perf_counter()
    good = conditions.check_convexity_condition(core.abs_z_generator(0.1),
                                                cfg)
    t_good = time.perf_counter() - t0
    concave = gendsl.dsl_generator("0 - abs(z[1][1])", 1, 1)
    t0 = time.perf_counter()
    bad = conditions.check_convexity_condition(concave, cfg)
    t_bad = time.perf_counter() - t0
    residual = (conditions.reevaluate_counterexample(bad, concave)
                if bad.verdict == "violated" else 0.0)
    ok = (good.passed() and bad.verdict == "violated"
          and residual < -cfg.tolerance and t_good <= 5.0 and t_bad <= 5.0)
    _line(5, "checker_soundness", ok,
          "abs_z %s, concave %s (re-eval %.3f), runtimes %.2fs/%.2fs"
          % (good.verdict, bad.verdict, residual, t_good, t_bad))


def test_criterion_06_risk_sharing(grid50, ref_ens):
    claim = core.negate_claim(core.identity_claim())
    rep = risk.inf_convolution(core.abs_z_generator(0.1), 1.0, 3.0, claim,
                               np.linspace(0.0, 1.0, 41), grid50, ref_ens)
    gap = rep.gap[0]
    gap_tol = 0.01 * abs(rep.closed_form[0])
    lam_err = abs(rep.lambda_star[0] - 0.75)
    ok = gap <= gap_tol and lam_err <= 0.05
    _line(6, "risk_sharing", ok,
          "|scan min - closed| = %.2e <= %.2e, |lambda* - 0.75| = %.3f"
          % (gap, gap_tol, lam_err))


def test_criterion_07_insurance_composite(grid50, ref_ens):
    gen = core.bs_linear_generator(0.05, 0.0)
    claim = core.negate_claim(core.identity_claim())

    # part 1: the riskless-mean claim needs (essentially) no capital
    res = risk.insurance_measure(risk.InsuranceQuery(claim=claim,
                                                     nonneg=True, tol=1e-3),
                                 gen, grid50, ref_ens)
    eta_ok = res.eta[0] <= 1e-3 + 3.0 * res.rho_se[0]

    # part 2: restart the fitted risk at t = 0.5, keep only its positive
    # part, and price the capital for that insolvency exposure on [0, 0.5]
    sol = solver.solve_lsmc(gen, core.negate_claim(claim), grid50, ref_ens,
                            keep_paths=True)
    i = grid50.N // 2
    t_i = grid50.times()[i]
    inner = solver.restart_at(sol, i)
    exposure = core.negate_claim(
        core.call_claim(core.scale_claim(inner,
                                         math.exp(0.05 * (1.0 - t_i))),
                        0.0))
    sub = core.restrict_ensemble(ref_ens, i)
    res2 = risk.insurance_measure(
        risk.InsuranceQuery(claim=exposure, bracket=[[0.0, 0.5]], tol=1e-4),
        gen, sub.grid, sub)
    target = math.sqrt(0.5 / (2.0 * math.pi))
    rel = abs(res2.eta[0] - target) / target
    ok = eta_ok and rel <= 0.02
    _line(7, "insurance_composite", ok,
          "eta* = %.2e (<= %.2e), composite %.5f vs %.5f (rel %.4f <= 0.02)"
          % (res.eta[0], 1e-3 + 3.0 * res.rho_se[0], res2.eta[0], target,
             rel))


def test_criterion_08_dual_bound(grid50, ref_ens):
    gen = core.abs_z_generator(0.1)
    claim = core.negate_claim(core.identity_claim())
    family = [{"beta": [[0.0]], "gamma": [[g]], "G": [0.0]}
              for g in (-0.1, -0.05, 0.0, 0.05, 0.1)]
    rep = dual.dual_lower_bound(gen, claim, family, grid50, ref_ens)
    slack = [b[0] - rep.rho_value[0] - 3.0 * math.sqrt(
        s[0] ** 2 + rep.rho_se[0] ** 2)
        for b, s in zip(rep.member_bounds, rep.member_se)]
    gap_tol = 0.01 * abs(rep.rho_value[0])
    ok = (not rep.refused and max(slack) <= 0.0 and rep.gap[0] <= gap_tol)
    _line(8, "dual_bound", ok,
          "max bound slack %.2e <= 0, best gap %.2e <= %.2e"
          % (max(slack), rep.gap[0], gap_tol))


def test_criterion_09_robust_envelope(grid50, ref_ens):
    members = [core.linear_generator([[0.0]], [[g]], [0.0])
               for g in (-0.1, -0.05, 0.0, 0.05, 0.1)]
    envelope = core.abs_z_generator(0.1)
    claim = core.negate_claim(core.identity_claim())
    rep = risk.robust_envelope(members, envelope, claim, grid50, ref_ens)
    tol = 3.0 * math.sqrt(rep.envelope_se[0] ** 2
                          + float(np.max(rep.member_se)) ** 2)
    gap = abs(rep.gap[0])
    _line(9, "robust_envelope", gap <= tol,
          "|max member - envelope| = %.2e <= %.2e" % (gap, tol))


def test_criterion_10_cross_holding(grid50, ref_ens):
    gen = core.cross_holding_generator(0.1, 0.0)
    claim = core.constant_claim([1.0, 1.0])
    sol = solver.solve_lsmc(gen, claim, grid50, ref_ens)
    oracle = solver.solve_linear_analytic(gen, claim, grid50).y0
    rel = np.abs(sol.y0 - oracle) / np.abs(oracle)
    _line(10, "cross_holding", float(np.max(rel)) <= 0.02,
          "component errors %.2e, %.2e <= 2e-2" % (rel[0], rel[1]))


def test_criterion_11_penalization(grid50, ref_ens):
    times = grid50.times()
    res = solver.penalized_doob_meyer(core.zero_generator(), -times,
                                      [4, 16, 64], grid50, ref_ens)
    errs = [float(np.max(np.abs(res.A_m[m][:, 0] - times)))
            for m in (4, 16, 64)]
    ok = errs[0] >= errs[1] >= errs[2] and errs[2] <= 0.05
    _line(11, "penalization", ok,
          "sup errors %.4f >= %.4f >= %.4f (last <= 0.05)"
          % (errs[0], errs[1], errs[2]))


def test_criterion_12_time_consistency(grid50, ref_ens):
    rep = risk.time_consistency_check(core.abs_z_generator(0.1),
                                      core.negate_claim(
                                          core.identity_claim()),
                                      grid50.N // 2, grid50, ref_ens)
    tol = 3.0 * rep.se_combined[0]
    _line(12, "time_consistency", rep.residual[0] <= tol,
          "|direct - nested| = %.2e <= %.2e" % (rep.residual[0], tol))


def test_criterion_13_jensen(grid50, ref_ens):
    rep = risk.jensen_check(core.abs_z_generator(0.1), core.identity_claim(),
                            "abs", grid50, ref_ens)
    ok = (rep.residual[0] >= -3.0 * rep.se_combined[0]
          and rep.residual[0] > 0.0)
    _line(13, "jensen", ok,
          "E_g|xi| - |E_g xi| = %.4f >= -%.2e and > 0"
          % (rep.residual[0], 3.0 * rep.se_combined[0]))


def test_criterion_14_determinism(tmp_path):
    config = {
        "schema_version": 1,
        "command": "risk",
        "grid": {"T": 1.0, "N": 50},
        "ensemble": {"M": 200000, "seed": 20240, "d": 1, "antithetic": True},
        "generator": {"kind": "abs_z", "n": 1, "d": 1,
                      "params": {"mu": 0.1}},
        "claim": {"kind": "identity", "n": 1, "d": 1},
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["risk", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli.main(["risk", "--config", str(cfg), "--out", str(out2)]) == 0
    same = ((out1 / "report.json").read_bytes()
            == (out2 / "report.json").read_bytes())
    _line(14, "determinism", same,
          "re-run report files byte-identical: %s" % same)
