"""Command-line front end: ``gbsde <command> --config <path> [...]``.

One JSON config file drives each run; dotted-path ``--set`` flags override
individual keys.  Reports are deterministic for a fixed config and seed
(no timestamps, sorted keys), so re-running a config reproduces the report
files byte for byte.

Exit codes: 0 success, 1 criterion violation (check), 2 configuration
error, 3 numerical failure.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import conditions, core, dual, gendsl, risk, solver
from .errors import ConfigError, EvaluationError, GbsdeError, NumericalError

SCHEMA_VERSION = 1

COMMANDS = ("solve", "risk", "check", "dual", "share", "insurance",
            "consistency", "scenario")


# ---------------------------------------------------------------------------
# configuration handling
# ---------------------------------------------------------------------------

def _load_schema():
    # the schema ships as package data; docs/config_schema.json is the
    # identical browsable copy (kept in sync by a test)
    with resources.files("gbsde").joinpath("config_schema.json").open() as fh:
        return json.load(fh)


def validate_config(config):
    import jsonschema
    try:
        jsonschema.validate(config, _load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError("configuration rejected: %s" % exc.message)
    return config


def apply_overrides(config, overrides):
    """Apply --set key.path=value pairs; values parse as JSON when possible."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError("--set expects key=value, got %r" % item)
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError("--set path %r crosses a non-object" % key)
        node[parts[-1]] = value
    return config


def _build_generator(doc):
    doc = dict(doc)
    kind = doc.get("kind")
    n = int(doc.get("n", 1))
    d = int(doc.get("d", 1))
    params = dict(doc.get("params", {}))
    if kind == "zero":
        return core.zero_generator(n=n, d=d)
    if kind == "abs_z":
        return core.abs_z_generator(params["mu"], n=n, d=d)
    if kind == "bs_linear":
        return core.bs_linear_generator(params["r"], params["theta"], n=n, d=d)
    if kind == "linear":
        return core.linear_generator(params["beta"],
                                     params.get("gamma", np.zeros((n, d))),
                                     params.get("G"), d=d)
    if kind == "competing_subsidiaries":
        return core.competing_subsidiaries_generator(
            params["r1"], params["r2"], params["theta1"], params["theta2"],
            params["alpha1"], params["alpha2"], params["L"])
    if kind == "cross_holding":
        return core.cross_holding_generator(params["r"], params["theta"],
                                            params.get("weights"))
    if kind == "gamma_scaled":
        return core.gamma_scaled_generator(_build_generator(params["inner"]),
                                           params["gamma"])
    if kind == "dsl":
        exprs = doc.get("expressions") or params.get("expressions")
        if not exprs:
            raise ConfigError("dsl generator needs 'expressions'")
        return gendsl.dsl_generator(";".join(exprs), n, d,
                                    lipschitz_bound=doc.get("lipschitz_bound"),
                                    domain_box=doc.get("domain_box"))
    raise ConfigError("unknown generator kind %r" % kind)


def _build_claim(doc):
    doc = dict(doc)
    kind = doc.get("kind")
    n = int(doc.get("n", 1))
    d = int(doc.get("d", 1))
    params = dict(doc.get("params", {}))
    if kind == "identity":
        return core.identity_claim(n=n, d=d)
    if kind == "constant":
        return core.constant_claim(params["c"])
    if kind == "linear":
        return core.linear_claim(params["a"], params.get("b"))
    if kind == "square":
        return core.square_claim(_build_claim(params["inner"]))
    if kind == "abs":
        return core.abs_claim(_build_claim(params["inner"]))
    if kind == "call":
        return core.call_claim(_build_claim(params["inner"]), params["strike"])
    if kind == "put_on_netvalue":
        return core.put_on_netvalue_claim(_build_claim(params["inner"]),
                                          params["alpha"], params["r"])
    if kind == "negate":
        return core.negate_claim(_build_claim(params["inner"]))
    if kind == "scale":
        return core.scale_claim(_build_claim(params["inner"]), params["a"])
    if kind == "shift":
        return core.shift_claim(_build_claim(params["inner"]), params["a"])
    if kind == "sum":
        return core.sum_claim([_build_claim(c) for c in params["inners"]])
    if kind == "square_clipped":
        return core.square_clipped_claim(_build_claim(params["inner"]),
                                         params["cap"])
    if kind == "regression_function":
        return core.regression_claim(params["coef"], params["degree"],
                                     params["d"])
    raise ConfigError("unknown claim kind %r" % kind)


def _build_common(config):
    grid_cfg = config.get("grid")
    ens_cfg = config.get("ensemble")
    if grid_cfg is None or ens_cfg is None:
        raise ConfigError("config needs 'grid' and 'ensemble' sections")
    grid = core.make_time_grid(grid_cfg["T"], grid_cfg["N"])
    ens = core.simulate_ensemble(grid, ens_cfg.get("d", 1), ens_cfg["M"],
                                 ens_cfg["seed"],
                                 ens_cfg.get("antithetic", False))
    basis_cfg = config.get("basis", {})
    basis = solver.BasisConfig(degree=basis_cfg.get("degree", 3),
                               ridge=basis_cfg.get("ridge", 1e-10))
    picard = config.get("picard", 3)
    return grid, ens, basis, picard


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_report(out_dir, name, payload):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    params: dict


def expand_scenario(spec):
    """Deterministic expansion of a named scenario into (generator, claim)."""
    name = spec.name
    p = dict(spec.params or {})
    if name == "jarrow_put":
        alpha = p.get("alpha", 0.0)
        r = p.get("r", 0.0)
        claim = core.put_on_netvalue_claim(core.identity_claim(), alpha, r)
        return core.zero_generator(), claim
    if name == "bs_put":
        r = p.get("r", 0.05)
        theta = p.get("theta", 0.2)
        alpha = p.get("alpha", 0.0)
        gen = core.bs_linear_generator(r, theta)
        claim = core.put_on_netvalue_claim(core.identity_claim(), alpha, r)
        return gen, claim
    if name == "competing_subsidiaries":
        gen = core.competing_subsidiaries_generator(
            p.get("r1", 0.05), p.get("r2", 0.05), p.get("theta1", 0.0),
            p.get("theta2", 0.0), p.get("alpha1", 0.5), p.get("alpha2", 0.5),
            p.get("L", 1.0))
        net = core.linear_claim(np.ones((2, 1)),
                                [p.get("x1", 0.0), p.get("x2", 0.0)])
        claim = core.put_on_netvalue_claim(net, 0.0, 0.0)
        return gen, claim
    if name == "cross_holding":
        gen = core.cross_holding_generator(p.get("r", 0.1),
                                           p.get("theta", 0.0),
                                           p.get("weights"))
        claim = core.constant_claim(p.get("terminal", [1.0, 1.0]))
        return gen, claim
    raise ConfigError("unknown scenario %r" % name)


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def _cmd_solve(config, out_dir, plots):
    grid, ens, basis, picard = _build_common(config)
    gen = _build_generator(config["generator"])
    claim = _build_claim(config["claim"])
    keep = bool(config.get("output", {}).get("csv", False)) or plots
    sol = solver.solve_lsmc(gen, claim, grid, ens, basis=basis,
                            picard=picard, keep_paths=keep)
    results = solver.solution_summary(sol)
    if keep:
        solver.solution_to_csv(sol, os.path.join(out_dir, "value_curve.csv"))
    if plots:
        from . import plots as plotmod
        plotmod.plot_value_curve(solver.solution_value_curve(sol), sol.n,
                                 os.path.join(out_dir, "value_curve.png"))
    return 0, results


def _cmd_risk(config, out_dir, plots):
    grid, ens, basis, picard = _build_common(config)
    gen = _build_generator(config["generator"])
    claim = _build_claim(config["claim"])
    variant = config.get("risk", {}).get("variant", "rho")
    fn = risk.rho if variant == "rho" else risk.rho_bar
    rep = fn(gen, claim, grid, ens, basis=basis, picard=picard)
    return 0, {"variant": rep.variant, "value": rep.value,
               "standard_error": rep.se}


_CHECK_DISPATCH = {
    "quasi_monotone": lambda gen, cfg, opts: conditions.check_quasi_monotone(gen, cfg),
    "positivity": lambda gen, cfg, opts: conditions.check_positivity(
        gen, opts.get("sign", "nonneg"), cfg),
    "rectangle_viability": lambda gen, cfg, opts: conditions.check_rectangle_viability(
        gen, core.make_rectangle(opts["rectangle"]["C1"],
                                 opts["rectangle"].get("C2")), cfg),
    "constancy": lambda gen, cfg, opts: conditions.check_constancy(
        gen, opts.get("constancy_point", [0.0] * gen.n), cfg),
    "homogeneity": lambda gen, cfg, opts: conditions.check_homogeneity(gen, cfg),
    "convexity": lambda gen, cfg, opts: conditions.check_convexity_condition(gen, cfg),
    "jensen": lambda gen, cfg, opts: conditions.check_jensen_conditions(gen, cfg),
    "cash_additivity": lambda gen, cfg, opts: conditions.check_cash_additivity(gen, cfg),
    "askbid": lambda gen, cfg, opts: conditions.check_askbid_condition(gen, cfg),
}


def _cmd_check(config, out_dir, plots):
    gen = _build_generator(config["generator"])
    opts = dict(config.get("check", {}))
    criteria = opts.get("criteria", ["quasi_monotone", "convexity",
                                     "homogeneity", "cash_additivity"])
    cfg = conditions.SamplerConfig(budget=opts.get("budget", 100_000),
                                   tolerance=opts.get("tolerance", 1e-9),
                                   seed=opts.get("seed", 20240))
    reports = {}
    any_violated = False
    for name in criteria:
        if name == "comparison_pair":
            if "g2" not in opts:
                raise ConfigError("comparison_pair check needs check.g2")
            rep = conditions.check_comparison_pair(
                gen, _build_generator(opts["g2"]), cfg)
        else:
            fn = _CHECK_DISPATCH.get(name)
            if fn is None:
                raise ConfigError("unknown criterion %r" % name)
            rep = fn(gen, cfg, opts)
        reports[name] = rep.to_dict()
        _write_report(out_dir, "check_%s.json" % name, rep.to_dict())
        if rep.verdict == "violated":
            any_violated = True
    return (1 if any_violated else 0), {"criteria": reports,
                                        "any_violated": any_violated}


def _cmd_share(config, out_dir, plots):
    grid, ens, basis, picard = _build_common(config)
    gen = _build_generator(config["generator"])
    claim = _build_claim(config["claim"])
    opts = config.get("share", {})
    lam_grid = np.linspace(0.0, 1.0, opts.get("lambda_points", 41))
    rep = risk.inf_convolution(gen, opts["gamma_a"], opts["gamma_b"], claim,
                               lam_grid, grid, ens, basis=basis,
                               picard=picard)
    if config.get("output", {}).get("csv", True):
        path = os.path.join(out_dir, "lambda_scan.csv")
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda"] + ["objective_%d" % k
                                     for k in range(rep.scan.shape[1])])
            for lam, row in zip(rep.lambda_grid, rep.scan):
                w.writerow([repr(lam)] + [repr(v) for v in row])
    if plots:
        from . import plots as plotmod
        plotmod.plot_lambda_scan(rep, os.path.join(out_dir,
                                                   "lambda_scan.png"))
    return 0, {"gamma_a": rep.gamma_a, "gamma_b": rep.gamma_b,
               "closed_form": rep.closed_form, "closed_se": rep.closed_se,
               "scan_min": rep.scan_min, "lambda_star": rep.lambda_star,
               "gap": rep.gap, "degenerate": rep.degenerate,
               "prechecks": rep.prechecks}


def _cmd_insurance(config, out_dir, plots):
    grid, ens, basis, picard = _build_common(config)
    gen = _build_generator(config["generator"])
    claim = _build_claim(config["claim"])
    opts = config.get("insurance", {})
    query = risk.InsuranceQuery(claim=claim,
                                nonneg=opts.get("nonneg", False),
                                bracket=opts.get("bracket"),
                                tol=opts.get("tol", 1e-3))
    res = risk.insurance_measure(query, gen, grid, ens, basis=basis,
                                 picard=picard)
    return 0, {"eta": res.eta, "achieved_rho": res.achieved_rho,
               "rho_se": res.rho_se, "sweeps": res.sweeps,
               "trace": res.trace, "notes": res.notes}


def _cmd_consistency(config, out_dir, plots):
    grid, ens, basis, picard = _build_common(config)
    gen = _build_generator(config["generator"])
    claim = _build_claim(config["claim"])
    split = config.get("consistency", {}).get("split", grid.N // 2)
    rep = risk.time_consistency_check(gen, claim, split, grid, ens,
                                      basis=basis, picard=picard)
    return 0, {"split_step": rep.split_step, "residual": rep.residual,
               "se_combined": rep.se_combined, "direct": rep.direct,
               "nested": rep.nested}


def _cmd_dual(config, out_dir, plots):
    grid, ens, basis, picard = _build_common(config)
    gen = _build_generator(config["generator"])
    claim = _build_claim(config["claim"])
    opts = config.get("dual", {})
    results = {}
    if "family" in opts:
        rep = dual.dual_lower_bound(gen, claim, opts["family"], grid, ens,
                                    basis=basis, picard=picard)
        results["lower_bound"] = {
            "member_bounds": rep.member_bounds, "member_se": rep.member_se,
            "members": rep.members, "refused": rep.refused,
            "best_bound": rep.best_bound, "rho": rep.rho_value,
            "rho_se": rep.rho_se, "gap": rep.gap,
        }
    if "fenchel" in opts:
        f = opts["fenchel"]
        table = dual.fenchel_transform(gen, f.get("component", 0),
                                       np.asarray(f["b_grid"], dtype=float),
                                       np.asarray(f["c_grid"], dtype=float),
                                       inner_grid=f.get("inner_grid", 21))
        os.makedirs(out_dir, exist_ok=True)
        dual.fenchel_to_csv(table, os.path.join(out_dir, "fenchel.csv"))
        results["fenchel"] = {"divergent_count": int(table.divergent.sum()),
                              "finite_count": int((~table.divergent).sum())}
        if plots:
            from . import plots as plotmod
            plotmod.plot_fenchel(table, os.path.join(out_dir, "fenchel.png"))
    if not results:
        raise ConfigError("dual command needs dual.family or dual.fenchel")
    return 0, results


def _cmd_scenario(config, out_dir, plots):
    grid, ens, basis, picard = _build_common(config)
    opts = config.get("scenario")
    if not opts:
        raise ConfigError("scenario command needs a scenario section")
    spec = ScenarioSpec(name=opts["name"], params=opts.get("params", {}))
    gen, claim = expand_scenario(spec)
    results = {"name": spec.name}
    if spec.name == "jarrow_put":
        r = spec.params.get("r", 0.0)
        payoff = core.evaluate_terminal(claim, ens)
        vals = payoff / (1.0 + r)
        results["value"] = np.mean(vals, axis=0)
        results["standard_error"] = solver._standard_error(vals,
                                                           ens.antithetic)
        return 0, results
    keep = plots or bool(config.get("output", {}).get("csv", False))
    sol = solver.solve_lsmc(gen, claim, grid, ens, basis=basis,
                            picard=picard, keep_paths=keep)
    results["value"] = sol.y0
    results["standard_error"] = sol.se
    if spec.name == "cross_holding":
        oracle = solver.solve_linear_analytic(gen, claim, grid, ens)
        results["oracle"] = oracle.y0
        results["relative_error"] = (np.abs(sol.y0 - oracle.y0)
                                     / np.abs(oracle.y0))
    if keep:
        os.makedirs(out_dir, exist_ok=True)
        solver.solution_to_csv(sol, os.path.join(out_dir, "value_curve.csv"))
    if plots:
        from . import plots as plotmod
        plotmod.plot_value_curve(solver.solution_value_curve(sol), sol.n,
                                 os.path.join(out_dir, "value_curve.png"))
    return 0, results


_COMMAND_FNS = {
    "solve": _cmd_solve,
    "risk": _cmd_risk,
    "check": _cmd_check,
    "share": _cmd_share,
    "insurance": _cmd_insurance,
    "consistency": _cmd_consistency,
    "dual": _cmd_dual,
    "scenario": _cmd_scenario,
}


def run(command, config, out_dir="gbsde_out", plots=False):
    """Execute one command; returns the exit code and writes report files."""
    if command not in _COMMAND_FNS:
        raise ConfigError("unknown command %r" % command)
    config.setdefault("schema_version", SCHEMA_VERSION)
    validate_config(config)
    declared = config.get("command")
    if declared is not None and declared != command:
        raise ConfigError("config declares command %r but %r was invoked"
                          % (declared, command))
    plots = plots or bool(config.get("output", {}).get("plots", False))
    os.makedirs(out_dir, exist_ok=True)
    code, results = _COMMAND_FNS[command](config, out_dir, plots)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "resolved_config": config,
        "results": results,
    }
    _write_report(out_dir, "report.json", report)
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gbsde",
        description="Solve coupled backward stochastic equations and "
                    "evaluate dynamic risk measures.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True,
                        help="path to the JSON run configuration")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="dotted-path config override (repeatable)")
    parser.add_argument("--out", default="gbsde_out",
                        help="output directory for reports")
    parser.add_argument("--plot", action="store_true",
                        help="render matplotlib figures next to the CSVs")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, ValueError) as exc:
        print("gbsde: cannot read config: %s" % exc, file=sys.stderr)
        return 2
    try:
        config = apply_overrides(config, args.set)
        return run(args.command, config, out_dir=args.out, plots=args.plot)
    except ConfigError as exc:
        print("gbsde: configuration error: %s" % exc, file=sys.stderr)
        return 2
    except (NumericalError, EvaluationError) as exc:
        print("gbsde: numerical failure: %s" % exc, file=sys.stderr)
        return 3
    except GbsdeError as exc:
        print("gbsde: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
