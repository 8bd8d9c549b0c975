"""Risk-measure operators built on the backward-equation solver.

Everything here is a pure function of (generator, claim, ensemble, config).
Grid scans (risk sharing, envelopes, axiom harnesses) are run as a single
batched backward pass over a block-diagonal stacked generator, which keeps
the many-solve operations within desk-scale runtimes.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (gamma_scaled_generator, negate_claim, scale_claim,
                   abs_claim, shift_claim, square_clipped_claim, stack_claims,
                   stack_generators, restrict_ensemble, evaluate_terminal)
from .conditions import (SamplerConfig, check_convexity_condition,
                         check_constancy, check_quasi_monotone,
                         check_jensen_conditions, check_askbid_condition)
from .errors import ConfigError, NumericalError
from .solver import BasisConfig, solve_lsmc, restart_at, _solve_backward

PRECHECK_BUDGET = 20_000


@dataclass(frozen=True)
class RiskReport:
    value: np.ndarray        # (n,)
    se: np.ndarray           # (n,)
    variant: str             # "rho" or "rho_bar"
    diagnostics: dict
    solution: object = None


def rho(gen, claim, grid, ens, basis=None, picard=3, keep_paths=False):
    """rho[xi] = E_g[-xi]: solve the backward equation with terminal -xi."""
    sol = solve_lsmc(gen, negate_claim(claim), grid, ens, basis=basis,
                     picard=picard, keep_paths=keep_paths)
    return RiskReport(value=sol.y0.copy(), se=sol.se.copy(), variant="rho",
                      diagnostics=sol.diagnostics, solution=sol)


def rho_bar(gen, claim, grid, ens, basis=None, picard=3, keep_paths=False):
    """rho_bar[xi] = -E_g[xi]: solve with terminal +xi and negate."""
    sol = solve_lsmc(gen, claim, grid, ens, basis=basis, picard=picard,
                     keep_paths=keep_paths)
    return RiskReport(value=-sol.y0, se=sol.se.copy(), variant="rho_bar",
                      diagnostics=sol.diagnostics, solution=sol)


def gamma_tolerant(gen, gamma):
    """Generator of the gamma-tolerant measure gamma * rho[. / gamma]."""
    return gamma_scaled_generator(gen, gamma)


def _stacked_solve(gen_blocks, claim_blocks, grid, ens, basis, picard):
    """One backward pass over block-stacked generators and claims."""
    gen = stack_generators(gen_blocks)
    xi = evaluate_terminal(stack_claims(claim_blocks), ens)
    return _solve_backward(gen, xi, grid, ens, basis or BasisConfig(),
                           picard, keep_paths=False)


# ---------------------------------------------------------------------------
# risk sharing / inf-convolution
# ---------------------------------------------------------------------------

@dataclass
class ShareReport:
    gamma_a: float
    gamma_b: float
    closed_form: np.ndarray       # (n,)
    closed_se: np.ndarray
    lambda_grid: np.ndarray       # (L,)
    scan: np.ndarray              # (L, n) objective per transfer fraction
    scan_se: np.ndarray           # (L, n)
    scan_min: np.ndarray          # (n,)
    lambda_star: np.ndarray       # (n,)
    gap: np.ndarray               # (n,) |scan_min - closed_form|
    degenerate: np.ndarray        # (n,) bool: scan flat to working precision
    prechecks: dict = field(default_factory=dict)


def inf_convolution(gen, gamma_a, gamma_b, claim, lambda_grid, grid, ens,
                    basis=None, picard=3, precheck=True):
    """Optimal sharing of xi between a gamma_a- and a gamma_b-tolerant party.

    The scan is restricted to proportional transfers eta = lambda * xi; the
    closed form is the (gamma_a + gamma_b)-tolerant risk of xi.  For
    positively homogeneous drivers every proportional transfer is optimal
    (the scan is flat up to floating-point dust); the report then flags the
    component as degenerate and returns the canonical proportional optimizer
    lambda = gamma_b / (gamma_a + gamma_b), which attains the minimum.
    """
    if gamma_a <= 0 or gamma_b <= 0:
        raise ConfigError("tolerance parameters must be positive")
    lambda_grid = np.asarray(lambda_grid, dtype=np.float64)
    if np.any(lambda_grid < 0) or np.any(lambda_grid > 1):
        raise ConfigError("transfer fractions must lie in [0, 1]")
    prechecks = {}
    if precheck:
        cfg = SamplerConfig(budget=PRECHECK_BUDGET)
        conv = check_convexity_condition(gen, cfg)
        cons = check_constancy(gen, np.zeros(gen.n), cfg)
        prechecks = {"convexity": conv.verdict, "constancy_at_0": cons.verdict}
        if conv.verdict != "no-violation-found":
            raise ConfigError("inf-convolution needs a convex driver; "
                              "convexity check returned %r" % conv.verdict)
        if cons.verdict != "no-violation-found":
            raise ConfigError("inf-convolution needs constancy at 0; "
                              "check returned %r" % cons.verdict)

    closed = rho(gamma_tolerant(gen, gamma_a + gamma_b), claim, grid, ens,
                 basis=basis, picard=picard)

    L = lambda_grid.shape[0]
    gen_a = gamma_tolerant(gen, gamma_a)
    gen_b = gamma_tolerant(gen, gamma_b)
    claims_a = [negate_claim(scale_claim(claim, 1.0 - lam))
                for lam in lambda_grid]
    claims_b = [negate_claim(scale_claim(claim, lam)) for lam in lambda_grid]
    sol_a = _stacked_solve([gen_a] * L, claims_a, grid, ens, basis, picard)
    sol_b = _stacked_solve([gen_b] * L, claims_b, grid, ens, basis, picard)
    n = gen.n
    scan = sol_a.y0.reshape(L, n) + sol_b.y0.reshape(L, n)
    scan_se = np.sqrt(sol_a.se.reshape(L, n) ** 2
                      + sol_b.se.reshape(L, n) ** 2)

    idx = np.argmin(scan, axis=0)
    scan_min = scan[idx, np.arange(n)]
    spread = np.max(scan, axis=0) - scan_min
    scale = np.abs(closed.value) + np.abs(scan_min) + 1.0
    degenerate = spread <= 1e-9 * scale
    lambda_star = lambda_grid[idx].astype(np.float64)
    canonical = gamma_b / (gamma_a + gamma_b)
    snap = lambda_grid[np.argmin(np.abs(lambda_grid - canonical))]
    lambda_star = np.where(degenerate, snap, lambda_star)

    return ShareReport(gamma_a=float(gamma_a), gamma_b=float(gamma_b),
                       closed_form=closed.value, closed_se=closed.se,
                       lambda_grid=lambda_grid, scan=scan, scan_se=scan_se,
                       scan_min=scan_min, lambda_star=lambda_star,
                       gap=np.abs(scan_min - closed.value),
                       degenerate=degenerate, prechecks=prechecks)


# ---------------------------------------------------------------------------
# insurance capital
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InsuranceQuery:
    claim: object
    nonneg: bool = False
    bracket: np.ndarray = None   # (n, 2) search interval per component
    tol: float = 1e-3


@dataclass
class InsuranceResult:
    eta: np.ndarray              # (n,) minimal capital found
    achieved_rho: np.ndarray     # (n,) rho[xi + eta]
    rho_se: np.ndarray
    sweeps: int
    trace: list
    notes: list


def _rho_shifted(gen, claim, eta_rows, grid, ens, basis, picard):
    """rho_k[xi + eta] for many capital vectors eta at once (one pass)."""
    claims = [shift_claim(claim, eta) for eta in eta_rows]
    sol = _stacked_solve([gen] * len(eta_rows), [negate_claim(c)
                                                 for c in claims],
                         grid, ens, basis, picard)
    n = gen.n
    return sol.y0.reshape(len(eta_rows), n), sol.se.reshape(len(eta_rows), n)


def insurance_measure(query, gen, grid, ens, basis=None, picard=3,
                      precheck=True, max_sweeps=5, grid_points=17,
                      refinements=3):
    """Componentwise minimal capital eta with rho[xi + eta] <= 0.

    Gauss-Seidel over components; each one-dimensional search is a nested
    grid refinement (monotonicity of rho in eta is guaranteed by the
    quasi-monotonicity precondition).  The nonnegative variant clamps the
    search at zero.  The ess-inf is restricted to time-0 constants, which is
    exact under the trivial initial filtration.
    """
    claim = query.claim
    n = gen.n
    if precheck:
        pre = check_quasi_monotone(gen, SamplerConfig(budget=PRECHECK_BUDGET))
        if pre.verdict != "no-violation-found":
            raise ConfigError("insurance search needs a quasi-monotone "
                              "driver; check returned %r" % pre.verdict)

    base = rho(gen, claim, grid, ens, basis=basis, picard=picard)
    if query.bracket is not None:
        bracket = np.asarray(query.bracket, dtype=np.float64).reshape(n, 2)
    else:
        width = 1.0 + 2.0 * (np.abs(base.value) + 3.0 * base.se)
        bracket = np.column_stack([-width, width])
    if query.nonneg:
        bracket[:, 0] = np.maximum(bracket[:, 0], 0.0)

    eta = bracket[:, 0].copy()
    notes = []
    trace = []
    sweeps = 0
    if n == 1:
        max_sweeps = 1  # no cross-component coupling to iterate out
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        moved = 0.0
        for k in range(n):
            lo, hi = bracket[k]
            new_k = _search_component(gen, claim, eta, k, lo, hi, grid, ens,
                                      basis, picard, grid_points,
                                      refinements, notes)
            moved = max(moved, abs(new_k - eta[k]))
            eta[k] = new_k
        trace.append({"sweep": sweeps, "eta": eta.tolist(),
                      "max_move": moved})
        if moved <= query.tol:
            break
    vals, ses = _rho_shifted(gen, claim, [eta], grid, ens, basis, picard)
    return InsuranceResult(eta=eta, achieved_rho=vals[0], rho_se=ses[0],
                           sweeps=sweeps, trace=trace, notes=notes)


def _search_component(gen, claim, eta, k, lo, hi, grid, ens, basis, picard,
                      grid_points, refinements, notes):
    """Minimal eta_k in [lo, hi] with rho_k <= 0, other components fixed."""
    for _ in range(refinements):
        probes = np.linspace(lo, hi, grid_points)
        rows = []
        for p in probes:
            e = eta.copy()
            e[k] = p
            rows.append(e)
        vals, _ = _rho_shifted(gen, claim, rows, grid, ens, basis, picard)
        feasible = vals[:, k] <= 0.0
        if not feasible.any():
            raise NumericalError(
                "insurance bracket failure: rho_%d stays positive on "
                "[%g, %g] (values %g..%g)" % (k, lo, hi,
                                              vals[0, k], vals[-1, k]))
        first = int(np.argmax(feasible))
        if first == 0:
            notes.append("component %d: rho <= 0 already at the lower "
                         "bracket end %g" % (k, lo))
            return lo
        lo, hi = probes[first - 1], probes[first]
    return hi


# ---------------------------------------------------------------------------
# robust envelope
# ---------------------------------------------------------------------------

@dataclass
class EnvelopeReport:
    member_risks: np.ndarray     # (L, n)
    member_se: np.ndarray
    max_member: np.ndarray       # (n,)
    envelope_risk: np.ndarray    # (n,)
    envelope_se: np.ndarray
    gap: np.ndarray              # (n,) envelope - max member
    dominance: str


def _check_dominance(members, envelope, budget=PRECHECK_BUDGET, seed=99,
                     tol=1e-9):
    """Sampled pointwise dominance of the envelope over every member."""
    box = envelope.box()
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [0, seed], dtype=np.uint64)))
    n, d = envelope.n, envelope.d
    m = min(budget, 20000)
    t = rng.uniform(box["t"][0], box["t"][1], m)
    y = rng.uniform(-box["y"], box["y"], size=(m, n))
    z = rng.uniform(-box["z"], box["z"], size=(m, n, d))
    env_vals = envelope.evaluate(t, y, z)
    for j, member in enumerate(members):
        diff = env_vals - member.evaluate(t, y, z)
        if np.min(diff) < -tol:
            return "violated (member %d exceeds envelope by %g)" % (
                j, -float(np.min(diff)))
    return "no-violation-found"


def robust_envelope(members, envelope, claim, grid, ens, basis=None,
                    picard=3, precheck=True):
    """Risk under the pointwise-sup driver vs the sup of member risks."""
    members = list(members)
    dominance = "skipped"
    if precheck:
        dominance = _check_dominance(members, envelope)
        if dominance != "no-violation-found":
            raise ConfigError("envelope does not dominate members: %s"
                              % dominance)
    blocks = members + [envelope]
    claims = [negate_claim(claim)] * len(blocks)
    sol = _stacked_solve(blocks, claims, grid, ens, basis, picard)
    n = envelope.n
    vals = sol.y0.reshape(len(blocks), n)
    ses = sol.se.reshape(len(blocks), n)
    member_risks = vals[:-1]
    env_risk = vals[-1]
    return EnvelopeReport(member_risks=member_risks, member_se=ses[:-1],
                          max_member=np.max(member_risks, axis=0),
                          envelope_risk=env_risk, envelope_se=ses[-1],
                          gap=env_risk - np.max(member_risks, axis=0),
                          dominance=dominance)


# ---------------------------------------------------------------------------
# axiom harnesses
# ---------------------------------------------------------------------------

@dataclass
class ConsistencyReport:
    residual: np.ndarray         # (n,) |direct - nested|
    se_combined: np.ndarray
    direct: np.ndarray
    nested: np.ndarray
    split_step: int


def time_consistency_check(gen, claim, split_step, grid, ens, basis=None,
                           picard=3):
    """Direct rho over [0, T] against the nested evaluation split at t_i.

    The inner value rho_{t_i}[xi] is realized by restarting the fitted
    solution; the outer solve runs on the sub-grid [0, t_i] with terminal
    -(-restart) and must reproduce the direct value up to Monte Carlo noise.
    The split at i = N is degenerate and returns a zero residual.
    """
    i = int(split_step)
    if not (1 <= i <= grid.N):
        raise ConfigError("split step must be in 1..N")
    direct = rho(gen, claim, grid, ens, basis=basis, picard=picard)
    if i == grid.N:
        return ConsistencyReport(residual=np.zeros(gen.n),
                                 se_combined=direct.se * math.sqrt(2.0),
                                 direct=direct.value, nested=direct.value,
                                 split_step=i)
    inner = restart_at(direct.solution, i)   # fitted rho_{t_i} as psi(B_{t_i})
    sub_ens = restrict_ensemble(ens, i)
    nested = solve_lsmc(gen, inner, sub_ens.grid, sub_ens, basis=basis,
                        picard=picard, keep_paths=False)
    residual = np.abs(direct.value - nested.y0)
    se = np.sqrt(direct.se ** 2 + nested.se ** 2)
    return ConsistencyReport(residual=residual, se_combined=se,
                             direct=direct.value, nested=nested.y0,
                             split_step=i)


def _phi_claim(claim, phi, a=None, lam=None):
    if phi == "abs":
        return abs_claim(claim)
    if phi == "identity":
        return claim
    if phi == "shift":
        if a is None:
            raise ConfigError("phi = x + a needs the shift a")
        return shift_claim(claim, a)
    if phi == "scale":
        if lam is None:
            raise ConfigError("phi = lam * x needs lam")
        return scale_claim(claim, lam)
    if phi == "square_clipped":
        return square_clipped_claim(claim, a if a is not None else 5.0)
    raise ConfigError("unknown convex map %r" % phi)


def _phi_value(phi, x, a=None, lam=None):
    if phi == "abs":
        return np.abs(x)
    if phi == "identity":
        return x
    if phi == "shift":
        return x + a
    if phi == "scale":
        return lam * x
    if phi == "square_clipped":
        c = a if a is not None else 5.0
        return np.where(np.abs(x) <= c, x * x, 2.0 * c * np.abs(x) - c * c)
    raise ConfigError("unknown convex map %r" % phi)


@dataclass
class JensenReport:
    residual: np.ndarray     # (n,) E_g[phi(xi)] - phi(E_g[xi])
    se_combined: np.ndarray
    e_phi: np.ndarray
    phi_of_e: np.ndarray
    phi: str
    precheck: str


def jensen_check(gen, claim, phi, grid, ens, basis=None, picard=3, a=None,
                 lam=None, precheck=True):
    """Residual of Jensen's inequality E_g[phi(xi)] >= phi(E_g[xi])."""
    verdict = "skipped"
    if precheck:
        rep = check_jensen_conditions(gen,
                                      SamplerConfig(budget=PRECHECK_BUDGET))
        verdict = rep.verdict
        if verdict != "no-violation-found":
            raise ConfigError("Jensen harness needs the generator "
                              "conditions; check returned %r" % verdict)
    phi_claim = _phi_claim(claim, phi, a=a, lam=lam)
    sol = _stacked_solve([gen, gen], [phi_claim, claim], grid, ens, basis,
                         picard)
    n = gen.n
    e_phi = sol.y0[:n]
    e_xi = sol.y0[n:]
    phi_of_e = _phi_value(phi, e_xi, a=a, lam=lam)
    residual = e_phi - phi_of_e
    se = np.sqrt(sol.se[:n] ** 2 + sol.se[n:] ** 2)
    return JensenReport(residual=residual, se_combined=se, e_phi=e_phi,
                        phi_of_e=phi_of_e, phi=phi, precheck=verdict)


@dataclass
class SpreadReport:
    ask: np.ndarray
    bid: np.ndarray
    spread: np.ndarray
    se_combined: np.ndarray
    precheck: str


def askbid_spread(gen, claim, grid, ens, basis=None, picard=3,
                  precheck=True):
    """Ask E_g[xi] against bid -E_g[-xi]; the condition makes ask >= bid."""
    verdict = "skipped"
    if precheck:
        rep = check_askbid_condition(gen,
                                     SamplerConfig(budget=PRECHECK_BUDGET))
        verdict = rep.verdict
        if verdict != "no-violation-found":
            raise ConfigError("spread harness needs the ask-bid condition; "
                              "check returned %r" % verdict)
    sol = _stacked_solve([gen, gen], [claim, negate_claim(claim)], grid, ens,
                         basis, picard)
    n = gen.n
    ask = sol.y0[:n]
    bid = -sol.y0[n:]
    se = np.sqrt(sol.se[:n] ** 2 + sol.se[n:] ** 2)
    return SpreadReport(ask=ask, bid=bid, spread=ask - bid, se_combined=se,
                        precheck=verdict)
