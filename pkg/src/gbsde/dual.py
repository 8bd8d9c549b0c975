"""Convex-duality toolkit: conjugates, penalty terms, dual lower bounds.

The tilted measure Q^gamma is realized by shifting Brownian increments by
gamma*dt rather than by likelihood weights, which has zero weight variance
at desk scale; the exponential-density formulation is the documented
equivalent alternative.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import negate_claim, evaluate_terminal, shift_ensemble
from .conditions import SamplerConfig, check_comparison_pair
from .errors import ConfigError
from .solver import _exp_and_integral, _linear_params, solve_linear_analytic


# ---------------------------------------------------------------------------
# Fenchel-Legendre conjugate
# ---------------------------------------------------------------------------

@dataclass
class FenchelTable:
    k: int
    b_grid: np.ndarray        # (nb, n)
    c_grid: np.ndarray        # (nc, d)
    values: np.ndarray        # (nb, nc) inner sup on the largest box
    divergent: np.ndarray     # (nb, nc) bool: sup still growing under doubling
    box_scales: tuple = (1.0, 2.0, 4.0)


def _inner_sup(gen, k, y_mesh, z_mesh, b_grid, c_grid):
    """sup over the mesh of <y,b> + <z_k,c> - g_k, for every (b, c) pair."""
    P = y_mesh.shape[0]
    z_full = np.zeros((P, gen.n, gen.d))
    z_full[:, k, :] = z_mesh
    g = gen.evaluate(0.0, y_mesh, z_full)[:, k]
    yb = y_mesh @ b_grid.T          # (P, nb)
    zc = z_mesh @ c_grid.T          # (P, nc)
    out = np.empty((b_grid.shape[0], c_grid.shape[0]))
    for i in range(b_grid.shape[0]):
        out[i] = np.max(yb[:, i, None] + zc - g[:, None], axis=0)
    return out


def _mesh(half_y, half_z, n, d, points):
    axes_y = [np.linspace(-half_y, half_y, points)] * n
    axes_z = [np.linspace(-half_z, half_z, points)] * d
    grids = np.meshgrid(*(axes_y + axes_z), indexing="ij")
    flat = [g.ravel() for g in grids]
    y = np.column_stack(flat[:n])
    z = np.column_stack(flat[n:])
    return y, z


def fenchel_transform(gen, k, b_grid, c_grid, yz_box=None, inner_grid=21):
    """Numerical conjugate G_k(b, c) = sup_{y,z_k} <y,b> + <z_k,c> - g_k.

    The inner sup runs over nested boxes (1x, 2x, 4x the base box); a grid
    point is flagged divergent when the sup keeps growing under the last
    doubling, i.e. (b, c) falls outside the effective domain.  Divergence is
    data, not an error: the reported value is the sup on the largest box.
    """
    b_grid = np.atleast_2d(np.asarray(b_grid, dtype=np.float64))
    if b_grid.shape[1] != gen.n:
        b_grid = b_grid.reshape(-1, gen.n)
    c_grid = np.atleast_2d(np.asarray(c_grid, dtype=np.float64))
    if c_grid.shape[1] != gen.d:
        c_grid = c_grid.reshape(-1, gen.d)
    box = yz_box or gen.box()
    scales = (1.0, 2.0, 4.0)
    sups = []
    for s in scales:
        y_mesh, z_mesh = _mesh(s * box["y"], s * box["z"], gen.n, gen.d,
                               inner_grid)
        sups.append(_inner_sup(gen, k, y_mesh, z_mesh, b_grid, c_grid))
    growth = sups[2] - sups[1]
    divergent = growth > 1e-6 * (1.0 + np.abs(sups[2])) + 1e-9
    return FenchelTable(k=k, b_grid=b_grid, c_grid=c_grid, values=sups[2],
                        divergent=divergent, box_scales=scales)


def fenchel_reconstruct(table, y, z_k):
    """Reverse sup: recover g_k(y, z_k) from the finite part of the table."""
    finite = ~table.divergent
    if not finite.any():
        raise ConfigError("table has no effective domain to reconstruct from")
    b_idx, c_idx = np.nonzero(finite)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    z_k = np.atleast_1d(np.asarray(z_k, dtype=np.float64))
    scores = (table.b_grid[b_idx] @ y + table.c_grid[c_idx] @ z_k
              - table.values[b_idx, c_idx])
    return float(np.max(scores))


def fenchel_to_csv(table, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n = table.b_grid.shape[1]
        d = table.c_grid.shape[1]
        w.writerow(["b_%d" % j for j in range(n)]
                   + ["c_%d" % j for j in range(d)] + ["G", "divergent"])
        for i, b in enumerate(table.b_grid):
            for j, c in enumerate(table.c_grid):
                w.writerow([repr(v) for v in b] + [repr(v) for v in c]
                           + [repr(table.values[i, j]),
                              int(table.divergent[i, j])])


# ---------------------------------------------------------------------------
# penalty term
# ---------------------------------------------------------------------------

@dataclass
class PenaltyReport:
    alpha: np.ndarray        # (n,) penalty value
    exact: np.ndarray        # (n,) closed-form integral
    mc: np.ndarray           # (n,) simulated value
    se: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def penalty_term(params, grid, M=None, seed=None):
    """alpha = E^{Q^gamma}[ int_0^T G(s) exp(int_0^s beta) ds ].

    At desk scale (beta, gamma, G) are constants, so the integrand is
    deterministic under the drift-shifted measure: the Monte Carlo estimate
    collapses to the closed-form integral with zero weight variance, and
    both are reported for the cross-check.
    """
    beta, gamma, G = _linear_params(params)
    n = beta.shape[0]
    _, integral = _exp_and_integral(beta, G, grid.T)
    diagnostics = {
        "measure_change": "drift shift dB <- dB + gamma*dt",
        "weight_variance": 0.0,
        "note": "constant (beta, gamma, G): the penalty integrand is "
                "deterministic, so the simulated value equals the "
                "closed form",
    }
    return PenaltyReport(alpha=integral, exact=integral.copy(),
                         mc=integral.copy(), se=np.zeros(n),
                         diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# dual lower-bound sweep
# ---------------------------------------------------------------------------

@dataclass
class DualBoundReport:
    member_bounds: list       # per accepted member: (n,) bound
    member_se: list
    members: list             # the accepted (beta, gamma, G) descriptions
    refused: list             # [(index, reason)] for failed minorant checks
    best_bound: np.ndarray    # (n,) componentwise best accepted bound
    rho_value: np.ndarray
    rho_se: np.ndarray
    gap: np.ndarray           # (n,) rho - best bound


def _member_generator(member, n, d):
    from .core import linear_generator
    beta, gamma, G = _linear_params(member if hasattr(member, "kind")
                                    else dict(member))
    if beta.shape[0] != n:
        raise ConfigError("family member has wrong dimension")
    return linear_generator(beta, gamma, G, d=d), (beta, gamma, G)


def dual_lower_bound(gen, claim, family, grid, ens, basis=None, picard=3,
                     precheck_budget=20_000):
    """Penalized worst-case bounds from a family of linear minorants.

    Every member is precheck-sampled as a pointwise minorant of the driver;
    accepted members contribute E^{Q^gamma}[-xi exp(int beta)] - alpha,
    which weak duality keeps below rho up to Monte Carlo noise.

    The member expectations are evaluated by the same backward regression
    pass as rho itself (one stacked solve on the shared ensemble), so the
    discretization bias of bound and reference cancels and the weak-duality
    ordering survives at desk tolerances; the drift-shift closed form of
    each accepted member is attached as a cross-check.
    """
    from .core import evaluate_terminal, stack_claims, stack_generators
    from .solver import BasisConfig, _solve_backward

    accepted_gens, accepted, closed, refused, index = [], [], [], [], []
    for j, member in enumerate(family):
        mgen, body = _member_generator(member, gen.n, gen.d)
        if precheck_budget:
            cfg = SamplerConfig(budget=precheck_budget)
            check = check_comparison_pair(gen, mgen, cfg)
            if check.verdict != "no-violation-found":
                refused.append((j, "minorant check %s (residual %s)"
                                % (check.verdict, check.residual)))
                continue
        accepted_gens.append(mgen)
        index.append(j)
        accepted.append({"beta": body[0].tolist(),
                         "gamma": body[1].tolist(),
                         "G": body[2].tolist()})
        closed.append(solve_linear_analytic(mgen, negate_claim(claim),
                                            grid, ens).y0)
    if not accepted_gens:
        raise ConfigError("no family member passed the minorant precheck")

    stacked = stack_generators([gen] + accepted_gens)
    neg = negate_claim(claim)
    xi = evaluate_terminal(stack_claims([neg] * (1 + len(accepted_gens))),
                           ens)
    sol = _solve_backward(stacked, xi, grid, ens, basis or BasisConfig(),
                          picard, keep_paths=False)
    n = gen.n
    rho_value, rho_se = sol.y0[:n], sol.se[:n]
    bounds = [sol.y0[n * (1 + j): n * (2 + j)]
              for j in range(len(accepted_gens))]
    ses = [sol.se[n * (1 + j): n * (2 + j)]
           for j in range(len(accepted_gens))]
    for rec, cf in zip(accepted, closed):
        rec["closed_form"] = cf.tolist()
    best = np.max(np.stack(bounds), axis=0)
    return DualBoundReport(member_bounds=bounds, member_se=ses,
                           members=accepted, refused=refused,
                           best_bound=best, rho_value=rho_value,
                           rho_se=rho_se, gap=rho_value - best)
