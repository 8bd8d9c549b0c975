"""Numerical solution of the coupled backward equation.

Main entry points:

- :func:`solve_lsmc` — least-squares Monte Carlo backward induction with an
  implicit-in-Y Euler step (fixed Picard count).
- :func:`solve_linear_analytic` — measure-change solution of linear drivers.
- :func:`solve_tree_1d` — recombining lattice oracle for n = d = 1.
- :func:`restart_at` — turn a fitted time slice into a terminal claim.
- :func:`penalized_doob_meyer` — penalized approximation of the increasing
  process in the nonlinear supermartingale decomposition.

All conditional expectations are polynomial regressions in the Brownian
levels, solved by ridge-regularized normal equations with a fixed summation
order so identical inputs reproduce bit-identical solutions.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (TerminalClaim, evaluate_terminal, evaluate_claim_on_state,
                   poly_basis, basis_exponents, regression_claim,
                   constant_claim, claim_is_markovian)
from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class BasisConfig:
    """Polynomial regression basis in the d Brownian levels."""
    degree: int = 3
    ridge: float = 1e-10


@dataclass
class BsdeSolution:
    grid: object
    n: int
    d: int
    M: int
    antithetic: bool
    basis: BasisConfig
    y0: np.ndarray            # (n,) time-0 value (constant across paths)
    se: np.ndarray            # (n,) Monte Carlo standard error proxy
    Y: np.ndarray = None      # (M, N+1, n) when paths were kept
    Z: np.ndarray = None      # (M, N, n, d)
    coef_y: list = None       # per step i: (K, n) regression table
    coef_z: list = None       # per step i < N: (K, n, d)
    diagnostics: dict = field(default_factory=dict)


def _standard_error(values, antithetic):
    """Per-component SE; antithetic pairs are averaged before the variance."""
    if antithetic:
        paired = 0.5 * (values[0::2] + values[1::2])
    else:
        paired = values
    m = paired.shape[0]
    return np.std(paired, axis=0, ddof=1) / math.sqrt(m)


def _regress(gram, phi_t_target, step):
    try:
        coef = np.linalg.solve(gram, phi_t_target)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("regression failed at step %d: %s" % (step, exc))
    if not np.all(np.isfinite(coef)):
        raise NumericalError("non-finite regression coefficients at step %d"
                             % step)
    return coef


def _solve_backward(gen, xi, grid, ens, basis, picard, keep_paths):
    """Backward induction core shared by all LSMC entry points."""
    M, n, d = ens.M, gen.n, ens.d
    N, dt = grid.N, grid.dt
    K = len(basis_exponents(d, basis.degree))
    if K > M / 20:
        raise ConfigError("basis has %d functions; need M >= %d paths"
                          % (K, 20 * K))
    times = grid.times()
    eye = np.eye(K)

    Y = np.empty((M, N + 1, n)) if keep_paths else None
    Z = np.empty((M, N, n, d)) if keep_paths else None
    coef_y = [None] * (N + 1)
    coef_z = [None] * N
    residuals = np.empty((N, n))
    picard_deltas = np.empty(N)

    if keep_paths:
        Y[:, N, :] = xi

    # terminal regression table (used only by restart_at(N))
    phi = poly_basis(ens.levels[:, N, :], basis.degree)
    gram = phi.T @ phi + basis.ridge * eye
    coef_y[N] = _regress(gram, phi.T @ xi, N)

    y_next = xi
    driver_acc = np.zeros((M, n))
    for i in range(N - 1, -1, -1):
        phi = poly_basis(ens.levels[:, i, :], basis.degree)
        gram = phi.T @ phi + basis.ridge * eye
        db = ens.increments[:, i, :]

        # Z_i: regression of Y_{i+1} * dB^T / dt on the time-i basis
        if d == 1:
            z_target = y_next * (db / dt)
        else:
            z_target = (y_next[:, :, None] * db[:, None, :] / dt
                        ).reshape(M, n * d)
        cz = _regress(gram, phi.T @ z_target, i).reshape(K, n, d)
        z_fit = (phi @ cz.reshape(K, n * d)).reshape(M, n, d)

        # Y_i: implicit step via Picard iteration; each iterate regresses the
        # full target, so the final fitted values lie exactly in the basis span
        cy = _regress(gram, phi.T @ y_next, i)
        y_fit = phi @ cy
        delta = 0.0
        for _ in range(picard):
            target = y_next + dt * gen.evaluate(times[i], y_fit, z_fit)
            cy_new = _regress(gram, phi.T @ target, i)
            y_new = phi @ cy_new
            delta = float(np.max(np.abs(y_new - y_fit)))
            cy, y_fit = cy_new, y_new
            if delta <= 1e-14 * (1.0 + float(np.max(np.abs(y_fit)))):
                break  # fixed point reached (e.g. driver free of y)

        coef_y[i] = cy
        coef_z[i] = cz
        residuals[i] = np.sqrt(np.mean((target - y_fit) ** 2, axis=0))
        picard_deltas[i] = delta
        # dt * g at the last Picard iterate: target - y_next, no extra eval
        driver_acc += target - y_next
        if keep_paths:
            Y[:, i, :] = y_fit
            Z[:, i, :, :] = z_fit
        y_next = y_fit

    y0 = y_next[0].copy()  # time-0 basis row is [1, 0, ...]: constant fit
    se = _standard_error(xi + driver_acc, ens.antithetic)
    diagnostics = {"residuals": residuals, "picard_deltas": picard_deltas,
                   "picard": picard}
    return BsdeSolution(grid=grid, n=n, d=d, M=M, antithetic=ens.antithetic,
                        basis=basis, y0=y0, se=se, Y=Y, Z=Z,
                        coef_y=coef_y, coef_z=coef_z, diagnostics=diagnostics)


def solve_lsmc(gen, claim, grid, ens, basis=None, picard=3, keep_paths=True):
    """Solve the n-dimensional backward equation by regression Monte Carlo."""
    basis = basis or BasisConfig()
    if picard < 1:
        raise ConfigError("picard count must be >= 1 (1 = explicit scheme)")
    if gen.n != claim.n:
        raise ConfigError("generator n=%d but claim n=%d" % (gen.n, claim.n))
    if gen.d != ens.d:
        raise ConfigError("generator d=%d but ensemble d=%d" % (gen.d, ens.d))
    if grid != ens.grid:
        raise ConfigError("grid does not match the ensemble's grid")
    xi = evaluate_terminal(claim, ens)
    return _solve_backward(gen, xi, grid, ens, basis, picard, keep_paths)


# ---------------------------------------------------------------------------
# linear analytic solver
# ---------------------------------------------------------------------------

def _expm(A):
    """Matrix exponential by scaling-and-squaring of the Taylor series.

    Only meant for the small (<= 3x3 augmented) matrices used here.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    norm = np.max(np.sum(np.abs(A), axis=1))
    s = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    B = A / (2 ** s)
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, 30):
        term = term @ B / k
        out = out + term
        if np.max(np.abs(term)) < 1e-18:
            break
    for _ in range(s):
        out = out @ out
    return out


def _exp_and_integral(beta, G, T):
    """(e^{beta T}, int_0^T e^{beta s} G ds) via one augmented exponential."""
    n = beta.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = beta
    aug[:n, n] = G
    E = _expm(aug * T)
    return E[:n, :n], E[:n, n]


@dataclass(frozen=True)
class LinearSolution:
    y0: np.ndarray          # (n,)
    se: np.ndarray          # (n,) zero for exact (deterministic-claim) values
    exact: bool
    path: np.ndarray = None  # (N+1, n) deterministic value curve when exact


def _linear_params(params):
    """Normalize a linear body into (beta (n,n), gamma (n,d), G (n,))."""
    if hasattr(params, "kind"):
        gen = params
        if gen.kind == "linear":
            return gen.params["beta"], gen.params["gamma"], gen.params["G"]
        if gen.kind == "bs_linear":
            r, theta = gen.params["r"], gen.params["theta"]
            beta = -r * np.eye(gen.n)
            gamma = np.tile(-theta, (gen.n, 1))
            return beta, gamma, np.zeros(gen.n)
        if gen.kind == "cross_holding":
            p = gen.params
            beta = -p["r"] * p["weights"]
            gamma = np.full((gen.n, 1), -p["theta"])
            return beta, gamma, np.zeros(gen.n)
        if gen.kind == "zero":
            return (np.zeros((gen.n, gen.n)), np.zeros((gen.n, gen.d)),
                    np.zeros(gen.n))
        raise ConfigError("generator kind %r has no linear body" % gen.kind)
    beta = np.atleast_2d(np.asarray(params["beta"], dtype=np.float64))
    n = beta.shape[0]
    gamma = np.asarray(params.get("gamma", 0.0), dtype=np.float64)
    if gamma.ndim == 0:
        gamma = np.full((n, 1), float(gamma))
    gamma = np.atleast_2d(gamma)
    if gamma.shape[0] != n:
        gamma = np.broadcast_to(gamma, (n, gamma.shape[1])).copy()
    G = np.broadcast_to(np.asarray(params.get("G", 0.0), dtype=np.float64),
                        (n,)).copy()
    return beta, gamma, G


def solve_linear_analytic(params, claim, grid, ens=None):
    """Time-0 value of the linear BSDE g = beta y + gamma . z + G.

    The value is E under the gamma-tilted measure (increments shifted by
    gamma*dt) of exp(beta T) xi, plus the accumulated intercept
    int_0^T exp(beta s) G ds.  Deterministic claims get the exact ODE
    solution with no simulation.  Supported shapes: a drift shift shared by
    all components with arbitrary beta, or a diagonal beta with
    per-component shifts.
    """
    from .core import shift_ensemble
    beta, gamma, G = _linear_params(params)
    n = beta.shape[0]
    T = grid.T

    expbT, intG = _exp_and_integral(beta, G, T)

    if claim.kind == "constant":
        c = claim.params["c"]
        times = grid.times()
        path = np.empty((grid.N + 1, n))
        for i, t in enumerate(times):
            e, ig = _exp_and_integral(beta, G, T - t)
            path[i] = e @ c + ig
        return LinearSolution(y0=path[0].copy(), se=np.zeros(n), exact=True,
                              path=path)

    if ens is None:
        raise ConfigError("stochastic claims need a path ensemble")
    shared = np.allclose(gamma, gamma[0])
    diag_beta = np.allclose(beta, np.diag(np.diag(beta)))
    if shared:
        shifted = shift_ensemble(ens, gamma[0])
        xi = evaluate_terminal(claim, shifted)
        vals = xi @ expbT.T + intG
        y0 = np.mean(vals, axis=0)
        se = _standard_error(vals, ens.antithetic)
        return LinearSolution(y0=y0, se=se, exact=False)
    if diag_beta:
        y0 = np.empty(n)
        se = np.empty(n)
        for k in range(n):
            shifted = shift_ensemble(ens, gamma[k])
            xi = evaluate_terminal(claim, shifted)[:, k]
            ek, igk = _exp_and_integral(beta[k:k + 1, k:k + 1],
                                        G[k:k + 1], T)
            vals = ek[0, 0] * xi + igk[0]
            y0[k] = np.mean(vals)
            se[k] = float(_standard_error(vals[:, None], ens.antithetic)[0])
        return LinearSolution(y0=y0, se=se, exact=False)
    raise ConfigError("per-component drift shifts require a diagonal beta")


# ---------------------------------------------------------------------------
# 1-d lattice oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeSolution:
    y0: float
    lattice: list  # per step i: node values array of Y at that step
    grid: object
    branching: int


def solve_tree_1d(gen, claim, grid, branching=2, picard=3):
    """Recombining binomial/trinomial lattice for n = d = 1 drivers.

    Conditional expectations are exact on the lattice, so the only error is
    time discretization — a regression-noise-free oracle for the LSMC path.
    """
    if gen.n != 1 or gen.d != 1:
        raise ConfigError("lattice oracle supports n = d = 1 only")
    if branching not in (2, 3):
        raise ConfigError("branching must be 2 or 3")
    if not claim_is_markovian(claim):
        raise ConfigError("lattice oracle needs a terminal-state claim")
    N, dt = grid.N, grid.dt
    times = grid.times()
    if branching == 2:
        h = math.sqrt(dt)
        moves = np.array([h, -h])
        probs = np.array([0.5, 0.5])

        def nodes(i):
            return (2.0 * np.arange(i + 1) - i) * h

        def children(y_next):  # y_next indexed by k at step i+1
            return np.stack([y_next[1:], y_next[:-1]])  # up, down
    else:
        h = math.sqrt(3.0 * dt)
        moves = np.array([h, 0.0, -h])
        probs = np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])

        def nodes(i):
            return np.arange(-i, i + 1) * h

        def children(y_next):
            return np.stack([y_next[2:], y_next[1:-1], y_next[:-2]])

    y = evaluate_claim_on_state(claim, nodes(N))[:, 0]
    lattice = [None] * (N + 1)
    lattice[N] = y.copy()
    for i in range(N - 1, -1, -1):
        ch = children(y)                       # (branching, nodes_i)
        cond = probs @ ch                      # exact conditional expectation
        z = (probs * moves) @ ch / dt
        m = cond.shape[0]
        z3 = z[:, None, None]
        y_fit = cond
        for _ in range(picard):
            y_fit = cond + dt * gen.evaluate(times[i], y_fit[:, None], z3)[:, 0]
        y = y_fit
        lattice[i] = y.copy()
    return TreeSolution(y0=float(y[0]), lattice=lattice, grid=grid,
                        branching=branching)


# ---------------------------------------------------------------------------
# restart mechanism
# ---------------------------------------------------------------------------

def restart_at(sol, i):
    """Terminal claim psi with psi(B_{t_i}) equal to the fitted Y_{t_i}.

    Because every backward step regresses its full target, the fitted values
    lie exactly in the basis span and psi reproduces them bitwise on the
    original ensemble.
    """
    if not (0 <= i <= sol.grid.N):
        raise ConfigError("restart step %d out of range 0..%d" % (i, sol.grid.N))
    if sol.coef_y is None or sol.coef_y[i] is None:
        raise ConfigError("solution carries no regression table at step %d" % i)
    return regression_claim(sol.coef_y[i], sol.basis.degree, sol.d)


# ---------------------------------------------------------------------------
# penalized Doob-Meyer approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenalizationResult:
    m_list: list
    y_m: dict        # m -> (N+1, n) cross-path mean of the fitted y^m
    A_m: dict        # m -> (N+1, n) increasing-process approximation
    sup_err: dict    # m -> (n,) sup_t |y^m_t - Y_t|
    monotone: dict   # m -> bool, A^m nondecreasing up to 1e-8
    notes: list


def penalized_doob_meyer(gen, target, m_list, grid, ens, basis=None, picard=3):
    """Approximate the increasing process of a supermartingale target.

    For each penalization level m and each component k a one-dimensional
    BSDE with the extra drift m(Y_s - y^m_s) is solved, the remaining
    components being frozen at the target path.  The penalty drift is
    handled exactly (linearly implicit), so large m*dt is stable.
    """
    basis = basis or BasisConfig()
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target[:, None]
    N, dt = grid.N, grid.dt
    if target.shape != (N + 1, gen.n):
        raise ConfigError("target path must have shape (N+1, n)")
    M, n, d = ens.M, gen.n, ens.d
    K = len(basis_exponents(d, basis.degree))
    times = grid.times()
    eye = np.eye(K)

    y_m, A_m, sup_err, monotone = {}, {}, {}, {}
    notes = []
    for m in m_list:
        fitted = np.empty((N + 1, n))
        fitted[N] = target[N]
        # per-component penalized solve, others frozen at the target
        y_next = np.broadcast_to(target[N], (M, n)).copy()
        path_mean = np.empty((N + 1, n))
        path_mean[N] = target[N]
        for i in range(N - 1, -1, -1):
            phi = poly_basis(ens.levels[:, i, :], basis.degree)
            gram = phi.T @ phi + basis.ridge * eye
            db = ens.increments[:, i, :]
            z_target = (y_next[:, :, None] * db[:, None, :] / dt).reshape(M, n * d)
            cz = _regress(gram, phi.T @ z_target, i).reshape(K, n, d)
            z_fit = (phi @ cz.reshape(K, n * d)).reshape(M, n, d)

            scale = 1.0 / (1.0 + m * dt)
            cy = _regress(gram, phi.T @ y_next, i) * scale
            y_fit = phi @ cy
            for _ in range(picard):
                y_new = np.empty_like(y_fit)
                for k in range(n):
                    frozen = np.broadcast_to(target[i], (M, n)).copy()
                    frozen[:, k] = y_fit[:, k]
                    zk = np.zeros((M, n, d))
                    zk[:, k, :] = z_fit[:, k, :]
                    gk = gen.evaluate(times[i], frozen, zk)[:, k]
                    tgt = y_next[:, k] + dt * gk + dt * m * target[i, k]
                    ck = _regress(gram, phi.T @ tgt, i) * scale
                    y_new[:, k] = phi @ ck
                y_fit = y_new
            y_next = y_fit
            path_mean[i] = np.mean(y_fit, axis=0)
        # increasing process A^m_t = m * int_0^t (Y_s - y^m_s) ds (trapezoid)
        gap = target - path_mean
        A = np.zeros((N + 1, n))
        A[1:] = m * np.cumsum(0.5 * (gap[:-1] + gap[1:]) * dt, axis=0)
        y_m[m] = path_mean
        A_m[m] = A
        sup_err[m] = np.max(np.abs(gap), axis=0)
        mono = bool(np.all(np.diff(A, axis=0) >= -1e-8))
        monotone[m] = mono
        if not mono:
            notes.append("m=%s: A decreasing beyond tolerance — "
                         "target not a supermartingale" % m)
    return PenalizationResult(m_list=list(m_list), y_m=y_m, A_m=A_m,
                              sup_err=sup_err, monotone=monotone, notes=notes)


# ---------------------------------------------------------------------------
# export helpers
# ---------------------------------------------------------------------------

def solution_summary(sol):
    """JSON-ready summary of a solve."""
    diag = sol.diagnostics
    return {
        "y0": sol.y0.tolist(),
        "standard_error": sol.se.tolist(),
        "n": sol.n,
        "d": sol.d,
        "M": sol.M,
        "steps": sol.grid.N,
        "horizon": sol.grid.T,
        "antithetic": sol.antithetic,
        "basis": {"degree": sol.basis.degree, "ridge": sol.basis.ridge},
        "diagnostics": {
            "max_regression_residual": float(np.max(diag["residuals"])),
            "max_picard_delta": float(np.max(diag["picard_deltas"])),
            "picard": diag["picard"],
        },
    }


def solution_value_curve(sol):
    """(N+1) x (1 + 2n) table: t, mean Y per component, mean |Z| per component."""
    if sol.Y is None:
        raise ConfigError("solution was run without per-path storage")
    times = sol.grid.times()
    mean_y = np.mean(sol.Y, axis=0)
    mean_z = np.concatenate([np.mean(np.abs(sol.Z), axis=(0, 3)),
                             np.zeros((1, sol.n))], axis=0)
    return np.column_stack([times, mean_y, mean_z])


def solution_to_csv(sol, path):
    import csv as _csv
    table = solution_value_curve(sol)
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        header = (["t"] + ["Y_mean_%d" % k for k in range(sol.n)]
                  + ["Z_absmean_%d" % k for k in range(sol.n)])
        w.writerow(header)
        for row in table:
            w.writerow([repr(v) for v in row])
