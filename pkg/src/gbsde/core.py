"""Domain types: time grids, Brownian ensembles, claim and generator registries.

Sign convention used repo-wide: the backward equation is

    Y_t = xi + int_t^T g(s, Y_s, Z_s) ds - int_t^T Z_s dB_s,

so drivers that are usually quoted in forward form dY = (...)dt + Z dB
must be entered negated (``bs_linear`` already does this internally).
"""

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EvaluationError


# ---------------------------------------------------------------------------
# time grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    @property
    def dt(self):
        return self.T / self.N

    def times(self):
        # linspace pins t_N = T exactly
        return np.linspace(0.0, self.T, self.N + 1)


def make_time_grid(T, N):
    """Uniform grid with N steps on [0, T]."""
    if not (T > 0):
        raise ConfigError("horizon T must be positive, got %r" % (T,))
    if int(N) != N or N < 1:
        raise ConfigError("step count N must be a positive integer, got %r" % (N,))
    return TimeGrid(float(T), int(N))


# ---------------------------------------------------------------------------
# Gaussian sampling
# ---------------------------------------------------------------------------

# Rational approximation of the inverse normal CDF (Acklam's coefficients).
# A fixed published approximation is used instead of the library's sampler so
# the example-level numbers are reproducible bit-for-bit across languages.
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01,
           2.445134137142996e+00, 3.754408661907416e+00)
_ICDF_PLOW = 0.02425


def norm_inverse_cdf(p):
    """Vectorized inverse standard-normal CDF (Acklam rational approximation)."""
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)

    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    lo = p < _ICDF_PLOW
    hi = p > 1.0 - _ICDF_PLOW
    mid = ~(lo | hi)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        out[mid] = num * q / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(p[lo]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        out[lo] = num / den
    if np.any(hi):
        q = np.sqrt(-2.0 * np.log(1.0 - p[hi]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        out[hi] = -num / den
    return out


# ---------------------------------------------------------------------------
# path ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathEnsemble:
    grid: TimeGrid
    d: int
    M: int
    increments: np.ndarray  # (M, N, d)
    levels: np.ndarray      # (M, N+1, d)
    seed: int
    antithetic: bool


def _path_normals(seed, path_index, N, d):
    """Standard normals for one path from a counter-based stream.

    The stream key is (path index, seed), so generation order is irrelevant
    and parallel workers produce bit-identical ensembles.
    """
    bitgen = np.random.Philox(key=np.array([path_index, seed],
                                           dtype=np.uint64))
    u = np.random.Generator(bitgen).random((N, d))
    # keep u strictly inside (0, 1) so the inverse CDF stays finite
    np.clip(u, 1e-300, 1.0 - 1e-16, out=u)
    return norm_inverse_cdf(u)


def simulate_ensemble(grid, d, M, seed, antithetic=False):
    """Simulate M d-dimensional Brownian paths on the grid.

    With ``antithetic`` on, path 2q+1 is the exact negation of path 2q, so
    odd-symmetric sample means vanish identically.
    """
    if M < 2:
        raise ConfigError("need at least two paths, got M=%d" % M)
    if antithetic and M % 2 != 0:
        raise ConfigError("antithetic sampling requires an even path count")
    if d < 1:
        raise ConfigError("Brownian dimension must be >= 1")
    seed = int(seed)
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed must fit in 64 unsigned bits")

    N = grid.N
    sqdt = math.sqrt(grid.dt)
    incr = np.empty((M, N, d), dtype=np.float64)
    n_base = M // 2 if antithetic else M
    for q in range(n_base):
        p = 2 * q if antithetic else q
        incr[p] = _path_normals(seed, p, N, d) * sqdt
        if antithetic:
            np.negative(incr[p], out=incr[p + 1])

    levels = np.zeros((M, N + 1, d), dtype=np.float64)
    np.cumsum(incr, axis=1, out=levels[:, 1:, :])
    return PathEnsemble(grid=grid, d=d, M=M, increments=incr, levels=levels,
                        seed=seed, antithetic=antithetic)


def restrict_ensemble(ens, i):
    """Sub-ensemble consisting of the first i steps of each path."""
    if not (1 <= i <= ens.grid.N):
        raise ConfigError("restriction step out of range")
    sub = make_time_grid(ens.grid.dt * i, i)
    return PathEnsemble(grid=sub, d=ens.d, M=ens.M,
                        increments=ens.increments[:, :i, :],
                        levels=ens.levels[:, :i + 1, :],
                        seed=ens.seed, antithetic=ens.antithetic)


def shift_ensemble(ens, gamma):
    """Drift-shifted copy: dB <- dB + gamma*dt (Girsanov change of measure).

    ``gamma`` is a length-d vector (or scalar for d=1).
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    if gamma.shape != (ens.d,):
        raise ConfigError("drift shift has wrong dimension")
    incr = ens.increments + gamma * ens.grid.dt
    levels = np.zeros_like(ens.levels)
    np.cumsum(incr, axis=1, out=levels[:, 1:, :])
    return PathEnsemble(grid=ens.grid, d=ens.d, M=ens.M, increments=incr,
                        levels=levels, seed=ens.seed, antithetic=False)


def ensemble_to_csv(ens, path):
    """One row per path: path id followed by the Brownian levels."""
    times = ens.grid.times()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["path"]
        for i in range(ens.grid.N + 1):
            for j in range(ens.d):
                header.append("B_t%d_d%d" % (i, j))
        w.writerow(header)
        w.writerow(["t"] + [repr(t) for t in times for _ in range(ens.d)])
        for p in range(ens.M):
            w.writerow([p] + [repr(v) for v in ens.levels[p].ravel()])


# ---------------------------------------------------------------------------
# polynomial basis (shared by solver regressions and regression claims)
# ---------------------------------------------------------------------------

def basis_exponents(d, degree):
    """Monomial exponent tuples of total degree <= degree, in a fixed order."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), total):
            expo = [0] * d
            for j in combo:
                expo[j] += 1
            out.append(tuple(expo))
    return out


def poly_basis(x, degree):
    """Design matrix of monomials in the columns of x, shape (M, K)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    M, d = x.shape
    cols = []
    for expo in basis_exponents(d, degree):
        col = np.ones(M)
        for j, e in enumerate(expo):
            if e:
                col = col * x[:, j] ** e
        cols.append(col)
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# terminal claims
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TerminalClaim:
    """A registered payoff of the Brownian state.

    ``kind`` selects the registry entry; ``params`` hold its parameters and,
    for composite kinds, the inner claim(s).
    """
    n: int
    kind: str
    params: dict = field(default_factory=dict)


def constant_claim(c):
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    return TerminalClaim(n=c.size, kind="constant", params={"c": c})


def linear_claim(a, b=None, n=None, d=None):
    """xi_k = a[k] . B_T + b[k]; a has shape (n, d)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if b is None:
        b = np.zeros(a.shape[0])
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if b.shape[0] != a.shape[0]:
        raise ConfigError("linear claim: a and b disagree on n")
    return TerminalClaim(n=a.shape[0], kind="linear", params={"a": a, "b": b})


def identity_claim(n=1, d=1):
    """xi_k = B_T[k mod d] — the Brownian level itself."""
    a = np.zeros((n, d))
    for k in range(n):
        a[k, k % d] = 1.0
    return linear_claim(a)


def _unary(kind, inner, **params):
    params["inner"] = inner
    return TerminalClaim(n=inner.n, kind=kind, params=params)


def square_claim(inner):
    return _unary("square", inner)


def abs_claim(inner):
    return _unary("abs", inner)


def square_clipped_claim(inner, cap):
    """Convex clipping of x^2: quadratic on [-cap, cap], linear growth beyond.

    The linear continuation keeps the payoff Lipschitz (hence square
    integrable) while preserving convexity, unlike a hard min with a constant.
    """
    if not (cap > 0):
        raise ConfigError("clipping threshold must be positive")
    return _unary("square_clipped", inner, cap=float(cap))


def call_claim(inner, strike):
    """(S - L)+ componentwise on the inner claim."""
    return _unary("call", inner, strike=float(strike))


def put_on_netvalue_claim(inner, alpha, r):
    """max[-(X + alpha(1+r)), 0] — the insolvency put payoff."""
    return _unary("put_on_netvalue", inner, alpha=float(alpha), r=float(r))


def negate_claim(inner):
    return _unary("negate", inner)


def scale_claim(inner, a):
    return _unary("scale", inner, a=float(a))


def shift_claim(inner, a):
    """xi + a componentwise (a scalar or length-n vector)."""
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (inner.n,)).copy()
    return _unary("shift", inner, a=a)


def sum_claim(inners):
    inners = list(inners)
    n = inners[0].n
    if any(c.n != n for c in inners):
        raise ConfigError("sum claim: mismatched component counts")
    return TerminalClaim(n=n, kind="sum", params={"inners": inners})


def indicator_pos_claim(inner, step, coord=0):
    """inner * 1_{B_{t_step}[coord] > 0} — needs full path levels."""
    return _unary("indicator_pos", inner, step=int(step), coord=int(coord))


def regression_claim(coef, degree, d):
    """psi(B) = basis(B, degree) @ coef with coef of shape (K, n)."""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim == 1:
        coef = coef[:, None]
    return TerminalClaim(n=coef.shape[1], kind="regression_function",
                         params={"coef": coef, "degree": int(degree),
                                 "d": int(d)})


def stack_claims(claims):
    """Concatenate claims into one claim over the stacked component axis."""
    claims = list(claims)
    return TerminalClaim(n=sum(c.n for c in claims), kind="stack",
                         params={"inners": claims})


def _eval_claim(claim, bT, levels):
    k = claim.kind
    p = claim.params
    M = bT.shape[0]
    if k == "constant":
        return np.broadcast_to(p["c"], (M, claim.n)).copy()
    if k == "linear":
        return bT @ p["a"].T + p["b"]
    if k == "square":
        return _eval_claim(p["inner"], bT, levels) ** 2
    if k == "abs":
        return np.abs(_eval_claim(p["inner"], bT, levels))
    if k == "square_clipped":
        x = _eval_claim(p["inner"], bT, levels)
        c = p["cap"]
        return np.where(np.abs(x) <= c, x * x, 2.0 * c * np.abs(x) - c * c)
    if k == "call":
        return np.maximum(_eval_claim(p["inner"], bT, levels) - p["strike"], 0.0)
    if k == "put_on_netvalue":
        x = _eval_claim(p["inner"], bT, levels)
        return np.maximum(-(x + p["alpha"] * (1.0 + p["r"])), 0.0)
    if k == "negate":
        return -_eval_claim(p["inner"], bT, levels)
    if k == "scale":
        return p["a"] * _eval_claim(p["inner"], bT, levels)
    if k == "shift":
        return _eval_claim(p["inner"], bT, levels) + p["a"]
    if k == "sum":
        vals = _eval_claim(p["inners"][0], bT, levels)
        for c in p["inners"][1:]:
            vals = vals + _eval_claim(c, bT, levels)
        return vals
    if k == "indicator_pos":
        if levels is None:
            raise ConfigError("indicator claims need full path levels")
        mask = (levels[:, p["step"], p["coord"]] > 0.0).astype(np.float64)
        return _eval_claim(p["inner"], bT, levels) * mask[:, None]
    if k == "regression_function":
        if bT.shape[1] != p["d"]:
            raise ConfigError("regression claim built for d=%d, got d=%d"
                              % (p["d"], bT.shape[1]))
        return poly_basis(bT, p["degree"]) @ p["coef"]
    if k == "stack":
        return np.hstack([_eval_claim(c, bT, levels) for c in p["inners"]])
    raise ConfigError("unknown claim kind %r" % (k,))


def evaluate_claim_on_state(claim, bT, levels=None):
    """Evaluate a claim on explicit terminal states (used by the lattice)."""
    bT = np.asarray(bT, dtype=np.float64)
    if bT.ndim == 1:
        bT = bT[:, None]
    vals = _eval_claim(claim, bT, levels)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("claim %r produced non-finite values" % (claim.kind,))
    return vals


def evaluate_terminal(claim, ensemble):
    """Evaluate the claim on every path of the ensemble, shape (M, n)."""
    vals = evaluate_claim_on_state(claim, ensemble.levels[:, -1, :],
                                   levels=ensemble.levels)
    if vals.shape != (ensemble.M, claim.n):
        raise ConfigError("claim produced shape %r, expected %r"
                          % (vals.shape, (ensemble.M, claim.n)))
    return vals


def claim_is_markovian(claim):
    """True when the claim is a function of the terminal level alone."""
    if claim.kind == "indicator_pos":
        return False
    inners = []
    if "inner" in claim.params:
        inners = [claim.params["inner"]]
    elif "inners" in claim.params:
        inners = claim.params["inners"]
    return all(claim_is_markovian(c) for c in inners)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

#: default half-widths of the sampling box used by the condition checkers
DEFAULT_BOX = {"t": (0.0, 1.0), "y": 5.0, "z": 5.0}


@dataclass(frozen=True)
class GeneratorSpec:
    """The driver g(t, y, z) of the backward equation.

    ``evaluate`` is vectorized over paths: y has shape (M, n), z has shape
    (M, n, d) and the result has shape (M, n).
    """
    n: int
    d: int
    kind: str
    params: dict = field(default_factory=dict)
    lipschitz_bound: float = None
    domain_box: dict = None

    def evaluate(self, t, y, z):
        y = np.asarray(y, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        out = _eval_gen(self, t, y, z)
        bad = ~np.isfinite(out)
        if bad.any():
            comp = int(np.argwhere(bad)[0][1])
            raise EvaluationError(
                "generator %r non-finite in component %d" % (self.kind, comp),
                component=comp)
        return out

    def box(self):
        return self.domain_box if self.domain_box is not None else DEFAULT_BOX


def _eval_gen(gen, t, y, z):
    k = gen.kind
    p = gen.params
    if k == "zero":
        return np.zeros_like(y)
    if k == "linear":
        out = y @ p["beta"].T + np.einsum("mkd,kd->mk", z, p["gamma"])
        return out + p["G"]
    if k == "abs_z":
        if z.shape[2] == 1:
            return p["mu"] * np.abs(z[:, :, 0])
        return p["mu"] * np.sqrt(np.sum(z * z, axis=2))
    if k == "bs_linear":
        return -(p["r"] * y + np.einsum("mkd,d->mk", z, p["theta"]))
    if k == "competing_subsidiaries":
        z1 = z[:, 0, 0]
        z2 = z[:, 1, 0]
        g1 = -(p["r1"] * y[:, 0] + np.maximum(p["L"] - p["alpha2"] * y[:, 1], 0.0)
               + p["theta1"] * z1)
        g2 = -(p["r2"] * y[:, 1] + np.maximum(p["L"] - p["alpha1"] * y[:, 0], 0.0)
               + p["theta2"] * z2)
        return np.column_stack([g1, g2])
    if k == "cross_holding":
        out = -(p["r"] * (y @ p["weights"].T)
                + p["theta"] * np.einsum("mkd->mk", z))
        return out
    if k == "gamma_scaled":
        g = p["gamma"]
        if g == 1.0:
            return _eval_gen(p["inner"], t, y, z)
        return g * _eval_gen(p["inner"], t, y / g, z / g)
    if k == "dsl":
        return p["ast"].evaluate(t, y, z)
    if k == "block_linear":
        # batch of L independent small linear drivers, evaluated in one shot
        beta, gamma, G = p["beta"], p["gamma"], p["G"]
        L, nb = beta.shape[0], beta.shape[1]
        m = y.shape[0]
        yb = y.reshape(m, L, nb)
        zb = z.reshape(m, L, nb, gen.d)
        out = (np.einsum("mlj,lkj->mlk", yb, beta)
               + np.einsum("mlkd,lkd->mlk", zb, gamma) + G)
        return out.reshape(m, L * nb)
    if k == "stacked":
        specs = p["specs"]
        first = specs[0]
        if len(specs) > 1 and all(s is first for s in specs[1:]) \
                and np.isscalar(t):
            # identical blocks: fold the block axis into the path axis and
            # evaluate once instead of looping
            m = y.shape[0]
            L, nb, d = len(specs), first.n, first.d
            y_flat = y.reshape(m * L, nb)
            z_flat = z.reshape(m * L, nb, d)
            return _eval_gen(first, t, y_flat, z_flat).reshape(m, L * nb)
        outs = []
        off = 0
        for spec in specs:
            sl = slice(off, off + spec.n)
            outs.append(_eval_gen(spec, t, y[:, sl], z[:, sl, :]))
            off += spec.n
        return np.hstack(outs)
    raise ConfigError("unknown generator kind %r" % (k,))


def zero_generator(n=1, d=1):
    return GeneratorSpec(n=n, d=d, kind="zero", lipschitz_bound=0.0)


def linear_generator(beta, gamma, G=None, d=None):
    """g_k = sum_j beta[k,j] y_j + gamma[k] . z_k + G_k."""
    beta = np.atleast_2d(np.asarray(beta, dtype=np.float64))
    n = beta.shape[0]
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim == 0:
        gamma = gamma.reshape(1, 1)
    if gamma.ndim == 1:
        # a flat vector is per-component when it matches n (and d is 1),
        # otherwise it is one z-row shared by every component
        if gamma.shape[0] == n and d in (None, 1):
            gamma = gamma[:, None]
        else:
            gamma = np.broadcast_to(gamma[None, :], (n, gamma.shape[0])).copy()
    if gamma.shape[0] != n:
        raise ConfigError("linear generator: gamma has wrong component count")
    if G is None:
        G = np.zeros(n)
    G = np.broadcast_to(np.asarray(G, dtype=np.float64), (n,)).copy()
    lip = float(np.sum(np.abs(beta)) + np.sum(np.abs(gamma)))
    return GeneratorSpec(n=n, d=gamma.shape[1], kind="linear",
                         params={"beta": beta, "gamma": gamma, "G": G},
                         lipschitz_bound=lip)


def abs_z_generator(mu, n=1, d=1):
    """g_k = mu * |z_k| (Euclidean norm of row k for d > 1)."""
    return GeneratorSpec(n=n, d=d, kind="abs_z", params={"mu": float(mu)},
                         lipschitz_bound=abs(float(mu)))


def bs_linear_generator(r, theta, n=1, d=1):
    """g = -(r y + theta . z): the discounting/market-price-of-risk driver."""
    theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), (d,)).copy()
    return GeneratorSpec(n=n, d=d, kind="bs_linear",
                         params={"r": float(r), "theta": theta},
                         lipschitz_bound=abs(r) + float(np.sum(np.abs(theta))))


def competing_subsidiaries_generator(r1, r2, theta1, theta2, alpha1, alpha2, L):
    """Two subsidiaries coupled through the put on each other's net value."""
    p = {"r1": float(r1), "r2": float(r2), "theta1": float(theta1),
         "theta2": float(theta2), "alpha1": float(alpha1),
         "alpha2": float(alpha2), "L": float(L)}
    lip = max(abs(r1) + abs(alpha2), abs(r2) + abs(alpha1)) + \
        max(abs(theta1), abs(theta2))
    return GeneratorSpec(n=2, d=1, kind="competing_subsidiaries", params=p,
                         lipschitz_bound=lip)


def cross_holding_generator(r, theta, weights=None):
    """Two firms holding stocks of each other; g = -(r W y + theta z)."""
    if weights is None:
        weights = np.array([[0.9, 0.2], [0.1, 0.8]])
    weights = np.asarray(weights, dtype=np.float64)
    return GeneratorSpec(n=weights.shape[0], d=1, kind="cross_holding",
                         params={"r": float(r), "theta": float(theta),
                                 "weights": weights},
                         lipschitz_bound=abs(r) * float(np.sum(np.abs(weights)))
                         + abs(theta))


def gamma_scaled_generator(inner, gamma):
    """g^gamma(t,y,z) = gamma * g(t, y/gamma, z/gamma) — tolerance scaling."""
    if not (gamma > 0):
        raise ConfigError("tolerance parameter must be positive")
    lip = inner.lipschitz_bound
    return GeneratorSpec(n=inner.n, d=inner.d, kind="gamma_scaled",
                         params={"inner": inner, "gamma": float(gamma)},
                         lipschitz_bound=lip, domain_box=inner.domain_box)


def block_linear_generator(beta, gamma, G=None):
    """Batch of L independent linear drivers solved side by side.

    beta is (L, nb, nb), gamma is (L, nb, d), G is (L, nb); the resulting
    generator has n = L * nb and evaluates all blocks in one einsum, which
    beats stacking L separate linear specs when L is large.
    """
    beta = np.asarray(beta, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if beta.ndim != 3 or gamma.ndim != 3 or beta.shape[:2] != gamma.shape[:2]:
        raise ConfigError("block_linear: beta (L,nb,nb) and gamma (L,nb,d) "
                          "must agree on the leading axes")
    L, nb = beta.shape[:2]
    if G is None:
        G = np.zeros((L, nb))
    G = np.broadcast_to(np.asarray(G, dtype=np.float64), (L, nb)).copy()
    lip = float(np.max(np.sum(np.abs(beta), axis=(1, 2))
                       + np.sum(np.abs(gamma), axis=(1, 2))))
    return GeneratorSpec(n=L * nb, d=gamma.shape[2], kind="block_linear",
                         params={"beta": beta, "gamma": gamma, "G": G},
                         lipschitz_bound=lip)


def stack_generators(specs):
    """Block-diagonal stack: independent drivers solved in one backward pass."""
    specs = list(specs)
    d = specs[0].d
    if any(s.d != d for s in specs):
        raise ConfigError("stacked generators must share the Brownian dimension")
    lip = max((s.lipschitz_bound or 0.0) for s in specs)
    return GeneratorSpec(n=sum(s.n for s in specs), d=d, kind="stacked",
                         params={"specs": specs}, lipschitz_bound=lip)


# ---------------------------------------------------------------------------
# rectangles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RectangleSpec:
    C1: np.ndarray
    C2: np.ndarray


def make_rectangle(C1, C2=None):
    """Componentwise box [C1, C2]; a single point when C2 is omitted."""
    C1 = np.atleast_1d(np.asarray(C1, dtype=np.float64))
    C2 = C1.copy() if C2 is None else np.atleast_1d(np.asarray(C2, dtype=np.float64))
    if C1.shape != C2.shape or np.any(C1 > C2):
        raise ConfigError("rectangle corners must satisfy C1 <= C2 componentwise")
    return RectangleSpec(C1=C1, C2=C2)


# ---------------------------------------------------------------------------
# JSON (de)serialization of claims and generators
# ---------------------------------------------------------------------------

def claim_to_dict(claim):
    p = {}
    for key, val in claim.params.items():
        if key == "inner":
            p["inner"] = claim_to_dict(val)
        elif key == "inners":
            p["inners"] = [claim_to_dict(c) for c in val]
        elif isinstance(val, np.ndarray):
            p[key] = val.tolist()
        else:
            p[key] = val
    return {"n": claim.n, "kind": claim.kind, "params": p}


_CLAIM_ARRAY_PARAMS = {"c", "a", "coef"}


def claim_from_dict(doc):
    p = dict(doc.get("params", {}))
    if "inner" in p:
        p["inner"] = claim_from_dict(p["inner"])
    if "inners" in p:
        p["inners"] = [claim_from_dict(c) for c in p["inners"]]
    for key in list(p):
        if key in _CLAIM_ARRAY_PARAMS or (key in ("b",) and isinstance(p[key], list)):
            p[key] = np.asarray(p[key], dtype=np.float64)
    if doc["kind"] == "shift" and isinstance(p.get("a"), (int, float)):
        p["a"] = np.full(doc["n"], float(p["a"]))
    return TerminalClaim(n=int(doc["n"]), kind=doc["kind"], params=p)


def generator_to_dict(gen):
    p = {}
    for key, val in gen.params.items():
        if key == "inner":
            p["inner"] = generator_to_dict(val)
        elif key == "specs":
            p["specs"] = [generator_to_dict(s) for s in val]
        elif key == "ast":
            p["expressions"] = val.sources()
        elif isinstance(val, np.ndarray):
            p[key] = val.tolist()
        else:
            p[key] = val
    return {"n": gen.n, "d": gen.d, "kind": gen.kind, "params": p,
            "lipschitz_bound": gen.lipschitz_bound,
            "domain_box": gen.domain_box}


_GEN_ARRAY_PARAMS = {"beta", "gamma", "G", "theta", "weights"}


def generator_from_dict(doc):
    p = dict(doc.get("params", {}))
    kind = doc["kind"]
    if kind == "gamma_scaled":
        p["inner"] = generator_from_dict(p["inner"])
    if kind == "stacked":
        p["specs"] = [generator_from_dict(s) for s in p["specs"]]
    if kind == "dsl":
        from . import gendsl  # deferred: gendsl does not import core
        p["ast"] = gendsl.parse_generator(";".join(p.pop("expressions")),
                                          int(doc["n"]), int(doc["d"]))
    for key in list(p):
        if key in _GEN_ARRAY_PARAMS and isinstance(p[key], list):
            p[key] = np.asarray(p[key], dtype=np.float64)
    if kind == "gamma_scaled":
        p["gamma"] = float(p["gamma"])
    box = doc.get("domain_box")
    if box is not None:
        box = {k: tuple(v) if isinstance(v, list) else v for k, v in box.items()}
    return GeneratorSpec(n=int(doc["n"]), d=int(doc["d"]), kind=kind, params=p,
                         lipschitz_bound=doc.get("lipschitz_bound"),
                         domain_box=box)
