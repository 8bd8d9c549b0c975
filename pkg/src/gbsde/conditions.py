"""Sampling falsifiers for the explicit generator criteria.

Every checker is a semi-decision: "no-violation-found" only certifies that
the configured sample budget found nothing, while "violated" comes with a
concrete counterexample whose residual can be re-evaluated exactly.

The sampler is a prefix stream: samples are generated in fixed-size chunks
from a counter-based RNG, so a violation found at budget S is found at any
larger budget with the same seed.

Linear registry forms (zero / linear / bs_linear / cross_holding) get exact
sign-test verdicts where that is trivial, overriding sampling; violated
symbolic verdicts still construct an explicit point and evaluate the driver
there, so counterexamples always reproduce.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import GeneratorSpec
from .errors import ConfigError

_CHUNK = 4096


@dataclass(frozen=True)
class SamplerConfig:
    budget: int = 100_000
    tolerance: float = 1e-9
    seed: int = 20240
    box: dict = None  # falls back to the generator's own domain box

    def resolve_box(self, gen):
        return self.box if self.box is not None else gen.box()


@dataclass
class CheckReport:
    criterion: str
    samples_tried: int
    verdict: str                    # no-violation-found | violated | precondition-unmet
    counterexample: dict = None     # point fields as plain lists/floats
    residual: float = None
    tolerance: float = 1e-9
    details: dict = field(default_factory=dict)

    def passed(self):
        return self.verdict == "no-violation-found"

    def to_dict(self):
        return {
            "criterion": self.criterion,
            "samples_tried": self.samples_tried,
            "verdict": self.verdict,
            "counterexample": self.counterexample,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "details": self.details,
        }


def _rng(seed, stream):
    key = np.array([stream, seed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sample_box(rng, m, n, half):
    return rng.uniform(-half, half, size=(m, n))


def _sample_delta(rng, m, n, half, k):
    """Exponential-tailed nonnegative deviations with the k-th entry zeroed."""
    delta = np.minimum(rng.exponential(scale=half / 3.0, size=(m, n)), half)
    delta[np.arange(m), k] = 0.0
    return delta


def _point(arrays, idx):
    """Slice one sample out of a dict of per-sample arrays, JSON-ready."""
    out = {}
    for key, val in arrays.items():
        v = val[idx]
        if isinstance(v, np.ndarray):
            out[key] = v.tolist()
        elif isinstance(v, (np.floating, float)):
            out[key] = float(v)
        elif isinstance(v, (np.integer, int)):
            out[key] = int(v)
        else:
            out[key] = str(v)
    return out


def _run_falsifier(criterion, cfg, sampler, residual_fn, tol, details=None,
                   stream=0, seed=None):
    """Generic chunked falsification loop.

    ``sampler(rng, m)`` returns a dict of per-sample arrays; ``residual_fn``
    maps it to an (m,) residual array, negative below -tol meaning violated.
    Chunks always have the full internal size so the stream is budget-
    independent; only the first ``budget`` samples count.
    """
    seed = cfg.seed if seed is None else seed
    rng = _rng(seed, stream)
    tried = 0
    while tried < cfg.budget:
        valid = min(_CHUNK, cfg.budget - tried)
        sample = sampler(rng, _CHUNK)
        res = residual_fn(sample)
        bad = np.nonzero(res[:valid] < -tol)[0]
        if bad.size:
            idx = int(bad[0])
            return CheckReport(criterion=criterion,
                               samples_tried=tried + idx + 1,
                               verdict="violated",
                               counterexample=_point(sample, idx),
                               residual=float(res[idx]),
                               tolerance=tol,
                               details=dict(details or {}))
        tried += valid
    return CheckReport(criterion=criterion, samples_tried=cfg.budget,
                       verdict="no-violation-found", tolerance=tol,
                       details=dict(details or {}))


def _eval_k(gen, t, y, z, k):
    """Component-k values; t may be an (m,) array for t-dependent drivers."""
    return gen.evaluate(t, y, z)[np.arange(y.shape[0]), k]


def _linear_body(gen):
    """(beta, gamma, G) when the generator is an affine registry form."""
    if gen.kind == "zero":
        return (np.zeros((gen.n, gen.n)), np.zeros((gen.n, gen.d)),
                np.zeros(gen.n))
    if gen.kind == "linear":
        p = gen.params
        return p["beta"], p["gamma"], p["G"]
    if gen.kind == "bs_linear":
        p = gen.params
        return (-p["r"] * np.eye(gen.n), np.tile(-p["theta"], (gen.n, 1)),
                np.zeros(gen.n))
    if gen.kind == "cross_holding":
        p = gen.params
        return (-p["r"] * p["weights"], np.full((gen.n, 1), -p["theta"]),
                np.zeros(gen.n))
    if gen.kind == "gamma_scaled":
        body = _linear_body(gen.params["inner"])
        if body is None:
            return None
        beta, gamma, G = body
        return beta, gamma, gen.params["gamma"] * G
    return None


def _offdiag_min(beta):
    mask = ~np.eye(beta.shape[0], dtype=bool)
    if not mask.any():
        return 0.0, None
    vals = np.where(mask, beta, np.inf)
    k, j = np.unravel_index(np.argmin(vals), vals.shape)
    return float(beta[k, j]), (int(k), int(j))


# ---------------------------------------------------------------------------
# comparison pair (the inequality enabling componentwise comparison)
# ---------------------------------------------------------------------------

def comparison_pair_residual(g1, g2, point):
    """Residual g1_k(t, dy+y', z) - g2_k(t, y', z') at a stored point."""
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    yp = np.atleast_2d(np.asarray(point["y_prime"], dtype=np.float64))
    dy = np.atleast_2d(np.asarray(point["dy"], dtype=np.float64))
    z = np.asarray(point["z"], dtype=np.float64).reshape(1, g1.n, g1.d)
    zp = np.asarray(point["z_prime"], dtype=np.float64).reshape(1, g1.n, g1.d)
    k = int(point["k"])
    lhs = g1.evaluate(t, dy + yp, z)[0, k]
    rhs = g2.evaluate(t, yp, zp)[0, k]
    return float(lhs - rhs)


def check_comparison_pair(g1, g2, cfg=None):
    cfg = cfg or SamplerConfig()
    if (g1.n, g1.d) != (g2.n, g2.d):
        raise ConfigError("comparison pair needs matching dimensions")
    box = cfg.resolve_box(g1)
    n, d = g1.n, g1.d

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        yp = _sample_box(rng, m, n, box["y"])
        dy = _sample_delta(rng, m, n, box["y"], k)
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp[np.arange(m), k, :] = z[np.arange(m), k, :]
        return {"t": t, "k": k, "y_prime": yp, "dy": dy, "z": z, "z_prime": zp}

    def residual(s):
        lhs = _eval_k(g1, s["t"], s["dy"] + s["y_prime"], s["z"], s["k"])
        rhs = _eval_k(g2, s["t"], s["y_prime"], s["z_prime"], s["k"])
        return lhs - rhs

    return _run_falsifier("comparison_pair", cfg, sampler, residual,
                          cfg.tolerance)


# ---------------------------------------------------------------------------
# quasi-monotonicity
# ---------------------------------------------------------------------------

def quasi_monotone_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    y = np.atleast_2d(np.asarray(point["y_prime"], dtype=np.float64))
    k = int(point["k"])
    if "z_prime" in point and point["z_prime"] is not None:
        z = np.asarray(point["z"], dtype=np.float64).reshape(1, gen.n, gen.d)
        zp = np.asarray(point["z_prime"], dtype=np.float64).reshape(1, gen.n,
                                                                    gen.d)
        a = gen.evaluate(t, y, z)[0, k]
        b = gen.evaluate(t, y, zp)[0, k]
        return float(-abs(a - b))
    dy = np.atleast_2d(np.asarray(point["dy"], dtype=np.float64))
    z = np.asarray(point["z"], dtype=np.float64).reshape(1, gen.n, gen.d)
    a = gen.evaluate(t, y + dy, z)[0, k]
    b = gen.evaluate(t, y, z)[0, k]
    return float(a - b)


def check_quasi_monotone(gen, cfg=None):
    """Two sub-verdicts: independence of off-row z and monotone off-row y."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d

    body = _linear_body(gen)
    if body is not None:
        beta, _, _ = body
        worst, pos = _offdiag_min(beta)
        details = {"method": "symbolic-exact", "z_independence": "pass"}
        if worst >= 0.0:
            details["monotonicity"] = "pass"
            return CheckReport(criterion="quasi_monotone",
                               samples_tried=cfg.budget,
                               verdict="no-violation-found",
                               tolerance=cfg.tolerance, details=details)
        k, j = pos
        dy = np.zeros(n)
        dy[j] = 1.0
        point = {"t": float(box["t"][0]), "k": k, "y_prime": [0.0] * n,
                 "dy": dy.tolist(), "z": np.zeros((n, d)).tolist(),
                 "z_prime": None}
        details["monotonicity"] = "violated"
        return CheckReport(criterion="quasi_monotone", samples_tried=0,
                           verdict="violated", counterexample=point,
                           residual=quasi_monotone_residual(gen, point),
                           tolerance=cfg.tolerance, details=details)

    def sampler_z(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        y = _sample_box(rng, m, n, box["y"])
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp[np.arange(m), k, :] = z[np.arange(m), k, :]
        return {"t": t, "k": k, "y_prime": y, "z": z, "z_prime": zp}

    def residual_z(s):
        a = _eval_k(gen, s["t"], s["y_prime"], s["z"], s["k"])
        b = _eval_k(gen, s["t"], s["y_prime"], s["z_prime"], s["k"])
        return -np.abs(a - b)

    def sampler_y(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        y = _sample_box(rng, m, n, box["y"])
        dy = _sample_delta(rng, m, n, box["y"], k)
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        return {"t": t, "k": k, "y_prime": y, "dy": dy, "z": z,
                "z_prime": None}

    def residual_y(s):
        a = _eval_k(gen, s["t"], s["y_prime"] + s["dy"], s["z"], s["k"])
        b = _eval_k(gen, s["t"], s["y_prime"], s["z"], s["k"])
        return a - b

    rz = _run_falsifier("quasi_monotone", cfg, sampler_z, residual_z,
                        cfg.tolerance, stream=1)
    ry = _run_falsifier("quasi_monotone", cfg, sampler_y, residual_y,
                        cfg.tolerance, stream=2)
    details = {"z_independence": rz.verdict, "monotonicity": ry.verdict}
    first_bad = rz if rz.verdict == "violated" else (
        ry if ry.verdict == "violated" else None)
    if first_bad is None:
        return CheckReport(criterion="quasi_monotone",
                           samples_tried=cfg.budget,
                           verdict="no-violation-found",
                           tolerance=cfg.tolerance, details=details)
    ce = dict(first_bad.counterexample)
    if first_bad is ry:
        ce["z_prime"] = None
    return CheckReport(criterion="quasi_monotone",
                       samples_tried=first_bad.samples_tried,
                       verdict="violated", counterexample=ce,
                       residual=first_bad.residual, tolerance=cfg.tolerance,
                       details=details)


# ---------------------------------------------------------------------------
# positivity preservation
# ---------------------------------------------------------------------------

def positivity_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    dy = np.atleast_2d(np.asarray(point["dy"], dtype=np.float64))
    dz = np.asarray(point["dz"], dtype=np.float64).reshape(1, gen.n, gen.d)
    k = int(point["k"])
    if point["sign"] == "nonneg":
        return float(gen.evaluate(t, dy, dz)[0, k])
    return float(-gen.evaluate(t, -dy, dz)[0, k])


def check_positivity(gen, sign="nonneg", cfg=None):
    if sign not in ("nonneg", "nonpos"):
        raise ConfigError("sign must be 'nonneg' or 'nonpos'")
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d

    body = _linear_body(gen)
    if body is not None:
        beta, _, G = body
        worst, pos = _offdiag_min(beta)
        g_ok = np.all(G >= 0.0) if sign == "nonneg" else np.all(G <= 0.0)
        if worst >= 0.0 and g_ok:
            return CheckReport(criterion="positivity_" + sign,
                               samples_tried=cfg.budget,
                               verdict="no-violation-found",
                               tolerance=cfg.tolerance,
                               details={"method": "symbolic-exact"})
        if worst < 0.0:
            k, j = pos
            dy = np.zeros(n)
            dy[j] = 1.0 if sign == "nonneg" else 1.0
        else:
            k = int(np.argmin(G) if sign == "nonneg" else np.argmax(G))
            dy = np.zeros(n)
        point = {"t": float(box["t"][0]), "k": k, "dy": dy.tolist(),
                 "dz": np.zeros((n, d)).tolist(), "sign": sign}
        return CheckReport(criterion="positivity_" + sign, samples_tried=0,
                           verdict="violated", counterexample=point,
                           residual=positivity_residual(gen, point),
                           tolerance=cfg.tolerance,
                           details={"method": "symbolic-exact"})

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        dy = _sample_delta(rng, m, n, box["y"], k)
        dz = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        dz[np.arange(m), k, :] = 0.0
        return {"t": t, "k": k, "dy": dy, "dz": dz,
                "sign": np.full(m, sign, dtype=object)}

    def residual(s):
        if sign == "nonneg":
            return _eval_k(gen, s["t"], s["dy"], s["dz"], s["k"])
        return -_eval_k(gen, s["t"], -s["dy"], s["dz"], s["k"])

    return _run_falsifier("positivity_" + sign, cfg, sampler, residual,
                          cfg.tolerance)


# ---------------------------------------------------------------------------
# rectangle viability
# ---------------------------------------------------------------------------

def rectangle_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    y = np.atleast_2d(np.asarray(point["y"], dtype=np.float64))
    z = np.asarray(point["z"], dtype=np.float64).reshape(1, gen.n, gen.d)
    k = int(point["k"])
    val = gen.evaluate(t, y, z)[0, k]
    return float(val if point["side"] == "lower" else -val)


def check_rectangle_viability(gen, rect, cfg=None):
    """g_k >= 0 on the lower face, <= 0 on the upper face (z row k zero)."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d
    pre = check_quasi_monotone(gen, cfg)
    if pre.verdict != "no-violation-found":
        return CheckReport(criterion="rectangle_viability",
                           samples_tried=pre.samples_tried,
                           verdict="precondition-unmet",
                           tolerance=cfg.tolerance,
                           details={"quasi_monotone": pre.verdict})
    width = rect.C2 - rect.C1

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        u = rng.uniform(0.0, 1.0, size=(m, n)) * width
        u[np.arange(m), k] = 0.0
        side = rng.integers(0, 2, m)  # 0 lower, 1 upper
        y = np.where(side[:, None] == 0, rect.C1 + u, rect.C2 - u)
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        z[np.arange(m), k, :] = 0.0
        return {"t": t, "k": k, "y": y, "z": z,
                "side": np.where(side == 0, "lower", "upper")}

    def residual(s):
        vals = _eval_k(gen, s["t"], s["y"], s["z"], s["k"])
        return np.where(s["side"] == "lower", vals, -vals)

    return _run_falsifier("rectangle_viability", cfg, sampler, residual,
                          cfg.tolerance,
                          details={"quasi_monotone": "no-violation-found"})


# ---------------------------------------------------------------------------
# constancy at a point
# ---------------------------------------------------------------------------

def constancy_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    C = np.atleast_2d(np.asarray(point["C"], dtype=np.float64))
    z = np.zeros((1, gen.n, gen.d))
    return float(-abs(gen.evaluate(t, C, z)[0, int(point["k"])]))


def check_constancy(gen, C, cfg=None):
    """|g_k(t, C, 0)| <= tol for all components over sampled t."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d
    C = np.broadcast_to(np.asarray(C, dtype=np.float64), (n,)).copy()

    body = _linear_body(gen)
    if body is not None:
        beta, _, G = body
        drift = beta @ C + G
        k = int(np.argmax(np.abs(drift)))
        if abs(drift[k]) <= cfg.tolerance:
            return CheckReport(criterion="constancy",
                               samples_tried=cfg.budget,
                               verdict="no-violation-found",
                               tolerance=cfg.tolerance,
                               details={"method": "symbolic-exact"})
        point = {"t": float(box["t"][0]), "k": k, "C": C.tolist()}
        return CheckReport(criterion="constancy", samples_tried=0,
                           verdict="violated", counterexample=point,
                           residual=constancy_residual(gen, point),
                           tolerance=cfg.tolerance,
                           details={"method": "symbolic-exact"})

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        return {"t": t, "k": k, "C": np.broadcast_to(C, (m, n)).copy()}

    def residual(s):
        z = np.zeros((s["t"].shape[0], n, d))
        return -np.abs(_eval_k(gen, s["t"], s["C"], z, s["k"]))

    return _run_falsifier("constancy", cfg, sampler, residual, cfg.tolerance)


# ---------------------------------------------------------------------------
# homogeneity (both signs of the scale)
# ---------------------------------------------------------------------------

def homogeneity_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    y = np.atleast_2d(np.asarray(point["y"], dtype=np.float64))
    z = np.asarray(point["z"], dtype=np.float64).reshape(1, gen.n, gen.d)
    a = float(point["a"])
    k = int(point["k"])
    lhs = gen.evaluate(t, a * y, a * z)[0, k]
    rhs = a * gen.evaluate(t, y, z)[0, k]
    return float(-abs(lhs - rhs) / (1.0 + abs(a)))


def check_homogeneity(gen, cfg=None):
    """g(t, ay, az) = a g(t, y, z) over scales a of both signs."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        y = _sample_box(rng, m, n, box["y"])
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        a = rng.uniform(-3.0, 3.0, m)
        a = np.where(np.abs(a) < 1e-3, 1e-3, a)
        return {"t": t, "k": k, "y": y, "z": z, "a": a}

    def residual(s):
        a = s["a"]
        lhs = _eval_k(gen, s["t"], a[:, None] * s["y"],
                      a[:, None, None] * s["z"], s["k"])
        rhs = a * _eval_k(gen, s["t"], s["y"], s["z"], s["k"])
        return -np.abs(lhs - rhs) / (1.0 + np.abs(a))

    return _run_falsifier("homogeneity", cfg, sampler, residual,
                          cfg.tolerance)


# ---------------------------------------------------------------------------
# convexity condition
# ---------------------------------------------------------------------------

def convexity_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    y1 = np.atleast_2d(np.asarray(point["y1"], dtype=np.float64))
    y2 = np.atleast_2d(np.asarray(point["y2"], dtype=np.float64))
    z1 = np.asarray(point["z1"], dtype=np.float64).reshape(1, gen.n, gen.d)
    z2 = np.asarray(point["z2"], dtype=np.float64).reshape(1, gen.n, gen.d)
    dy = np.atleast_2d(np.asarray(point["dy"], dtype=np.float64))
    lam = float(point["lam"])
    k = int(point["k"])
    zmix = lam * z1 + (1.0 - lam) * z2
    lhs = gen.evaluate(t, lam * y1 + (1.0 - lam) * y2 - dy, zmix)[0, k]
    rhs = (lam * gen.evaluate(t, y1, z1)[0, k]
           + (1.0 - lam) * gen.evaluate(t, y2, z2)[0, k])
    return float(rhs - lhs)


def check_convexity_condition(gen, cfg=None):
    """Jointly convex and quasi-monotone combination inequality."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d

    body = _linear_body(gen)
    if body is not None:
        # affine drivers satisfy the combination inequality exactly iff the
        # off-diagonal y-coefficients are nonnegative
        beta, _, _ = body
        worst, pos = _offdiag_min(beta)
        if worst >= 0.0:
            return CheckReport(criterion="convexity_condition",
                               samples_tried=cfg.budget,
                               verdict="no-violation-found",
                               tolerance=cfg.tolerance,
                               details={"method": "symbolic-exact"})
        k, j = pos
        dy = np.zeros(n)
        dy[j] = 1.0
        point = {"t": float(box["t"][0]), "k": k,
                 "y1": [0.0] * n, "y2": [0.0] * n,
                 "z1": np.zeros((n, d)).tolist(),
                 "z2": np.zeros((n, d)).tolist(),
                 "dy": dy.tolist(), "lam": 0.5}
        return CheckReport(criterion="convexity_condition", samples_tried=0,
                           verdict="violated", counterexample=point,
                           residual=convexity_residual(gen, point),
                           tolerance=cfg.tolerance,
                           details={"method": "symbolic-exact"})

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        lam = rng.uniform(0.0, 1.0, m)
        y1 = _sample_box(rng, m, n, box["y"])
        y2 = _sample_box(rng, m, n, box["y"])
        z1 = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        z2 = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        dy = _sample_delta(rng, m, n, box["y"], k)
        return {"t": t, "k": k, "lam": lam, "y1": y1, "y2": y2,
                "z1": z1, "z2": z2, "dy": dy}

    def residual(s):
        lam = s["lam"]
        zmix = lam[:, None, None] * s["z1"] + (1 - lam)[:, None, None] * s["z2"]
        ymix = lam[:, None] * s["y1"] + (1 - lam)[:, None] * s["y2"] - s["dy"]
        lhs = _eval_k(gen, s["t"], ymix, zmix, s["k"])
        rhs = (lam * _eval_k(gen, s["t"], s["y1"], s["z1"], s["k"])
               + (1 - lam) * _eval_k(gen, s["t"], s["y2"], s["z2"], s["k"]))
        return rhs - lhs

    def sampler_z(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        y = _sample_box(rng, m, n, box["y"])
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp[np.arange(m), k, :] = z[np.arange(m), k, :]
        return {"t": t, "k": k, "y_prime": y, "z": z, "z_prime": zp}

    def residual_z(s):
        a = _eval_k(gen, s["t"], s["y_prime"], s["z"], s["k"])
        b = _eval_k(gen, s["t"], s["y_prime"], s["z_prime"], s["k"])
        return -np.abs(a - b)

    rz = _run_falsifier("convexity_condition", cfg, sampler_z, residual_z,
                        cfg.tolerance, stream=1)
    rc = _run_falsifier("convexity_condition", cfg, sampler, residual,
                        cfg.tolerance, stream=0)
    details = {"z_independence": rz.verdict, "combination": rc.verdict}
    bad = rc if rc.verdict == "violated" else (
        rz if rz.verdict == "violated" else None)
    if bad is None:
        return CheckReport(criterion="convexity_condition",
                           samples_tried=cfg.budget,
                           verdict="no-violation-found",
                           tolerance=cfg.tolerance, details=details)
    return CheckReport(criterion="convexity_condition",
                       samples_tried=bad.samples_tried, verdict="violated",
                       counterexample=bad.counterexample,
                       residual=bad.residual, tolerance=cfg.tolerance,
                       details=details)


# ---------------------------------------------------------------------------
# Jensen conditions
# ---------------------------------------------------------------------------

def check_jensen_conditions(gen, cfg=None):
    """y-freeness, positive homogeneity in z, superhomogeneity for lam < 0."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d

    def sampler_y(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        y1 = _sample_box(rng, m, n, box["y"])
        y2 = _sample_box(rng, m, n, box["y"])
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        return {"t": t, "k": k, "y1": y1, "y2": y2, "z": z}

    def residual_y(s):
        a = _eval_k(gen, s["t"], s["y1"], s["z"], s["k"])
        b = _eval_k(gen, s["t"], s["y2"], s["z"], s["k"])
        return -np.abs(a - b)

    def sampler_pos(rng, m):
        s = sampler_y(rng, m)
        s["lam"] = rng.uniform(0.0, 3.0, m)
        return s

    def residual_pos(s):
        lam = s["lam"]
        a = _eval_k(gen, s["t"], s["y1"], lam[:, None, None] * s["z"], s["k"])
        b = lam * _eval_k(gen, s["t"], s["y1"], s["z"], s["k"])
        return -np.abs(a - b) / (1.0 + lam)

    def sampler_neg(rng, m):
        s = sampler_y(rng, m)
        s["lam"] = rng.uniform(-3.0, 0.0, m)
        return s

    def residual_neg(s):
        lam = s["lam"]
        a = _eval_k(gen, s["t"], s["y1"], lam[:, None, None] * s["z"], s["k"])
        b = lam * _eval_k(gen, s["t"], s["y1"], s["z"], s["k"])
        return a - b

    ry = _run_falsifier("jensen_conditions", cfg, sampler_y, residual_y,
                        cfg.tolerance, stream=0)
    rp = _run_falsifier("jensen_conditions", cfg, sampler_pos, residual_pos,
                        cfg.tolerance, stream=1)
    rn = _run_falsifier("jensen_conditions", cfg, sampler_neg, residual_neg,
                        cfg.tolerance, stream=2)
    details = {"y_free": ry.verdict, "pos_homogeneous_z": rp.verdict,
               "superhomogeneous_neg": rn.verdict}
    for sub, label in ((ry, "y_free"), (rp, "pos_homogeneous_z"),
                       (rn, "superhomogeneous_neg")):
        if sub.verdict == "violated":
            ce = dict(sub.counterexample)
            ce["sub_check"] = label
            return CheckReport(criterion="jensen_conditions",
                               samples_tried=sub.samples_tried,
                               verdict="violated", counterexample=ce,
                               residual=sub.residual,
                               tolerance=cfg.tolerance, details=details)
    return CheckReport(criterion="jensen_conditions",
                       samples_tried=cfg.budget,
                       verdict="no-violation-found",
                       tolerance=cfg.tolerance, details=details)


def jensen_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    y1 = np.atleast_2d(np.asarray(point["y1"], dtype=np.float64))
    z = np.asarray(point["z"], dtype=np.float64).reshape(1, gen.n, gen.d)
    k = int(point["k"])
    sub = point.get("sub_check", "y_free")
    if sub == "y_free":
        y2 = np.atleast_2d(np.asarray(point["y2"], dtype=np.float64))
        a = gen.evaluate(t, y1, z)[0, k]
        b = gen.evaluate(t, y2, z)[0, k]
        return float(-abs(a - b))
    lam = float(point["lam"])
    a = gen.evaluate(t, y1, lam * z)[0, k]
    b = lam * gen.evaluate(t, y1, z)[0, k]
    if sub == "pos_homogeneous_z":
        return float(-abs(a - b) / (1.0 + lam))
    return float(a - b)


# ---------------------------------------------------------------------------
# cash additivity
# ---------------------------------------------------------------------------

def cash_additivity_residual(gen, point):
    return jensen_residual(gen, dict(point, sub_check="y_free"))


def check_cash_additivity(gen, cfg=None):
    """Cash additive iff the driver does not depend on y."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d

    body = _linear_body(gen)
    if body is not None:
        beta, _, _ = body
        flat = np.unravel_index(np.argmax(np.abs(beta)), beta.shape)
        if abs(beta[flat]) <= cfg.tolerance:
            return CheckReport(criterion="cash_additivity",
                               samples_tried=cfg.budget,
                               verdict="no-violation-found",
                               tolerance=cfg.tolerance,
                               details={"method": "symbolic-exact"})
        k, j = int(flat[0]), int(flat[1])
        y1 = np.zeros(n)
        y2 = np.zeros(n)
        y2[j] = 1.0
        point = {"t": float(box["t"][0]), "k": k, "y1": y1.tolist(),
                 "y2": y2.tolist(), "z": np.zeros((n, d)).tolist()}
        return CheckReport(criterion="cash_additivity", samples_tried=0,
                           verdict="violated", counterexample=point,
                           residual=cash_additivity_residual(gen, point),
                           tolerance=cfg.tolerance,
                           details={"method": "symbolic-exact"})

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        y1 = _sample_box(rng, m, n, box["y"])
        y2 = _sample_box(rng, m, n, box["y"])
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        return {"t": t, "k": k, "y1": y1, "y2": y2, "z": z}

    def residual(s):
        a = _eval_k(gen, s["t"], s["y1"], s["z"], s["k"])
        b = _eval_k(gen, s["t"], s["y2"], s["z"], s["k"])
        return -np.abs(a - b)

    return _run_falsifier("cash_additivity", cfg, sampler, residual,
                          cfg.tolerance)


# ---------------------------------------------------------------------------
# ask-bid condition
# ---------------------------------------------------------------------------

def askbid_residual(gen, point):
    t = np.atleast_1d(np.asarray(point["t"], dtype=np.float64))
    yp = np.atleast_2d(np.asarray(point["y_prime"], dtype=np.float64))
    dy = np.atleast_2d(np.asarray(point["dy"], dtype=np.float64))
    z = np.asarray(point["z"], dtype=np.float64).reshape(1, gen.n, gen.d)
    zp = np.asarray(point["z_prime"], dtype=np.float64).reshape(1, gen.n,
                                                                gen.d)
    k = int(point["k"])
    lhs = gen.evaluate(t, dy + yp, z)[0, k]
    rhs = -gen.evaluate(t, -yp, -zp)[0, k]
    return float(lhs - rhs)


def check_askbid_condition(gen, cfg=None):
    """g_k(t, dy + y', z) >= -g_k(t, -y', -z') with z rows k shared."""
    cfg = cfg or SamplerConfig()
    box = cfg.resolve_box(gen)
    n, d = gen.n, gen.d

    def sampler(rng, m):
        t = rng.uniform(box["t"][0], box["t"][1], m)
        k = rng.integers(0, n, m)
        yp = _sample_box(rng, m, n, box["y"])
        dy = _sample_delta(rng, m, n, box["y"], k)
        z = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp = _sample_box(rng, m, n * d, box["z"]).reshape(m, n, d)
        zp[np.arange(m), k, :] = z[np.arange(m), k, :]
        return {"t": t, "k": k, "y_prime": yp, "dy": dy, "z": z,
                "z_prime": zp}

    def residual(s):
        lhs = _eval_k(gen, s["t"], s["dy"] + s["y_prime"], s["z"], s["k"])
        rhs = -_eval_k(gen, s["t"], -s["y_prime"], -s["z_prime"], s["k"])
        return lhs - rhs

    return _run_falsifier("askbid_condition", cfg, sampler, residual,
                          cfg.tolerance)


# ---------------------------------------------------------------------------
# counterexample re-evaluation
# ---------------------------------------------------------------------------

_RESIDUAL_FNS = {
    "quasi_monotone": quasi_monotone_residual,
    "positivity_nonneg": positivity_residual,
    "positivity_nonpos": positivity_residual,
    "rectangle_viability": rectangle_residual,
    "constancy": constancy_residual,
    "homogeneity": homogeneity_residual,
    "convexity_condition": convexity_residual,
    "jensen_conditions": jensen_residual,
    "cash_additivity": cash_additivity_residual,
    "askbid_condition": askbid_residual,
}


def reevaluate_counterexample(report, gen, g2=None):
    """Recompute the violated inequality's residual at the stored point."""
    if report.counterexample is None:
        raise ConfigError("report carries no counterexample")
    if report.criterion == "comparison_pair":
        if g2 is None:
            raise ConfigError("comparison pair re-evaluation needs g2")
        return comparison_pair_residual(gen, g2, report.counterexample)
    fn = _RESIDUAL_FNS.get(report.criterion)
    if fn is None:
        raise ConfigError("unknown criterion %r" % report.criterion)
    return fn(gen, report.counterexample)
