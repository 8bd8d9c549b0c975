import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbsde import core
from gbsde.errors import ConfigError, EvaluationError


# ---------------------------------------------------------------------------
# time grid
# ---------------------------------------------------------------------------

def test_grid_basics():
    g = core.make_time_grid(2.0, 8)
    assert g.dt == 0.25
    t = g.times()
    assert t[0] == 0.0 and t[-1] == 2.0
    assert len(t) == 9


@pytest.mark.parametrize("T,N", [(0.0, 5), (-1.0, 5), (1.0, 0), (1.0, 2.5)])
def test_grid_rejects_bad_args(T, N):
    with pytest.raises(ConfigError):
        core.make_time_grid(T, N)


# ---------------------------------------------------------------------------
# inverse normal CDF
# ---------------------------------------------------------------------------

def test_inverse_cdf_against_scipy_free_reference():
    # spot values from Abramowitz & Stegun style tables
    assert abs(core.norm_inverse_cdf(np.array(0.5))) < 1e-12
    assert core.norm_inverse_cdf(np.array(0.975)) == pytest.approx(1.959964,
                                                                   abs=2e-6)
    assert core.norm_inverse_cdf(np.array(0.00135)) == pytest.approx(-3.0,
                                                                     abs=1e-3)


def test_inverse_cdf_symmetry_and_monotone():
    p = np.linspace(1e-6, 1 - 1e-6, 2001)
    x = core.norm_inverse_cdf(p)
    assert np.all(np.diff(x) > 0)
    assert np.allclose(x, -x[::-1], atol=1e-9)


def test_inverse_cdf_roundtrip_via_erf():
    p = np.linspace(0.001, 0.999, 999)
    x = core.norm_inverse_cdf(p)
    p_back = 0.5 * (1.0 + np.array([math.erf(v / math.sqrt(2)) for v in x]))
    # Acklam's approximation is good to ~1.15e-9 relative
    assert np.max(np.abs(p_back - p)) < 1e-8


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

def test_ensemble_shapes_and_levels(grid50):
    ens = core.simulate_ensemble(grid50, 2, 10, 7)
    assert ens.increments.shape == (10, 50, 2)
    assert ens.levels.shape == (10, 51, 2)
    assert np.all(ens.levels[:, 0, :] == 0.0)
    assert np.allclose(ens.levels[:, -1, :], ens.increments.sum(axis=1))


def test_paths_are_order_independent(grid50):
    """Path p must not depend on how many paths were generated."""
    big = core.simulate_ensemble(grid50, 1, 64, 7)
    small = core.simulate_ensemble(grid50, 1, 16, 7)
    assert np.array_equal(big.increments[:16], small.increments)


def test_antithetic_pairs_negate(grid50):
    ens = core.simulate_ensemble(grid50, 1, 100, 7, antithetic=True)
    assert np.array_equal(ens.increments[1::2], -ens.increments[0::2])
    plain = core.simulate_ensemble(grid50, 1, 100, 7, antithetic=False)
    # streams are keyed by path position, so even antithetic paths coincide
    # with the even plain paths
    assert np.array_equal(ens.increments[0::2], plain.increments[0::2])


def test_ensemble_reproducible_and_seed_sensitive(grid50):
    a = core.simulate_ensemble(grid50, 1, 20, 7)
    b = core.simulate_ensemble(grid50, 1, 20, 7)
    c = core.simulate_ensemble(grid50, 1, 20, 8)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)


def test_ensemble_moments(grid50):
    ens = core.simulate_ensemble(grid50, 1, 50_000, 3)
    bT = ens.levels[:, -1, 0]
    assert abs(bT.mean()) < 0.02
    assert bT.std() == pytest.approx(1.0, abs=0.02)


def test_ensemble_rejects_bad_args(grid50):
    with pytest.raises(ConfigError):
        core.simulate_ensemble(grid50, 1, 1, 0)
    with pytest.raises(ConfigError):
        core.simulate_ensemble(grid50, 1, 11, 0, antithetic=True)
    with pytest.raises(ConfigError):
        core.simulate_ensemble(grid50, 0, 10, 0)
    with pytest.raises(ConfigError):
        core.simulate_ensemble(grid50, 1, 10, -1)


def test_restrict_ensemble(grid50):
    ens = core.simulate_ensemble(grid50, 1, 10, 7)
    sub = core.restrict_ensemble(ens, 20)
    assert sub.grid.N == 20
    assert sub.grid.T == pytest.approx(0.4)
    assert np.array_equal(sub.levels, ens.levels[:, :21, :])
    with pytest.raises(ConfigError):
        core.restrict_ensemble(ens, 0)


def test_shift_ensemble_mean(grid50):
    ens = core.simulate_ensemble(grid50, 1, 20_000, 7, antithetic=True)
    shifted = core.shift_ensemble(ens, 0.3)
    # antithetic symmetry makes the unshifted terminal mean exactly zero
    assert ens.levels[:, -1, 0].mean() == pytest.approx(0.0, abs=1e-14)
    assert shifted.levels[:, -1, 0].mean() == pytest.approx(0.3, abs=1e-12)
    assert shifted.antithetic is False


def test_ensemble_csv(tmp_path, grid50):
    ens = core.simulate_ensemble(core.make_time_grid(1.0, 2), 1, 4, 7)
    path = tmp_path / "paths.csv"
    core.ensemble_to_csv(ens, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 2 + 4  # header, time row, one row per path
    assert lines[0].startswith("path,")


# ---------------------------------------------------------------------------
# polynomial basis
# ---------------------------------------------------------------------------

def test_basis_exponents_count():
    # C(d + degree, degree) monomials of total degree <= degree
    assert len(core.basis_exponents(1, 3)) == 4
    assert len(core.basis_exponents(2, 3)) == 10
    assert core.basis_exponents(2, 1) == [(0, 0), (1, 0), (0, 1)]


def test_poly_basis_values():
    x = np.array([[2.0], [3.0]])
    phi = core.poly_basis(x, 3)
    assert np.allclose(phi, [[1, 2, 4, 8], [1, 3, 9, 27]])


def test_poly_basis_zero_row_is_unit_vector():
    phi = core.poly_basis(np.zeros((1, 2)), 3)
    assert phi[0, 0] == 1.0
    assert np.all(phi[0, 1:] == 0.0)


# ---------------------------------------------------------------------------
# claims
# ---------------------------------------------------------------------------

def _bt(vals):
    return np.asarray(vals, dtype=np.float64).reshape(-1, 1)


def test_claim_arithmetic():
    ident = core.identity_claim()
    bT = _bt([-1.0, 0.5, 2.0])
    assert np.allclose(core.evaluate_claim_on_state(ident, bT).ravel(),
                       [-1, 0.5, 2])
    call = core.call_claim(ident, 0.5)
    assert np.allclose(core.evaluate_claim_on_state(call, bT).ravel(),
                       [0, 0, 1.5])
    combo = core.sum_claim([core.scale_claim(ident, 2.0),
                            core.negate_claim(core.abs_claim(ident))])
    assert np.allclose(core.evaluate_claim_on_state(combo, bT).ravel(),
                       [-3, 0.5, 2])
    shifted = core.shift_claim(ident, -1.0)
    assert np.allclose(core.evaluate_claim_on_state(shifted, bT).ravel(),
                       [-2, -0.5, 1])


def test_square_clipped_claim_is_convex_and_continuous():
    claim = core.square_clipped_claim(core.identity_claim(), 2.0)
    x = np.linspace(-6, 6, 601)
    v = core.evaluate_claim_on_state(claim, _bt(x)).ravel()
    inside = np.abs(x) <= 2.0
    assert np.allclose(v[inside], x[inside] ** 2)
    # midpoint convexity on the full range
    mids = 0.5 * (v[:-1:2] + v[2::2])
    assert np.all(v[1::2] <= mids + 1e-12)
    with pytest.raises(ConfigError):
        core.square_clipped_claim(core.identity_claim(), 0.0)


def test_put_on_netvalue_claim():
    claim = core.put_on_netvalue_claim(core.identity_claim(), 1.0, 0.05)
    bT = _bt([-3.0, 0.0, 1.0])
    # max[-(x + 1.05), 0]
    assert np.allclose(core.evaluate_claim_on_state(claim, bT).ravel(),
                       [1.95, 0, 0])


def test_indicator_claim_needs_levels(grid50):
    claim = core.indicator_pos_claim(core.identity_claim(), 10)
    with pytest.raises(ConfigError):
        core.evaluate_claim_on_state(claim, _bt([1.0]))
    ens = core.simulate_ensemble(grid50, 1, 10, 7)
    vals = core.evaluate_terminal(claim, ens)
    mask = ens.levels[:, 10, 0] > 0
    assert np.allclose(vals.ravel(), ens.levels[:, -1, 0] * mask)


def test_stack_claims(grid50):
    ens = core.simulate_ensemble(grid50, 1, 16, 7)
    stacked = core.stack_claims([core.identity_claim(),
                                 core.constant_claim([2.0, 3.0])])
    vals = core.evaluate_terminal(stacked, ens)
    assert vals.shape == (16, 3)
    assert np.allclose(vals[:, 0], ens.levels[:, -1, 0])
    assert np.allclose(vals[:, 1:], [2.0, 3.0])


def test_claim_markov_flag(grid50):
    assert core.claim_is_markovian(core.abs_claim(core.identity_claim()))
    assert not core.claim_is_markovian(
        core.sum_claim([core.identity_claim(),
                        core.indicator_pos_claim(core.identity_claim(), 3)]))


def test_claim_serialization_roundtrip(grid50):
    ens = core.simulate_ensemble(grid50, 1, 32, 7)
    claim = core.sum_claim([
        core.call_claim(core.linear_claim([[2.0]], [0.5]), 1.0),
        core.scale_claim(core.abs_claim(core.identity_claim()), -0.5),
    ])
    doc = core.claim_to_dict(claim)
    back = core.claim_from_dict(doc)
    assert np.array_equal(core.evaluate_terminal(claim, ens),
                          core.evaluate_terminal(back, ens))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def test_bs_linear_generator_sign_convention():
    gen = core.bs_linear_generator(0.05, 0.2)
    y = np.array([[1.0]])
    z = np.array([[[2.0]]])
    assert gen.evaluate(0.0, y, z)[0, 0] == pytest.approx(-(0.05 + 0.4))


def test_abs_z_generator_norm():
    gen = core.abs_z_generator(0.1, n=1, d=2)
    z = np.array([[[3.0, 4.0]]])
    assert gen.evaluate(0.0, np.zeros((1, 1)), z)[0, 0] == pytest.approx(0.5)


def test_linear_generator_shapes():
    gen = core.linear_generator([[0.0, 1.0], [2.0, 0.0]], [0.5, -0.5],
                                [1.0, -1.0])
    y = np.array([[1.0, 2.0]])
    z = np.array([[[4.0], [6.0]]])
    out = gen.evaluate(0.0, y, z)
    assert np.allclose(out, [[2 + 2 + 1, 2 - 3 - 1]])


def test_cross_holding_default_weights():
    gen = core.cross_holding_generator(0.1, 0.0)
    y = np.array([[1.0, 1.0]])
    z = np.zeros((1, 2, 1))
    out = gen.evaluate(0.0, y, z)
    assert np.allclose(out, [[-0.11, -0.09]])


def test_gamma_scaled_generator():
    inner = core.bs_linear_generator(0.05, 0.2)
    gen = core.gamma_scaled_generator(inner, 2.0)
    y = np.array([[3.0]])
    z = np.array([[[1.0]]])
    # linear drivers are invariant under tolerance scaling
    assert np.allclose(gen.evaluate(0.0, y, z), inner.evaluate(0.0, y, z))
    with pytest.raises(ConfigError):
        core.gamma_scaled_generator(inner, 0.0)


def test_stacked_fast_path_matches_loop():
    gen = core.abs_z_generator(0.3)
    stacked = core.stack_generators([gen] * 5)
    mixed = core.stack_generators([gen, core.abs_z_generator(0.3), gen,
                                   gen, gen])
    rng = np.random.default_rng(1)
    y = rng.normal(size=(40, 5))
    z = rng.normal(size=(40, 5, 1))
    assert np.allclose(stacked.evaluate(0.1, y, z),
                       mixed.evaluate(0.1, y, z), atol=1e-15)


def test_block_linear_matches_stacked_linear():
    rng = np.random.default_rng(5)
    L, nb, d = 6, 2, 1
    beta = rng.normal(size=(L, nb, nb))
    gamma = rng.normal(size=(L, nb, d))
    G = rng.normal(size=(L, nb))
    block = core.block_linear_generator(beta, gamma, G)
    stacked = core.stack_generators(
        [core.linear_generator(beta[j], gamma[j], G[j], d=d)
         for j in range(L)])
    y = rng.normal(size=(30, L * nb))
    z = rng.normal(size=(30, L * nb, d))
    assert np.allclose(block.evaluate(0.4, y, z),
                       stacked.evaluate(0.4, y, z), atol=1e-13)


def test_generator_reports_nonfinite_component():
    gen = core.linear_generator(np.array([[np.inf]]), 0.0)
    with pytest.raises(EvaluationError) as err:
        gen.evaluate(0.0, np.ones((1, 1)), np.zeros((1, 1, 1)))
    assert err.value.component == 0


def test_generator_serialization_roundtrip():
    gens = [
        core.bs_linear_generator(0.05, 0.2),
        core.cross_holding_generator(0.1, 0.0),
        core.gamma_scaled_generator(core.abs_z_generator(0.1), 3.0),
        core.stack_generators([core.zero_generator(),
                               core.abs_z_generator(0.2)]),
    ]
    rng = np.random.default_rng(2)
    for gen in gens:
        back = core.generator_from_dict(core.generator_to_dict(gen))
        y = rng.normal(size=(12, gen.n))
        z = rng.normal(size=(12, gen.n, gen.d))
        assert np.array_equal(gen.evaluate(0.3, y, z),
                              back.evaluate(0.3, y, z))


# a couple of cheap property tests on the claim registry

@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_call_put_style_identities(x, strike):
    ident = core.identity_claim()
    call = core.evaluate_claim_on_state(core.call_claim(ident, strike),
                                        _bt([x]))[0, 0]
    assert call >= 0.0
    assert call >= x - strike - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3))
def test_rectangle_membership(x):
    rect = core.make_rectangle([-1.0], [1.0])
    assert (rect.C1[0] <= x <= rect.C2[0]) == (abs(x) <= 1.0)
