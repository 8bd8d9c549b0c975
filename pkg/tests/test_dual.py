import math

import numpy as np
import pytest

from gbsde import core, dual
from gbsde.errors import ConfigError


# ---------------------------------------------------------------------------
# conjugate tables
# ---------------------------------------------------------------------------

def test_fenchel_abs_z_closed_form():
    # sup_z c*z - mu|z| is 0 for |c| <= mu and +inf outside; on the largest
    # box [-20, 20] the truncated sup is 20*(|c| - mu)
    gen = core.abs_z_generator(0.1)
    c = np.linspace(-0.3, 0.3, 7)
    table = dual.fenchel_transform(gen, 0, [[0.0]], c.reshape(-1, 1))
    assert table.values.shape == (1, 7)
    assert np.allclose(table.values[0], [4.0, 2.0, 0.0, 0.0, 0.0, 2.0, 4.0],
                       atol=1e-9)
    assert table.divergent[0].tolist() == [True, True, False, False, False,
                                           True, True]


def test_fenchel_divergence_in_b_for_y_dependence():
    # a y-linear driver has an effective domain that pins b exactly
    gen = core.bs_linear_generator(0.05, 0.0)
    b = np.array([[-0.05], [0.0]])
    table = dual.fenchel_transform(gen, 0, b, [[0.0]])
    assert not table.divergent[0, 0]   # b = -r is the exact slope
    assert table.divergent[1, 0]


def test_fenchel_reconstruct_recovers_driver():
    gen = core.abs_z_generator(0.1)
    c = np.linspace(-0.1, 0.1, 11)
    table = dual.fenchel_transform(gen, 0, [[0.0]], c.reshape(-1, 1))
    for z in (-2.0, -0.5, 0.0, 1.5):
        rec = dual.fenchel_reconstruct(table, [0.0], [z])
        assert rec == pytest.approx(0.1 * abs(z), abs=1e-9)


def test_fenchel_reconstruct_needs_effective_domain():
    gen = core.abs_z_generator(0.1)
    table = dual.fenchel_transform(gen, 0, [[0.0]], [[5.0]])
    assert table.divergent.all()
    with pytest.raises(ConfigError):
        dual.fenchel_reconstruct(table, [0.0], [1.0])


def test_fenchel_csv(tmp_path):
    gen = core.abs_z_generator(0.1)
    table = dual.fenchel_transform(gen, 0, [[0.0]],
                                   np.linspace(-0.2, 0.2, 5).reshape(-1, 1))
    path = tmp_path / "conjugate.csv"
    dual.fenchel_to_csv(table, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "b_0,c_0,G,divergent"
    assert len(rows) == 6


# ---------------------------------------------------------------------------
# penalty term
# ---------------------------------------------------------------------------

def test_penalty_closed_forms(grid50):
    # beta = 0: alpha = G*T
    flat = core.linear_generator(np.zeros((1, 1)), 0.0, [0.3])
    rep = dual.penalty_term(flat, grid50)
    assert rep.alpha[0] == pytest.approx(0.3, rel=1e-12)
    # scalar beta = r: alpha = G*(e^{rT} - 1)/r
    tilted = core.linear_generator([[0.2]], 0.0, [0.3])
    rep = dual.penalty_term(tilted, grid50)
    assert rep.alpha[0] == pytest.approx(0.3 * (math.exp(0.2) - 1.0) / 0.2,
                                         rel=1e-12)
    assert rep.mc[0] == rep.exact[0]
    assert rep.se[0] == 0.0
    assert rep.diagnostics["weight_variance"] == 0.0


def test_penalty_rejects_nonlinear(grid50):
    with pytest.raises(ConfigError):
        dual.penalty_term(core.abs_z_generator(0.1), grid50)


# ---------------------------------------------------------------------------
# dual lower bounds
# ---------------------------------------------------------------------------

def _member(gamma):
    return {"beta": [[0.0]], "gamma": [[gamma]], "G": [0.0]}


def test_dual_lower_bound_weak_duality(grid50, ens_small):
    gen = core.abs_z_generator(0.1)
    rep = dual.dual_lower_bound(gen, core.identity_claim(),
                                [_member(-0.1), _member(-0.05),
                                 _member(0.05), _member(0.1)], grid50,
                                ens_small)
    assert not rep.refused
    for bound, se in zip(rep.member_bounds, rep.member_se):
        assert bound[0] <= rep.rho_value[0] + 3.0 * math.sqrt(
            se[0] ** 2 + rep.rho_se[0] ** 2) + 1e-9
    assert np.all(rep.gap >= -1e-9)
    # the gamma = -mu member is the optimizer: the bound is tight up to the
    # fitted martingale part occasionally crossing zero at this path count
    assert rep.best_bound[0] == pytest.approx(rep.rho_value[0], abs=1e-3)


def test_dual_lower_bound_refuses_non_minorant(grid50, ens_small):
    gen = core.abs_z_generator(0.1)
    rep = dual.dual_lower_bound(gen, core.identity_claim(),
                                [_member(0.05), _member(0.2)], grid50,
                                ens_small)
    assert len(rep.refused) == 1
    assert rep.refused[0][0] == 1
    assert "minorant check violated" in rep.refused[0][1]
    assert len(rep.member_bounds) == 1


def test_dual_lower_bound_self_duality(grid50, ens_small):
    # a linear driver is its own (only) minorant, so the gap is zero
    gen = core.linear_generator([[0.0]], [[0.1]], [0.0])
    rep = dual.dual_lower_bound(gen, core.identity_claim(), [_member(0.1)],
                                grid50, ens_small)
    assert rep.gap[0] == pytest.approx(0.0, abs=1e-12)
    assert "closed_form" in rep.members[0]


def test_dual_lower_bound_no_members_raises(grid50, ens_small):
    gen = core.abs_z_generator(0.1)
    with pytest.raises(ConfigError):
        dual.dual_lower_bound(gen, core.identity_claim(), [_member(0.5)],
                              grid50, ens_small)


def test_dual_lower_bound_closed_form_crosscheck(grid50, ens_small):
    gen = core.abs_z_generator(0.1)
    rep = dual.dual_lower_bound(gen, core.identity_claim(), [_member(0.1)],
                                grid50, ens_small)
    cf = rep.members[0]["closed_form"][0]
    assert cf == pytest.approx(rep.member_bounds[0][0], abs=5e-3)
