import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uabs_fleet.radio import (BeamGeometry, LinkBudgetConfig, beam_gain, compute_coverage, los_probability,
                              path_loss, sinr)
from uabs_fleet.resources import ResourceGrid
from uabs_fleet.scenario import build_area

CFG = LinkBudgetConfig()
GEOM = BeamGeometry()


@pytest.fixture(scope="module")
def area():
    return build_area(0, 1500, 700, "grid", 10, (750, 350), {"nx": 4, "ny": 3})


def test_beam_gain_table_value():
    assert beam_gain(100, 9) == pytest.approx(23.03, abs=0.05)


def test_beam_gain_hemisphere_single_beam():
    assert beam_gain(180, 1) == pytest.approx(10 * math.log10(41000 / 360**2), abs=1e-9)
    assert beam_gain(180, 1) == pytest.approx(-5.0, abs=0.01)


def test_halving_beams_costs_six_db():
    assert beam_gain(100, 9) - beam_gain(100, 18) == pytest.approx(-20 * math.log10(2), abs=1e-9)


@pytest.mark.parametrize("fov", [30, 60, 100, 150, 179])
@pytest.mark.parametrize("n", [1, 2, 9, 16])
def test_beam_gain_matches_numerical_solid_angle(fov, n):
    # solid angle of a cone by integrating sin(theta) over [0, fov/2]
    theta = np.linspace(0, math.radians(fov) / 2, 20001)
    solid = 2 * math.pi * np.trapezoid(np.sin(theta), theta)
    beam_deg = (solid / n) * 360 / (2 * math.pi)
    assert beam_gain(fov, n) == pytest.approx(10 * math.log10(41000 / beam_deg**2), abs=1e-6)


@pytest.mark.parametrize("fov, n", [(0, 9), (-10, 9), (181, 9), (100, 0)])
def test_beam_gain_rejects_bad_inputs(fov, n):
    with pytest.raises(ValueError):
        beam_gain(fov, n)


def test_los_path_loss_at_100m():
    assert path_loss(100.0, True, CFG) == pytest.approx(101.54, abs=0.01)


def test_nlos_exceeds_los():
    assert path_loss(100.0, False, CFG) > path_loss(100.0, True, CFG)


def test_path_loss_at_one_meter():
    assert path_loss(1.0, True, CFG) == pytest.approx(28.0 + 20 * math.log10(30))


def test_zero_distance_rejected():
    with pytest.raises(ValueError, match="degenerate geometry"):
        path_loss(0.0, True, CFG)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 5000.0), st.floats(1.001, 2.0), st.booleans())
def test_path_loss_increasing(d, factor, los):
    assert path_loss(d * factor, los, CFG) > path_loss(d, los, CFG)


def test_sinr_examples():
    assert sinr(14 + 23 - 100, [], -106) == pytest.approx(43.0, abs=1e-9)
    assert sinr(-60, [-60], -200) == pytest.approx(0.0, abs=1e-6)
    assert sinr(-70, (), -106) == sinr(-70, [], -106)


def test_los_probability_shape():
    d = np.array([1.0, 18.0, 100.0, 1000.0])
    p = los_probability(d, CFG)
    assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(1.0)
    assert (np.diff(p) <= 0).all()
    assert (los_probability(d, CFG, aerial=True) >= 0.9).all()


def test_footprint_geometry():
    assert GEOM.footprint_side == pytest.approx(2 * 100 * math.tan(math.radians(50)))
    assert GEOM.beam_radius == pytest.approx(GEOM.footprint_side / 6)
    c = GEOM.beam_centers
    assert c.shape == (9, 2)
    d = np.linalg.norm(c[:, None] - c[None], axis=-1) + np.eye(9) * 1e9
    assert d.min() >= 2 * GEOM.beam_radius - 1e-9  # non-overlapping circles
    with pytest.raises(ValueError):
        BeamGeometry(n_beam=4)


def test_user_under_uabs_is_in_center_beam(area):
    cov = compute_coverage([[400, 300]], [[400, 300]], area, CFG, GEOM, seed=0)
    assert cov.k[0, 0].sum() == 1 and cov.k[0, 0, 4]
    assert cov.c_gu[0, 0]


def test_far_user_is_in_no_beam(area):
    cov = compute_coverage([[100, 100]], [[100 + GEOM.footprint_side + 1, 100]], area, CFG, GEOM, seed=0)
    assert not cov.k.any() and not cov.c_gu.any()


def test_double_coverage_sets_interference_flags(area):
    # user next to the MBS and under the UABS
    cov = compute_coverage([[760, 350]], [[760, 350]], area, CFG, GEOM, seed=0)
    assert cov.c_gm[0, 0] and cov.c_gu[0, 0]
    assert cov.I_gmu[0, 0, 0] and cov.I_gum[0, 0, 0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_coverage_invariants(seed):
    rng = np.random.default_rng(seed)
    area = build_area(0, 1500, 700, "grid", 10, (750, 350), {"nx": 4, "ny": 3})
    users = rng.uniform([0, 0], [1500, 700], (15, 2))
    uabs = rng.uniform([0, 0], [1500, 700], (3, 2))
    cov = compute_coverage(uabs, users, area, CFG, GEOM, seed, ResourceGrid())
    assert (cov.k.sum(-1) <= 1).all()
    assert np.array_equal(cov.c_gu, cov.k.any(-1))
    assert np.array_equal(cov.I_gmu, cov.c_gm[:, :, None] & cov.c_gu[:, None, :])
    for arr in (cov.r_gm, cov.r_gu, cov.r_um, cov.rI_gmu, cov.rI_gum):
        assert (arr >= 0).all()
    assert (cov.rI_gmu <= cov.r_gm[:, :, None] + 1e-9).all()
    assert (cov.rI_gum <= cov.r_gu[:, :, None] + 1e-9).all()
    assert ((cov.r_gm > 0) == cov.c_gm).all()


def test_coverage_is_deterministic(area):
    rng = np.random.default_rng(1)
    users, uabs = rng.uniform(0, 700, (8, 2)), rng.uniform(0, 700, (3, 2))
    a = compute_coverage(uabs, users, area, CFG, GEOM, 42)
    b = compute_coverage(uabs, users, area, CFG, GEOM, 42)
    for name in ("c_gm", "c_gu", "k", "r_gm", "r_gu", "r_um", "rI_gmu", "rI_gum"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_config_validation():
    with pytest.raises(ValueError):
        LinkBudgetConfig(sigma_los=-1)
    with pytest.raises(ValueError):
        LinkBudgetConfig(f_c=0)


def test_rate_per_ru_dimensioning():
    grid = ResourceGrid(ru_budget=None)
    sinr_lin = 1.0  # log2(2) = 1 bit/s/Hz
    assert grid.rate_per_ru(sinr_lin) * grid.delta_t == pytest.approx(grid.b_ru * grid.t_slot)
    coarse = ResourceGrid(ru_budget=20)
    assert coarse.rate_per_ru(sinr_lin) * coarse.budget == pytest.approx(grid.rate_per_ru(sinr_lin) * grid.budget)
