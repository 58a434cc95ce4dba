import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from randschro.operator_model import PotentialSpec, density_rho
from randschro.point_process import (PointSample, StatReport, carousel_counts, clt_report, compare_distributions,
                                     count_tail_probability, floor_difference_law, gap_report, intensity_report,
                                     ks_two_sample, lattice_count, relative_phase_tail, repulsion_bounds,
                                     repulsion_report, sample_sch_points, sch_counts, sch_counts_grid,
                                     sch_star_counts, theta_cell_mass, theta_density, wegner_minami_bounds,
                                     wegner_minami_report, write_points_csv, zero_event_upper)
from randschro.randomness import make_tape_batch, path_uniforms, zero_tape
from randschro.sde import integrate_phase_family, steps_for

TWO_PI = 2 * math.pi
TAU = 4 / 3


def tape(seed, paths, dt, T, channels=("B", "B2", "B3")):
    steps, h = steps_for(T, dt)
    return make_tape_batch(seed, np.arange(paths), h, steps, channels)


def test_zero_tape_points_are_lattice():
    steps, h = steps_for(TAU, 1e-3)
    z = zero_tape(h, steps, ("B", "B2", "B3"), (1,))
    pts = sample_sch_points(TAU, (-10.0, 20.0), z, tol_lambda=1e-9)[0].points
    ref = TWO_PI * np.arange(-1, 4)
    assert np.allclose(pts, ref, atol=1e-6)


def test_lattice_count():
    assert lattice_count(0.0, TWO_PI) == 2
    assert lattice_count(0.1, TWO_PI - 0.1) == 0
    assert lattice_count(5.0, 1.0) == 0
    assert lattice_count(-1.0, 1.0, offset=0.5) == 1


def test_points_consistent_with_counts():
    tp = tape(1, 40, 1e-3, TAU)
    samples = sample_sch_points(TAU, (0.0, 30.0), tp, tol_lambda=1e-8)
    for lam in (3.0, 11.0, 29.0):
        fam = integrate_phase_family("critical", [0.0, lam / TAU], TAU, tp).final
        for s, (p0, p1) in zip(samples, fam):
            n = np.sum(s.points <= lam)
            assert n == lattice_count(p0, p1)
            # number of points is within one of the phase increment over 2 pi
            assert abs(n - (p1 - p0) / TWO_PI) <= 1


def test_point_sample_validation(tmp_path):
    with pytest.raises(ValueError):
        PointSample(np.array([1.0, 0.5]), (0, 2), "x")
    with pytest.raises(ValueError):
        PointSample(np.array([3.0]), (0, 2), "x")
    s = PointSample(np.array([0.5, 1.5]), (0, 2), "x", seed=7)
    write_points_csv(tmp_path / "p.csv", [s])
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "sample_id,point" and lines[1].startswith("7,")


def test_theta_density_normalized_and_flattens():
    for tau in (0.1, TAU, 5.0):
        assert quad(lambda x: theta_density(np.array([x]), tau)[0], 0, TWO_PI)[0] == pytest.approx(1.0, abs=1e-8)
    x = np.linspace(0, TWO_PI, 200)
    assert np.max(np.abs(theta_density(x, 20.0) - 1 / TWO_PI)) < 1e-3
    edges = np.linspace(0, TWO_PI, 9)
    assert theta_cell_mass(edges, TAU).sum() == pytest.approx(1.0, abs=1e-12)


def test_mean_count_follows_theta_intensity():
    tp = tape(2, 4000, 1e-3, TAU)
    c = sch_counts(TAU, 0.0, 3.0, tp)
    ref = quad(lambda x: theta_density(np.array([x]), TAU)[0], 0.0, 3.0)[0]
    se = c.std(ddof=1) / math.sqrt(len(c))
    assert abs(c.mean() - ref) < 4 * se


def test_counts_grid_monotone():
    tp = tape(3, 100, 1e-3, TAU)
    g = sch_counts_grid(TAU, [0.0, 1.0, 5.0, 20.0], tp)
    assert np.all(g[:, 0] <= 1)
    assert np.all(np.diff(g, axis=1) >= 0)


def test_star_counts_zero_shift_matches_plain():
    tp = tape(4, 50, 1e-3, TAU)
    assert np.array_equal(sch_star_counts(TAU, -2.0, 5.0, tp, np.zeros(50)), sch_counts(TAU, -2.0, 5.0, tp))


def test_carousel_counts_mean():
    # the carousel picture gives a translation-invariant process of density 1/(2 pi)
    tp = tape(5, 3000, 1e-3, TAU, ("B2", "B3"))
    u = path_uniforms(5, np.arange(3000), 1)
    c = carousel_counts(TAU, 10.0, tp, u)
    se = c.std(ddof=1) / math.sqrt(len(c))
    assert abs(c.mean() - 10.0 / TWO_PI) < 4 * se


def test_gap_report_degenerate_and_monotone():
    e = np.zeros((100, 3), dtype=bool)
    e[:, 0] = True
    e[:10, 1] = True
    r = gap_report(TAU, [0.0, 1.0, 30.0], e)
    assert r.estimate["P"][0] == 1.0
    assert r.details["kind"] == ["degenerate", "estimate", "lower-bound"]


def test_gap_probability_respects_intensity_floor():
    # P(N = 0) >= 1 - E N, so at moderate lambda the log ratio is capped well below one
    tp = tape(21, 4000, 1e-3, TAU)
    lams = [2.0, 4.0]
    empty = np.column_stack([sch_counts(TAU, 0.0, l, tp) == 0 for l in lams])
    r = gap_report(TAU, lams, empty)
    for p, se, m in zip(r.estimate["P"], r.stderr["P"], r.details["expected_count"]):
        assert p >= 1 - m - 4 * se
    assert np.all(np.array(r.details["ratio_ceiling"]) >= np.array(r.estimate["ratio"]) - 0.05)
    ceil = gap_report(1.0, [4.0, 6.0], np.ones((10, 2), dtype=bool)).details["ratio_ceiling"]
    assert max(ceil) < 0.5


def test_zero_event_upper():
    assert zero_event_upper(1000, 0.05) == pytest.approx(1 - 0.05 ** 0.001)
    assert zero_event_upper(10**6) < 1e-5


def test_repulsion_bounds_applicability():
    b = repulsion_bounds(TAU, 0.01)
    assert b["applicable_a"] and b["applicable_b"]
    b = repulsion_bounds(TAU, 2.0)
    assert not b["applicable_a"]
    assert repulsion_bounds(TAU, 1e-4)["bound_a"] < repulsion_bounds(TAU, 1e-2)["bound_a"]


def test_backward_equation_single_point_probability():
    # small eps: P(>= 1 point) ~ expected count = integral of the theta density
    for eps in (0.05, 0.2):
        ref = quad(lambda x: theta_density(np.array([x]), TAU)[0], 0, eps)[0]
        assert count_tail_probability(TAU, eps, need=1) == pytest.approx(ref, rel=0.03)


def test_backward_equation_against_monte_carlo():
    eps = 1.0
    tp = tape(6, 20_000, 1e-3, TAU)
    c = sch_counts(TAU, 0.0, eps, tp)
    p = np.mean(c >= 1)
    se = math.sqrt(p * (1 - p) / len(c))
    assert abs(count_tail_probability(TAU, eps, need=1) - p) < 4 * se + 0.005


def test_two_point_probability_below_relative_phase_tail():
    for eps in (0.2, 1.0):
        assert count_tail_probability(TAU, eps, 2) <= relative_phase_tail(TAU, eps) * 1.05
    with pytest.raises(ValueError):
        count_tail_probability(TAU, 1.0, need=3)


def test_repulsion_report_slope():
    eps = [0.05, 0.1, 0.2]
    r = repulsion_report(TAU, eps, np.zeros((1000, 3), dtype=int), pde_kw={"nt": 400})
    assert r.estimate["slope"] > 3
    assert r.verdict


def test_clt_report_on_exact_gaussians():
    rng = np.random.default_rng(0)
    cov = np.array([[1.5 * TAU, TAU], [TAU, 1.5 * TAU]])
    x = rng.multivariate_normal([0, 0], cov, size=50_000)
    r = clt_report(TAU, 2.0, x[:, 0], x[:, 1] + 2.0 * TAU)
    assert r.verdict and r.statistic < 0.05


def test_clt_lambda_zero_is_degenerate():
    tp = tape(7, 200, 1e-3, 1.0)
    phi = integrate_phase_family("critical", [0.0, 0.0], 1.0, tp).final
    assert np.array_equal(phi[:, 0], phi[:, 1])


def test_floor_difference_law():
    rng = np.random.default_rng(1)
    d = floor_difference_law(TAU, 0.0, 10_000, rng)
    assert set(np.unique(d)) <= {-2, -1, 0, 1, 2}
    assert abs(d.mean()) < 4 * d.std() / 100


def test_wegner_minami():
    w, m = wegner_minami_bounds(100, 1.0, 0.01, 1 / math.sqrt(TWO_PI))
    assert w == pytest.approx(10 * 0.01 / math.sqrt(TWO_PI))
    assert m == pytest.approx(0.5 * math.pi ** 2 * 100 * 0.01 ** 2 / TWO_PI)
    spec = PotentialSpec("critical", 1.0, 100)
    r = wegner_minami_report(spec, [(0.0, 0.01)], np.zeros((50, 1), dtype=int))
    assert r.verdict
    with pytest.raises(ValueError):
        wegner_minami_report(PotentialSpec("critical", 1.0, 100, "rademacher"), [(0.0, 0.01)], np.zeros((5, 1)))


def test_compare_identical_and_shifted():
    rng = np.random.default_rng(2)
    a = rng.poisson(3, 5000)
    r = compare_distributions(a, a)
    assert r.estimate["ks_distance"] == 0.0 and r.verdict
    r2 = compare_distributions(a, a + 1)
    assert not r2.verdict
    with pytest.raises(ValueError):
        compare_distributions([], a)


def test_ks_two_sample():
    rng = np.random.default_rng(3)
    assert ks_two_sample(rng.normal(size=2000), rng.normal(size=2000)).verdict
    assert not ks_two_sample(rng.normal(size=2000), rng.normal(0.5, size=2000)).verdict


def test_intensity_report_guards():
    s = [PointSample(np.array([1.0]), (0.0, TWO_PI), "x")] * 10
    with pytest.raises(ValueError):
        intensity_report(TAU, s)
    with pytest.raises(ValueError):
        intensity_report(TAU, s * 100, bins=8)


def test_stat_report_json_roundtrip():
    r = StatReport("x", estimate={"a": np.float64(1.5)}, stderr={"a": 0.1}, n=10, verdict=True,
                   details={"v": np.arange(3), "inf": float("inf")})
    back = StatReport.from_json(r.to_json())
    assert back.estimate == {"a": 1.5} and back.details["v"] == [0, 1, 2]
    assert json.loads(r.to_json())["verdict"] is True
    with pytest.raises(ValueError):
        StatReport("y", 0.0, -1.0, 5)
    with pytest.raises(ValueError):
        StatReport("y", 0.0, 1.0, 0)


def test_tau_at_unit_energy():
    assert (density_rho(1.0)) ** 2 == pytest.approx(TAU)


def test_decaying_model_matches_sine_beta_at_eight_over_sigma_rho_squared():
    # sigma*rho = 2: the count variance on [0, 40] picks beta = 8/(sigma rho)^2 = 2, not 0.5
    from randschro.operator_model import build_diagonals, scaled_counts
    from randschro.point_process import count_sine_beta, sine_beta_tape
    from randschro.sde import decaying_sigma_rho, sine_beta_tmax

    E, L, P = 1.0, 40.0, 1000
    sigma = decaying_sigma_rho(2.0) / density_rho(E)
    v = build_diagonals(PotentialSpec("decaying", sigma, 2000), 7, np.arange(P))
    disc = scaled_counts(v, E, 0.0, L, shift=0.0)
    var = {}
    for beta in (2.0, 0.5):
        T = sine_beta_tmax(beta, L)
        var[beta] = count_sine_beta(beta, [L], sine_beta_tape(3, np.arange(P), beta, L, T), T).counts.var(ddof=1)
    se = disc.var(ddof=1) * math.sqrt(2 / P)
    assert abs(disc.var(ddof=1) - var[2.0]) < 4 * se * math.sqrt(2)
    assert abs(disc.var(ddof=1) - var[0.5]) > 10 * se
