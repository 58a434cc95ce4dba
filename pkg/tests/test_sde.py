import math

import numpy as np
import pytest

from randschro.harness.experiments import zero_tape_checks
from randschro.operator_model import density_rho
from randschro.point_process import count_sine_beta, sine_beta_tape
from randschro.randomness import make_tape_batch, tape_from_arrays, zero_tape
from randschro.sde import (CarouselError, continuum_phase, decaying_sigma_rho, integrate_carousel,
                           integrate_derivative, integrate_logtan, integrate_matrix, integrate_phase_family,
                           integrate_relative_family, sample_derivative_functional, sine_beta_tmax, steps_for,
                           warp_to_decaying)
from randschro.transfer import diagonalization


def tape(seed, paths, dt, T, channels=("B", "B2", "B3")):
    steps, h = steps_for(T, dt)
    return make_tape_batch(seed, np.arange(paths), h, steps, channels)


def test_zero_tape_closed_forms():
    rows = zero_tape_checks(1e-3)
    assert len(rows) >= 12
    for r in rows:
        assert r["holds"], r


def test_phase_mean_and_variance():
    # the noise has quadratic variation 3/2 dt regardless of phi
    T, lam = 1.0, 2.0
    phi = integrate_phase_family("critical", [lam], T, tape(1, 4000, 1e-3, T)).final[:, 0]
    se = phi.std(ddof=1) / math.sqrt(len(phi))
    assert abs(phi.mean() - lam * T) < 4 * se
    v = phi.var(ddof=1)
    assert abs(v - 1.5 * T) < 4 * 1.5 * math.sqrt(2 / len(phi))


def test_phase_monotone_in_lambda():
    fam = integrate_phase_family("critical", np.linspace(-10, 10, 41), 1.0, tape(2, 200, 1e-3, 1.0))
    assert fam.monotone_violations() == 0


def test_phase_recording_and_csv(tmp_path):
    fam = integrate_phase_family("critical", [0.0, 1.0], 0.1, tape(3, 1, 1e-2, 0.1), record_every=1)
    assert fam.values.shape[-1] == len(fam.times) == 11
    assert np.allclose(fam.values[..., -1], fam.final)
    fam1 = integrate_phase_family("critical", [0.0, 1.0], 0.1, tape(3, 1, 1e-2, 0.1).slice_steps(0, 10)
                                  , record_every=2)
    fam1.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("t,lambda,phi")


def test_phase_rejects_bad_inputs():
    z = zero_tape(0.01, 100, ("B", "B2", "B3"))
    with pytest.raises(ValueError):
        integrate_phase_family("decaying", [1.0], 1.0, z)
    with pytest.raises(ValueError):
        integrate_phase_family("critical-E0", [1.0], 1.0, zero_tape(0.01, 100, ("B1", "B2")), e0_drift="x")
    with pytest.raises(ValueError):
        integrate_phase_family("critical", [1.0], 2.0, z)


def test_derivative_mean_and_positivity():
    T = 1.0
    d = integrate_derivative(0.0, T, tape(4, 4000, 1e-3, T))
    assert np.all(d.min_varpi > 0)
    se = d.varpi.std(ddof=1) / math.sqrt(len(d.varpi))
    assert abs(d.varpi.mean() - T) < 4 * se


def test_derivative_matches_finite_difference():
    T, h = 1.0, 1e-4
    tp = tape(5, 50, 1e-3, T)
    d = integrate_derivative(0.5, T, tp)
    fam = integrate_phase_family("critical", [0.5 - h, 0.5 + h], T, tp).final
    fd = (fam[:, 1] - fam[:, 0]) / (2 * h)
    assert np.allclose(d.phi, integrate_phase_family("critical", [0.5], T, tp).final[:, 0])
    # same Euler scheme differentiated in lambda: agreement to O(h^2)
    assert np.max(np.abs(fd - d.varpi)) < 1e-5


def test_derivative_functional_mean():
    # E exp(-(B_s - B_t)/sqrt 2) = exp((t - s)/4), so E F(t) = t
    T = 2.0
    tp = tape(6, 4000, 1e-3, T, ("B",))
    f = sample_derivative_functional(T, tp)
    assert np.all(f > 0)
    se = f.std(ddof=1) / math.sqrt(len(f))
    assert abs(f.mean() - T) < 4 * se
    with pytest.raises(ValueError):
        sample_derivative_functional(0.0, tp)
    with pytest.raises(ValueError):
        sample_derivative_functional(T / 3, tp)


def test_relative_phase_zero_lambda_stays_zero():
    a = integrate_relative_family("critical", [0.0, 3.0], tape(7, 20, 1e-3, 1.0, ("B2", "B3")), horizon=1.0)
    assert np.all(a.final[:, 0] == 0.0)
    assert np.all(a.final[:, 1] > 0)


def test_relative_equals_phase_difference_in_law():
    # alpha^lam = phi^lam - phi^0 driven by the rotated noise: compare first two moments
    T, lam = 1.0, 4.0
    rel = integrate_relative_family("critical", [lam], tape(8, 4000, 1e-3, T, ("B2", "B3")), horizon=T).final[:, 0]
    fam = integrate_phase_family("critical", [0.0, lam], T, tape(9, 4000, 1e-3, T)).final
    diff = fam[:, 1] - fam[:, 0]
    se = math.hypot(rel.std(), diff.std()) / math.sqrt(4000)
    assert abs(rel.mean() - diff.mean()) < 4 * se
    assert abs(rel.mean() - lam * T) < 4 * rel.std() / math.sqrt(4000)


def test_logtan_monotone_coupling():
    tp = tape(10, 300, 1e-3, 1.0, ("B",))
    lo = integrate_logtan(2.0, 1.0, tp, Y0=-5.0)
    hi = integrate_logtan(2.0, 1.0, tp, Y0=-2.0)
    assert np.all(hi.exploded >= lo.exploded)
    both = ~hi.exploded
    assert np.all(hi.Y[both] >= lo.Y[both] - 1e-12)
    boom = lo.exploded
    assert np.all(hi.explosion_step[boom] <= lo.explosion_step[boom])
    assert np.all(lo.explosion_step[~boom] == -1)


def test_logtan_explosion_increases_with_epsilon():
    tp = tape(11, 1000, 1e-3, 1.0, ("B",))
    rates = [integrate_logtan(e, 1.0, tp).exploded.mean() for e in (0.5, 2.0, 6.0)]
    assert rates[0] <= rates[1] <= rates[2]
    assert rates[2] > rates[0]
    with pytest.raises(ValueError):
        integrate_logtan(1.0, 1.0, tp, scheme="rk4")


def test_logtan_flow_explodes_at_exact_time():
    # noise-free: g = 2 arctan(e^Y) obeys g' = eps/(2 tau) - sin(2g)/8, crossing pi near 2 pi tau/eps
    z = zero_tape(1e-3, 1000, ("B",))
    r = integrate_logtan(4 * math.pi, 1.0, z, Y0=-700.0)
    assert r.exploded and abs(r.explosion_step * 1e-3 - 0.5) < 0.01


def test_carousel_gamma_monotone_and_q():
    T = 1.0
    tp = tape(12, 200, 1e-4, T, ("B2", "B3"))
    st = integrate_carousel(np.linspace(0, 20, 11), T, tp, V0=0.1, radial=True)
    assert np.all(np.diff(st.gamma, axis=-1) >= 0)
    assert np.all(np.abs(st.V) < 1)
    err = np.abs(st.q - st.q_direct)
    assert np.median(err) < 10 * math.sqrt(1e-4)


def test_carousel_q_error_shrinks_with_dt():
    T = 1.0
    base = tape(13, 200, 1e-3, T, ("B2", "B3"))
    errs = []
    for tp in (base, base.refine().refine()):
        st = integrate_carousel([1.0], T, tp, V0=0.1, radial=True)
        errs.append(np.mean(np.abs(st.q - st.q_direct)))
    assert errs[1] < errs[0]


def test_carousel_errors():
    z = zero_tape(0.01, 100, ("B2", "B3"))
    with pytest.raises(ValueError):
        integrate_carousel([1.0], 1.0, z, radial=True)
    big = make_tape_batch(14, [0], 1.0, 50, ("B2", "B3"))
    with pytest.raises(CarouselError):
        integrate_carousel([1.0], 50.0, big)


def test_sine_beta_counts():
    beta, lam = 2.0, 2 * math.pi * 5
    Tmax = sine_beta_tmax(beta, lam)
    tp = sine_beta_tape(15, np.arange(300), beta, lam, Tmax)
    res = count_sine_beta(beta, [lam / 2, lam], tp, Tmax)
    assert np.mean(res.residual[:, -1]) < 0.05
    assert np.all(res.counts[:, 1] >= res.counts[:, 0])
    # Sine_beta has density 1/(2 pi)
    c = res.counts[:, 1]
    assert abs(c.mean() - lam / (2 * math.pi)) < 4 * c.std(ddof=1) / math.sqrt(len(c)) + 0.05
    with pytest.raises(ValueError):
        count_sine_beta(0.0, [1.0], tp)


def test_time_change_agreement():
    beta, S = 2.0, 4.0
    steps, h = steps_for(S, 1e-3)
    base = make_tape_batch(16, np.arange(20), h, steps, ("B1", "B2"))
    sb = integrate_relative_family("sine-beta", [5.0], base, beta=beta).final
    warped = warp_to_decaying(base, beta)
    dec = integrate_relative_family("decaying", [5.0], warped, sigma_rho=decaying_sigma_rho(beta)).final
    assert np.max(np.abs(sb - dec)) < 10 * math.sqrt(h)


def test_matrix_conservation():
    E, lam, T = 1.0, 3.0, 1.0
    tp = tape(17, 200, 1e-4, T)
    m = integrate_matrix("generic", lam, "Zinv", T, tp, E=E)
    rho = density_rho(E)
    assert np.median(m.det_drift()) < 0.05
    assert np.median(np.abs(m.im_cross() - rho / 4)) < 0.05
    assert np.allclose(m.init, diagonalization(E).Zinv)


def test_matrix_phase_matches_phase_sde():
    # the phase read off X11 solves the phase SDE driven by i dW (same law as dW)
    E, lam, T = 1.0, 2.0, 1.0
    errs = []
    for dt in (1e-3, 1e-4):
        tp = tape(18, 20, dt, T)
        rot = tape_from_arrays({"B": tp.increments("B"), "B2": -tp.increments("B3"), "B3": tp.increments("B2")},
                               dt=tp.dt)
        m = integrate_matrix("generic", lam, "Zinv", T, tp, E=E, record_every=1)
        phi_m = continuum_phase(m.path[:, 0, 0, :])[:, -1]
        phi = integrate_phase_family("critical", [lam], T, rot).final[:, 0]
        errs.append(np.median(np.abs(phi_m - phi)))
    assert errs[1] < errs[0] < 0.05


def test_decaying_matrix_requires_short_horizon():
    z = zero_tape(0.01, 100, ("B", "B2", "B3"))
    with pytest.raises(ValueError):
        integrate_matrix("decaying", 1.0, "identity", 1.0, z)
    with pytest.raises(ValueError):
        integrate_matrix("generic", 1.0, "other", 1.0, z)


def test_e0_phase_from_matrix_matches_ito_variant():
    T, lam = 1.0, 2.0
    tp = tape(19, 400, 1e-3, T, ("B1", "B2"))
    m = integrate_matrix("E0", lam, "Zinv", T, tp, record_every=1)
    phi_m = continuum_phase(m.path[:, 0, 0, :])[:, -1]
    ito = integrate_phase_family("critical-E0", [lam], T, tp, e0_drift="ito").final[:, 0]
    stated = integrate_phase_family("critical-E0", [lam], T, tp, e0_drift="stated").final[:, 0]
    assert np.median(np.abs(ito - phi_m)) < 0.05
    assert np.median(np.abs(stated - phi_m)) > 0.3
