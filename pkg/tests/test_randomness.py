import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randschro.randomness import (CHANNELS, OmegaKind, SeedSpec, TapeError, make_tape, make_tape_batch,
                                  path_uniforms, sample_omega, tape_from_arrays, tape_time_slice, warp_tape,
                                  zero_tape)


def test_rademacher_support():
    x = sample_omega("rademacher", SeedSpec(3, 1), 4)
    assert set(np.unique(x)) <= {-1.0, 1.0}
    assert set(np.unique(sample_omega("rademacher", SeedSpec(3, 1), 10_000))) == {-1.0, 1.0}


def test_gaussian_moments():
    x = sample_omega(OmegaKind.GAUSSIAN, SeedSpec(11, 0), 10**6)
    assert abs(x.mean()) < 4 / math.sqrt(10**6)
    assert abs(x.var() - 1) < 0.01


def test_empty_sample():
    assert sample_omega("gaussian", SeedSpec(0, 0), 0).shape == (0,)


def test_density_sup():
    assert OmegaKind.GAUSSIAN.density_sup == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_seed_validation():
    with pytest.raises(ValueError):
        SeedSpec(-1, 0)
    with pytest.raises(ValueError):
        SeedSpec(2**64, 0)
    with pytest.raises(ValueError):
        SeedSpec(0, -3)


def test_streams_differ_and_are_reproducible():
    a = sample_omega("gaussian", SeedSpec(5, 1), 100)
    b = sample_omega("gaussian", SeedSpec(5, 2), 100)
    c = sample_omega("gaussian", SeedSpec(5, 1), 100)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, c)


def test_tape_replay_bit_identical():
    t1 = make_tape(SeedSpec(1, 7), 1e-3, 500)
    t2 = make_tape(SeedSpec(1, 7), 1e-3, 500)
    for ch in CHANNELS:
        assert np.array_equal(t1.increments(ch), t1.increments(ch))
        assert np.array_equal(t1.increments(ch), t2.increments(ch))


def test_tape_is_read_only():
    t = make_tape(SeedSpec(1, 7), 1e-3, 10)
    with pytest.raises(ValueError):
        t.increments("B")[0] = 1.0


def test_brownian_variance_at_final_time():
    tape = make_tape_batch(2, np.arange(10_000), 1e-4, 10_000, ("B",))
    x = tape.cumulative("B")[:, -1]
    v = x.var(ddof=1)
    se = math.sqrt(2.0 / (len(x) - 1))
    assert abs(v - 1.0) < 3 * se


def test_channels_uncorrelated():
    steps = 100_000
    tape = make_tape(SeedSpec(9, 0), 1e-3, steps, ("B", "B2", "B3"))
    inc = np.stack([tape.increments(c) for c in ("B", "B2", "B3")])
    r = np.corrcoef(inc)
    off = r[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 4 / math.sqrt(steps))


def test_batch_matches_single_stream():
    batch = make_tape_batch(4, [3, 8], 1e-2, 50)
    single = make_tape(SeedSpec(4, 8), 1e-2, 50)
    assert np.array_equal(batch.increments("B2")[1], single.increments("B2"))


def test_time_slices():
    tape = make_tape(SeedSpec(1, 2), 0.01, 100, ("B",))
    full = tape.increments("B")
    whole = tape_time_slice(tape, 0.0, 1.0)
    assert np.array_equal(whole.increments("B"), full)
    a = tape_time_slice(tape, 0.0, 0.3).increments("B")
    b = tape_time_slice(tape, 0.3, 1.0).increments("B")
    assert np.array_equal(np.concatenate([a, b]), full)
    c = tape_time_slice(tape, 0.5, 0.7).increments("B")
    assert np.array_equal(c, full[50:70])
    with pytest.raises(TapeError):
        tape_time_slice(tape, 0.005, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 99))
def test_slice_partition_property(k):
    tape = make_tape(SeedSpec(3, 3), 0.01, 100, ("B2",))
    a = tape.slice_steps(0, k).increments("B2")
    b = tape.slice_steps(k, 100).increments("B2")
    assert np.array_equal(np.concatenate([a, b]), tape.increments("B2"))


def test_refine_sums_back_and_has_right_variance():
    tape = make_tape_batch(6, np.arange(2000), 0.01, 40, ("B",))
    fine = tape.refine()
    assert fine.steps == 80 and fine.dt == pytest.approx(0.005)
    f = fine.increments("B")
    assert np.allclose(f[:, 0::2] + f[:, 1::2], tape.increments("B"), atol=1e-13)
    assert abs(f.var() / 0.005 - 1) < 0.03
    assert np.array_equal(fine.coarsen(2).increments("B"), fine.coarsen(2).increments("B"))
    assert np.allclose(fine.coarsen(2).increments("B"), tape.increments("B"), atol=1e-13)


def test_refine_slice_consistency():
    tape = make_tape(SeedSpec(2, 5), 0.1, 20, ("B",))
    assert np.array_equal(tape.refine().slice_steps(10, 20).increments("B"),
                          tape.slice_steps(5, 10).refine().increments("B"))


def test_zero_tape():
    z = zero_tape(0.1, 10, ("B",), (3,))
    assert z.increments("B").shape == (3, 10)
    assert not np.any(z.increments("B"))


def test_validation_errors():
    with pytest.raises(TapeError):
        make_tape(SeedSpec(0), 0.0, 10)
    with pytest.raises(TapeError):
        make_tape(SeedSpec(0), 0.1, 0)
    with pytest.raises(TapeError):
        make_tape(SeedSpec(0), 0.1, 10, ("B", "Q"))
    with pytest.raises(TapeError):
        make_tape(SeedSpec(0), 0.1, 10, ("B",)).increments("B2")


def test_warp_tape_rescales_to_standard_increments():
    tape = make_tape_batch(1, np.arange(4000), 0.05, 40, ("B1",))
    w = warp_tape(tape, lambda s: 1 - np.exp(-np.asarray(s) / 2), {"B2": "B1"})
    dt = w.step_sizes()
    z = w.increments("B2") / np.sqrt(dt)
    assert abs(z.var() - 1) < 0.02
    assert w.time_grid()[-1] == pytest.approx(1 - math.exp(-1))


def test_tape_from_arrays_rejects_bad_times():
    with pytest.raises(TapeError):
        tape_from_arrays({"B": np.zeros(3)}, times=np.array([0.0, 0.1, 0.1, 0.2]))


def test_path_uniforms():
    u = path_uniforms(1, np.arange(10_000), 3)
    assert np.all((u >= 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / 10_000)
    assert not np.array_equal(u, path_uniforms(1, np.arange(10_000), 4))
    assert np.array_equal(u[5:8], path_uniforms(1, [5, 6, 7], 3))
