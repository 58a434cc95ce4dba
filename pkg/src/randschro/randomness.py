"""Seedable randomness: potential variables and replayable Brownian tapes.

Every Gaussian variate used by the SDE integrators is addressed by
``(master_seed, stream_id, level, step, channel)``.  A Philox4x64 counter
generator keyed by ``(master_seed, stream_id, level)`` produces four 64-bit
words per counter value; the counter is the step index and the four lanes
are the four channels ``B, B1, B2, B3``.  Words are mapped to normals by the
inverse normal CDF, so any block of steps can be generated independently of
every other block and of the batch it is generated in.

Level 0 holds the raw increments at the tape's base ``dt``.  Level ``k``
holds Brownian-bridge midpoint variates that split every level ``k - 1``
increment in two, so :meth:`NoiseTape.refine` halves ``dt`` while keeping the
same Brownian path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

CHANNELS = ("B", "B1", "B2", "B3")
_LANE = {name: i for i, name in enumerate(CHANNELS)}

# domain separation tags for key derivation
_DOMAIN_OMEGA = 0x6F6D6567
_DOMAIN_TAPE = 0x74617065
_DOMAIN_UNIFORM = 0x756E6966

_MASK64 = (1 << 64) - 1
# block size (in path-steps) used when streaming a tape
_BLOCK_BUDGET = 1 << 21


class TapeError(ValueError):
    pass


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if int(self.stream_id) < 0:
            raise ValueError(f"stream_id must be non-negative, got {self.stream_id}")


class OmegaKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"

    @property
    def density_sup(self) -> float:
        """Sup norm of the density of one draw; undefined for atoms."""
        if self is OmegaKind.GAUSSIAN:
            return 1.0 / math.sqrt(2.0 * math.pi)
        raise ValueError("rademacher variables have no bounded density")


def _key(master_seed: int, stream_id: int, *domain: int) -> np.ndarray:
    seq = np.random.SeedSequence([int(master_seed), int(stream_id), *domain])
    return seq.generate_state(2, dtype=np.uint64)


def sample_omega(dist: OmegaKind | str, seed: SeedSpec, count: int) -> np.ndarray:
    """I.i.d. mean-zero, unit-variance draws of the requested kind."""
    dist = OmegaKind(dist)
    if count < 0:
        raise ValueError("count must be non-negative")
    gen = np.random.Generator(np.random.Philox(key=_key(seed.master_seed, seed.stream_id, _DOMAIN_OMEGA)))
    if dist is OmegaKind.GAUSSIAN:
        return gen.standard_normal(count)
    return 2.0 * gen.integers(0, 2, size=count).astype(np.float64) - 1.0


def path_uniforms(master_seed: int, stream_ids, tag: int) -> np.ndarray:
    """One Uniform(0, 1) per stream id, independent of every tape channel."""
    ids = np.asarray(stream_ids, dtype=np.int64).reshape(-1)
    out = np.empty(len(ids))
    for i, s in enumerate(ids):
        raw = np.random.Philox(key=_key(master_seed, int(s), _DOMAIN_UNIFORM, int(tag))).random_raw(1)
        out[i] = _uniform53(raw)[0]
    return out


def _uniform53(raw: np.ndarray) -> np.ndarray:
    # open interval (0, 1): never hits the ndtri poles
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# sources: all return time-major blocks, shape (n_steps, *batch_shape)
# ---------------------------------------------------------------------------


class _PhiloxSource:
    """Seeded increments at resolution ``dt0 / 2**level``."""

    def __init__(self, master_seed: int, stream_ids: np.ndarray, dt0: float, level: int, batched: bool):
        self.master_seed = int(master_seed)
        self.stream_ids = np.asarray(stream_ids, dtype=np.int64).reshape(-1)
        self.dt0 = float(dt0)
        self.level = int(level)
        self.batched = batched
        self.batch_shape = (len(self.stream_ids),) if batched else ()
        self._keys: dict[int, list[np.ndarray]] = {}

    def keys(self, level: int) -> list[np.ndarray]:
        if level not in self._keys:
            self._keys[level] = [_key(self.master_seed, s, _DOMAIN_TAPE, level) for s in self.stream_ids]
        return self._keys[level]

    def refined(self) -> "_PhiloxSource":
        src = _PhiloxSource(self.master_seed, self.stream_ids, self.dt0, self.level + 1, self.batched)
        src._keys = self._keys
        return src

    def _normals(self, level: int, k0: int, k1: int, lanes: Sequence[int]) -> np.ndarray:
        n = k1 - k0
        keys = self.keys(level)
        raw = np.empty((len(keys), n, 4), dtype=np.uint64)
        bg = np.random.Philox(key=keys[0])
        state = bg.state
        state["buffer_pos"] = 4
        for p, key in enumerate(keys):
            state["state"] = {"counter": np.array([k0, 0, 0, 0], dtype=np.uint64), "key": key}
            bg.state = state
            raw[p] = bg.random_raw(4 * n).reshape(n, 4)
        # (lanes, n, P)
        sel = np.ascontiguousarray(raw[:, :, lanes].transpose(2, 1, 0))
        return ndtri(_uniform53(sel))

    def _level_block(self, level: int, k0: int, k1: int, lanes: Sequence[int]) -> np.ndarray:
        if level == 0:
            return self._normals(0, k0, k1, lanes) * math.sqrt(self.dt0)
        c0, c1 = k0 // 2, (k1 + 1) // 2
        coarse = self._level_block(level - 1, c0, c1, lanes)
        h_coarse = self.dt0 / 2 ** (level - 1)
        bridge = self._normals(level, c0, c1, lanes) * math.sqrt(h_coarse / 4.0)
        fine = np.empty((len(lanes), 2 * (c1 - c0), coarse.shape[2]))
        fine[:, 0::2] = 0.5 * coarse + bridge
        fine[:, 1::2] = 0.5 * coarse - bridge
        s = k0 - 2 * c0
        return fine[:, s : s + (k1 - k0)]

    def block(self, k0: int, k1: int, channels: Sequence[str]) -> dict[str, np.ndarray]:
        lanes = [_LANE[c] for c in channels]
        arr = self._level_block(self.level, k0, k1, lanes)
        out = {}
        for i, c in enumerate(channels):
            a = arr[i] if self.batched else arr[i][:, 0]
            out[c] = np.ascontiguousarray(a)
        return out


class _ArraySource:
    def __init__(self, data: Mapping[str, np.ndarray]):
        # stored time-major
        self.data = {c: np.ascontiguousarray(np.moveaxis(np.asarray(a, dtype=float), -1, 0)) for c, a in data.items()}
        shapes = {a.shape for a in self.data.values()}
        if len(shapes) != 1:
            raise TapeError("all channels must have the same shape")
        self.batch_shape = next(iter(shapes))[1:]

    def block(self, k0, k1, channels):
        return {c: self.data[c][k0:k1] for c in channels}


class _ZeroSource:
    def __init__(self, batch_shape: tuple[int, ...]):
        self.batch_shape = tuple(batch_shape)

    def block(self, k0, k1, channels):
        z = np.zeros((k1 - k0, *self.batch_shape))
        return {c: z for c in channels}


class _CoarseSource:
    def __init__(self, parent, factor: int):
        self.parent = parent
        self.factor = factor
        self.batch_shape = parent.batch_shape

    def block(self, k0, k1, channels):
        f = self.factor
        fine = self.parent.block(k0 * f, k1 * f, channels)
        return {c: a.reshape(k1 - k0, f, *a.shape[1:]).sum(axis=1) for c, a in fine.items()}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = a.view()
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class NoiseTape:
    """Immutable record of Gaussian increments for named channels.

    Channel arrays have shape ``batch_shape + (steps,)``.  Each increment of a
    standard channel is Normal(0, dt_k) where dt_k is the length of step k.
    ``times`` holds the step boundaries when the grid is not uniform.
    """

    dt: float
    steps: int
    channels: tuple[str, ...]
    _source: object
    offset: int = 0
    times: np.ndarray | None = None

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(self._source.batch_shape)

    @property
    def duration(self) -> float:
        return float(self.time_grid()[-1] - self.time_grid()[0])

    def time_grid(self) -> np.ndarray:
        if self.times is not None:
            return self.times
        return (self.offset + np.arange(self.steps + 1)) * self.dt

    def step_sizes(self) -> np.ndarray:
        return np.diff(self.time_grid())

    def _check_channels(self, channels: Sequence[str]) -> tuple[str, ...]:
        missing = [c for c in channels if c not in self.channels]
        if missing:
            raise TapeError(f"tape has no channel(s) {missing}; available {self.channels}")
        return tuple(channels)

    def block(self, k0: int, k1: int, channels: Sequence[str] | None = None) -> dict[str, np.ndarray]:
        """Time-major increments for local steps ``[k0, k1)``: shape (k1-k0, *batch)."""
        channels = self._check_channels(channels or self.channels)
        if not 0 <= k0 <= k1 <= self.steps:
            raise TapeError(f"block [{k0}, {k1}) outside tape of {self.steps} steps")
        raw = self._source.block(self.offset + k0, self.offset + k1, channels)
        return {c: _readonly(a) for c, a in raw.items()}

    def iter_blocks(self, channels: Sequence[str] | None = None, max_steps: int | None = None) -> Iterator[tuple[int, int, dict]]:
        width = max(1, int(np.prod(self.batch_shape, dtype=np.int64)))
        size = max_steps or max(1, min(self.steps, _BLOCK_BUDGET // width))
        for k0 in range(0, self.steps, size):
            k1 = min(self.steps, k0 + size)
            yield k0, k1, self.block(k0, k1, channels)

    def increments(self, channel: str) -> np.ndarray:
        a = self.block(0, self.steps, [channel])[channel]
        return _readonly(np.moveaxis(a, 0, -1))

    def cumulative(self, channel: str) -> np.ndarray:
        """Brownian path at the step boundaries, starting from 0."""
        inc = self.increments(channel)
        out = np.zeros(inc.shape[:-1] + (self.steps + 1,))
        np.cumsum(inc, axis=-1, out=out[..., 1:])
        return out

    def slice_steps(self, k0: int, k1: int) -> "NoiseTape":
        if not 0 <= k0 < k1 <= self.steps:
            raise TapeError(f"step range [{k0}, {k1}) invalid for {self.steps} steps")
        times = None if self.times is None else self.times[k0 : k1 + 1]
        return NoiseTape(self.dt, k1 - k0, self.channels, self._source, self.offset + k0, times)

    def coarsen(self, factor: int) -> "NoiseTape":
        """Sum consecutive groups of ``factor`` increments (same Brownian path)."""
        if factor < 1 or self.steps % factor:
            raise TapeError(f"cannot coarsen {self.steps} steps by {factor}")
        if self.times is not None:
            raise TapeError("coarsening a non-uniform tape is not supported")
        if self.offset % factor:
            raise TapeError("tape offset not aligned with coarsening factor")
        return NoiseTape(self.dt * factor, self.steps // factor, self.channels,
                         _CoarseSource(self._source, factor), self.offset // factor)

    def refine(self) -> "NoiseTape":
        """Halve dt by Brownian-bridge midpoints; pairwise sums reproduce this tape."""
        if self.times is not None:
            raise TapeError("refining a non-uniform tape is not supported")
        src = self._source
        if isinstance(src, _ZeroSource):
            return NoiseTape(self.dt / 2, 2 * self.steps, self.channels, src, 2 * self.offset)
        if isinstance(src, _PhiloxSource):
            return NoiseTape(self.dt / 2, 2 * self.steps, self.channels, src.refined(), 2 * self.offset)
        if isinstance(src, _CoarseSource) and src.factor % 2 == 0:
            half = _CoarseSource(src.parent, src.factor // 2) if src.factor > 2 else src.parent
            return NoiseTape(self.dt / 2, 2 * self.steps, self.channels, half, 2 * self.offset)
        raise TapeError("only seeded, zero, or evenly coarsened tapes can be refined")

    def complex_w(self, block: Mapping[str, np.ndarray]) -> np.ndarray:
        """W increment (B2 + i B3)/sqrt(2) from a block."""
        return (block["B2"] + 1j * block["B3"]) / math.sqrt(2.0)


def _validate(dt: float, steps: int, channel_set) -> tuple[str, ...]:
    if not dt > 0:
        raise TapeError(f"dt must be positive, got {dt}")
    if int(steps) != steps or steps < 1:
        raise TapeError(f"steps must be a positive integer, got {steps}")
    chans = tuple(c for c in CHANNELS if c in set(channel_set))
    unknown = set(channel_set) - set(CHANNELS)
    if unknown:
        raise TapeError(f"unknown channels {sorted(unknown)}")
    if not chans:
        raise TapeError("at least one channel is required")
    return chans


def make_tape(seed: SeedSpec, dt: float, steps: int, channel_set=CHANNELS) -> NoiseTape:
    chans = _validate(dt, steps, channel_set)
    src = _PhiloxSource(seed.master_seed, np.array([seed.stream_id]), dt, 0, batched=False)
    return NoiseTape(float(dt), int(steps), chans, src)


def make_tape_batch(master_seed: int, stream_ids: Sequence[int] | np.ndarray, dt: float, steps: int,
                    channel_set=CHANNELS) -> NoiseTape:
    """One independent tape per stream id, stacked along a leading axis."""
    chans = _validate(dt, steps, channel_set)
    ids = np.asarray(stream_ids, dtype=np.int64).reshape(-1)
    if len(ids) == 0:
        raise TapeError("stream_ids is empty")
    SeedSpec(master_seed, int(ids.min()))
    src = _PhiloxSource(master_seed, ids, dt, 0, batched=True)
    return NoiseTape(float(dt), int(steps), chans, src)


def zero_tape(dt: float, steps: int, channel_set=CHANNELS, batch_shape: tuple[int, ...] = ()) -> NoiseTape:
    chans = _validate(dt, steps, channel_set)
    return NoiseTape(float(dt), int(steps), chans, _ZeroSource(batch_shape))


def tape_from_arrays(data: Mapping[str, np.ndarray], dt: float | None = None,
                     times: np.ndarray | None = None) -> NoiseTape:
    """Tape from explicit increments (time on the last axis).

    Give either a uniform ``dt`` or the ``times`` of all step boundaries.
    """
    src = _ArraySource(data)
    steps = next(iter(src.data.values())).shape[0]
    if times is not None:
        times = np.asarray(times, dtype=float)
        if times.shape != (steps + 1,) or np.any(np.diff(times) <= 0):
            raise TapeError("times must be strictly increasing with steps + 1 entries")
        dt = float(np.mean(np.diff(times)))
        times = _readonly(times.copy())
    chans = _validate(dt, steps, src.data.keys())
    return NoiseTape(float(dt), steps, chans, src, 0, times)


def tape_time_slice(tape: NoiseTape, t0: float, t1: float) -> NoiseTape:
    """Read-only view of the increments in ``[t0, t1)``; bounds must sit on steps."""
    grid = tape.time_grid()
    tol = 1e-9 * max(1.0, abs(grid[-1]))
    k0 = int(np.searchsorted(grid, t0 - tol))
    k1 = int(np.searchsorted(grid, t1 - tol))
    if k0 > tape.steps or k1 > tape.steps or abs(grid[min(k0, tape.steps)] - t0) > tol \
            or abs(grid[min(k1, tape.steps)] - t1) > tol:
        raise TapeError(f"[{t0}, {t1}) is not aligned with the tape's step boundaries")
    if not k0 < k1:
        raise TapeError(f"empty or reversed slice [{t0}, {t1})")
    return tape.slice_steps(k0, k1)


def warp_tape(tape: NoiseTape, time_map, channel_map: Mapping[str, str]) -> NoiseTape:
    """Time-changed tape: step k of the result spans ``[time_map(s_k), time_map(s_{k+1})]``.

    Each output channel copies an input channel rescaled by
    ``sqrt(dt_new / dt_old)`` so that it is again a standard increment on the
    new (non-uniform) grid.  ``channel_map`` maps output name -> input name.
    """
    s = tape.time_grid()
    t = np.asarray(time_map(s), dtype=float)
    scale = np.sqrt(np.diff(t) / np.diff(s))
    data = {out: tape.increments(src) * scale for out, src in channel_map.items()}
    return tape_from_arrays(data, times=t)
