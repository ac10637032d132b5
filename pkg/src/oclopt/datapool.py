"""Accumulated training pool, holdout pool, reservoir storage, replay sampling.

The training pool stores every offered item up to ``capacity``; beyond that it
runs reservoir sampling (algorithm R), so after any prefix of insertions each
offered item is present with probability min(1, capacity / seen_count).

New data is routed per datum: with probability ``holdout_fraction`` an item
goes to the holdout pool (online information-retention validation set), else
it is offered to the training pool. Routing coins come from a random-access
substream keyed by the arrival step, so the routing of any step can be
re-enumerated independently.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .rng import substream
from .stream import StreamBatch


class EmptyPoolError(RuntimeError):
    """Sampling from a pool with no stored items."""


def _copy_rng_state(state):
    # cheap recursive copy of a bit-generator state dict (hot path: one
    # checkpoint per protocol step)
    if isinstance(state, dict):
        return {k: _copy_rng_state(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return state.copy()
    return state


@dataclass(frozen=True)
class Minibatch:
    """A sampled training minibatch (inputs + labels, no step identity)."""

    inputs: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return len(self.inputs)


class DataPool:
    """Capacity-limited item store with reservoir eviction.

    Items are kept in parallel arrays (features, labels, arrival step, record
    id). ``capacity=None`` means unlimited. ``seed`` pins the reservoir and
    replay randomness; holdout routing is keyed off the same seed.
    """

    def __init__(self, capacity: Optional[int] = None, seed: int = 0,
                 holdout_fraction: float = 0.0):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1 or None")
        if not (0.0 <= holdout_fraction < 1.0):
            raise ValueError("holdout_fraction must be in [0, 1)")
        self.capacity = capacity
        self.seed = seed
        self.holdout_fraction = holdout_fraction
        self.size = 0
        self.seen_count = 0
        self.last_step = 0
        self._xs: Optional[np.ndarray] = None
        self._ys: Optional[np.ndarray] = None
        self._arrival: Optional[np.ndarray] = None
        self._rid: Optional[np.ndarray] = None
        self._reservoir_rng = substream(seed, rngmod.RESERVOIR)
        self._replay_rng = substream(seed, rngmod.REPLAY)

    def __len__(self) -> int:
        return self.size

    # -- storage ------------------------------------------------------------

    def _ensure_storage(self, xs: np.ndarray, ys: np.ndarray, extra: int):
        if self._xs is None:
            alloc = self.capacity if self.capacity is not None else max(64, extra)
            self._xs = np.empty((alloc,) + xs.shape[1:], dtype=np.float64)
            self._ys = np.empty((alloc,) + ys.shape[1:], dtype=ys.dtype)
            self._arrival = np.empty(alloc, dtype=np.int64)
            self._rid = np.empty(alloc, dtype=np.int64)
        elif self.capacity is None and self.size + extra > len(self._xs):
            alloc = max(2 * len(self._xs), self.size + extra)
            for name in ("_xs", "_ys", "_arrival", "_rid"):
                old = getattr(self, name)
                new = np.empty((alloc,) + old.shape[1:], dtype=old.dtype)
                new[: self.size] = old[: self.size]
                setattr(self, name, new)

    def offer(self, xs: np.ndarray, ys: np.ndarray, t: int, rids: np.ndarray):
        """Offer a block of items; reservoir-evict past capacity."""
        n = len(xs)
        if n == 0:
            self.last_step = max(self.last_step, t)
            return
        self._ensure_storage(xs, ys, n)
        cap = self.capacity if self.capacity is not None else self.seen_count + n
        fill = min(max(cap - self.seen_count, 0), n)
        for i in range(fill):
            self._xs[self.size] = xs[i]
            self._ys[self.size] = ys[i]
            self._arrival[self.size] = t
            self._rid[self.size] = rids[i]
            self.size += 1
        if fill < n:
            # Algorithm R: item with 0-based global index i survives at slot
            # j ~ Uniform{0..i} iff j < capacity.
            idx = self.seen_count + np.arange(fill, n)
            slots = self._reservoir_rng.integers(0, idx + 1)
            for i, j in zip(range(fill, n), slots):
                if j < cap:
                    self._xs[j] = xs[i]
                    self._ys[j] = ys[i]
                    self._arrival[j] = t
                    self._rid[j] = rids[i]
        self.seen_count += n
        self.last_step = max(self.last_step, t)

    # -- views --------------------------------------------------------------

    def record_ids(self) -> np.ndarray:
        return np.array([], dtype=np.int64) if self._rid is None else self._rid[: self.size].copy()

    def items(self):
        """(inputs, labels, arrival steps) copies of the stored items."""
        if self.size == 0:
            raise EmptyPoolError("pool is empty")
        return (self._xs[: self.size].copy(), self._ys[: self.size].copy(),
                self._arrival[: self.size].copy())

    def arrivals(self) -> np.ndarray:
        return np.array([], dtype=np.int64) if self._arrival is None else self._arrival[: self.size].copy()

    # -- checkpoint / restore (atomic protocol steps) -------------------------

    def checkpoint(self) -> dict:
        return {
            "size": self.size,
            "seen": self.seen_count,
            "last_step": self.last_step,
            "xs": None if self._xs is None else self._xs[: self.size].copy(),
            "ys": None if self._ys is None else self._ys[: self.size].copy(),
            "arrival": None if self._arrival is None else self._arrival[: self.size].copy(),
            "rid": None if self._rid is None else self._rid[: self.size].copy(),
            "reservoir_state": _copy_rng_state(self._reservoir_rng.bit_generator.state),
            "replay_state": _copy_rng_state(self._replay_rng.bit_generator.state),
        }

    def restore(self, ckpt: dict):
        self.size = ckpt["size"]
        self.seen_count = ckpt["seen"]
        self.last_step = ckpt["last_step"]
        if ckpt["xs"] is not None and self._xs is not None:
            self._xs[: self.size] = ckpt["xs"]
            self._ys[: self.size] = ckpt["ys"]
            self._arrival[: self.size] = ckpt["arrival"]
            self._rid[: self.size] = ckpt["rid"]
        self._reservoir_rng.bit_generator.state = _copy_rng_state(ckpt["reservoir_state"])
        self._replay_rng.bit_generator.state = _copy_rng_state(ckpt["replay_state"])


def update(pool: DataPool, holdout: Optional[DataPool], batch: StreamBatch):
    """Integrate one revealed batch: route each datum to holdout or training pool.

    Routing coins are drawn from the (seed, HOLDOUT, t) substream, so the
    split of any step is re-enumerable. Record ids continue the global offer
    sequence across both pools.
    """
    if batch.t <= pool.last_step:
        raise ValueError(f"step {batch.t} does not exceed last integrated step {pool.last_step}")
    n = batch.n
    base = pool.seen_count + (holdout.seen_count if holdout is not None else 0)
    rids = base + np.arange(n, dtype=np.int64)
    if holdout is not None and holdout.holdout_fraction > 0.0:
        coins = substream(pool.seed, rngmod.HOLDOUT, batch.t).random(n)
        to_holdout = coins < holdout.holdout_fraction
    else:
        to_holdout = np.zeros(n, dtype=bool)
    keep = ~to_holdout
    pool.offer(batch.inputs[keep], batch.labels[keep], batch.t, rids[keep])
    if holdout is not None:
        holdout.offer(batch.inputs[to_holdout], batch.labels[to_holdout], batch.t,
                      rids[to_holdout])
        holdout.last_step = max(holdout.last_step, batch.t)


def sample_pure_replay(pool: DataPool, m: int,
                       rng: Optional[np.random.Generator] = None) -> Minibatch:
    """m items uniform with replacement over everything stored."""
    if pool.size == 0:
        raise EmptyPoolError("cannot sample from an empty pool")
    g = pool._replay_rng if rng is None else rng
    idx = g.integers(0, pool.size, size=m)
    return Minibatch(inputs=pool._xs[idx].copy(), labels=pool._ys[idx].copy())


def sample_mixed_replay(pool: DataPool, current: StreamBatch, m: int,
                        window: Optional[int] = None,
                        rng: Optional[np.random.Generator] = None) -> Minibatch:
    """Half the minibatch from the current step, half uniform from the history window.

    The history half draws uniformly from stored items with arrival step in
    [t - window, t - 1]; window=None means t-1 (full coverage). If the window
    holds nothing (e.g. t=1), the whole minibatch falls back to current data.
    """
    if m % 2 != 0:
        raise ValueError("mixed replay needs an even minibatch size")
    t = current.t
    b = (t - 1) if window is None else window
    g = pool._replay_rng if rng is None else rng
    if pool.size > 0:
        arr = pool._arrival[: pool.size]
        eligible = np.flatnonzero((arr >= t - b) & (arr <= t - 1))
    else:
        eligible = np.array([], dtype=np.int64)
    if len(eligible) == 0:
        idx_cur = g.integers(0, current.n, size=m)
        return Minibatch(inputs=current.inputs[idx_cur].copy(),
                         labels=current.labels[idx_cur].copy())
    half = m // 2
    idx_cur = g.integers(0, current.n, size=half)
    idx_hist = eligible[g.integers(0, len(eligible), size=half)]
    inputs = np.concatenate([current.inputs[idx_cur], pool._xs[idx_hist]])
    labels = np.concatenate([current.labels[idx_cur], pool._ys[idx_hist]])
    return Minibatch(inputs=inputs, labels=labels)


# -- persistence --------------------------------------------------------------
#
# Record file layout (little endian): u32 d_in header, then per record
# d_in float64 features, one float64 label, one u64 arrival step. Vector-label
# pools (the quadratic stream) do not fit this layout and are rejected.

def save_pool(pool: DataPool, path):
    if pool.size == 0:
        raise EmptyPoolError("refusing to persist an empty pool")
    xs, ys, arrival = pool.items()
    if ys.ndim != 1:
        raise ValueError("persistence supports scalar labels only")
    d_in = xs.shape[1]
    with open(path, "wb") as f:
        f.write(struct.pack("<I", d_in))
        for i in range(pool.size):
            f.write(xs[i].astype("<f8").tobytes())
            f.write(struct.pack("<d", float(ys[i])))
            f.write(struct.pack("<Q", int(arrival[i])))


def load_pool(path, capacity: Optional[int] = None, seed: int = 0,
              label_kind: str = "float") -> DataPool:
    """Load a persisted pool. label_kind 'int' casts labels back to class indices."""
    with open(path, "rb") as f:
        raw = f.read()
    (d_in,) = struct.unpack_from("<I", raw, 0)
    rec_size = 8 * d_in + 8 + 8
    body = raw[4:]
    if len(body) % rec_size != 0:
        raise ValueError("corrupt pool file: truncated record")
    n = len(body) // rec_size
    xs = np.empty((n, d_in))
    ys = np.empty(n)
    arrival = np.empty(n, dtype=np.int64)
    off = 0
    for i in range(n):
        xs[i] = np.frombuffer(body, dtype="<f8", count=d_in, offset=off)
        (ys[i],) = struct.unpack_from("<d", body, off + 8 * d_in)
        (arrival[i],) = struct.unpack_from("<Q", body, off + 8 * d_in + 8)
        off += rec_size
    pool = DataPool(capacity=capacity, seed=seed)
    labels = ys.astype(np.int64) if label_kind == "int" else ys
    order = np.argsort(arrival, kind="stable")
    for t in np.unique(arrival[order]):
        mask = arrival == t
        rids = pool.seen_count + np.arange(int(mask.sum()), dtype=np.int64)
        pool.offer(xs[mask], labels[mask], int(t), rids)
    return pool
