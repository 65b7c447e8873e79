"""Collision-distance multisets, the three objectives, and entropy analytics.

Spatial distances are adjacent gaps between same-tag live chunks (chunk
units); temporal distances are gaps between rounds at which one memory
position received the same tag (allocation rounds).  Both are plain integer
multisets; entropy is always computed over exact integer distances, never
over a smoothed density.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyMultisetError

CHUNK_UNITS = "chunk"
BYTE_UNITS = "byte"
ROUND_UNITS = "round"

CIRCULAR_SHIFT = "circular-shift"
RANDOM_RETAG = "random"


def _entropy_bits(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(-(p * np.log2(p)).sum())


@dataclass
class DistanceMultiset:
    """Multiset of non-negative integer collision distances."""

    unit: str = CHUNK_UNITS
    counts: Counter = field(default_factory=Counter)

    def add(self, distance: int, n: int = 1) -> None:
        self.counts[int(distance)] += n

    def merge(self, other: "DistanceMultiset") -> "DistanceMultiset":
        """Multiset sum; duplicate distances accumulate."""
        assert self.unit == other.unit
        self.counts.update(other.counts)
        return self

    @classmethod
    def from_array(cls, distances, unit: str) -> "DistanceMultiset":
        ms = cls(unit=unit)
        values, reps = np.unique(np.asarray(distances), return_counts=True)
        for v, r in zip(values, reps):
            ms.counts[int(v)] = int(r)
        return ms

    @classmethod
    def from_count_array(cls, counts: np.ndarray, unit: str) -> "DistanceMultiset":
        ms = cls(unit=unit)
        for d in np.nonzero(counts)[0]:
            ms.counts[int(d)] = int(counts[d])
        return ms

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __len__(self):
        return self.total

    def min(self) -> int:
        return min(self.counts)

    def mean(self) -> float:
        total = self.total
        return sum(d * c for d, c in self.counts.items()) / total

    def percentile(self, q: float) -> int:
        """Smallest distance whose cumulative share reaches ``q``."""
        need = q * self.total
        run = 0
        for d in sorted(self.counts):
            run += self.counts[d]
            if run >= need:
                return d
        raise EmptyMultisetError("percentile of empty multiset")

    def entropy_bits(self) -> float:
        return _entropy_bits(np.array(list(self.counts.values()), dtype=np.float64))

    def csv_rows(self):
        """(distance, count) rows in ascending distance order."""
        return [(d, self.counts[d]) for d in sorted(self.counts)]


@dataclass
class ObjectiveReport:
    """The three optimization objectives over one distance multiset."""

    f1_min: int
    f2_avg: float
    f3_entropy_bits: float
    samples: int

    def as_dict(self):
        return {
            "min": self.f1_min,
            "avg": self.f2_avg,
            "entropy_bits": self.f3_entropy_bits,
            "samples": self.samples,
        }


def objectives(dist: DistanceMultiset) -> ObjectiveReport:
    """f1 = min, f2 = weighted mean, f3 = Shannon entropy (base 2)."""
    if dist.total == 0:
        raise EmptyMultisetError("objectives of an empty distance multiset")
    return ObjectiveReport(
        f1_min=dist.min(),
        f2_avg=dist.mean(),
        f3_entropy_bits=dist.entropy_bits(),
        samples=dist.total,
    )


class SnapshotView:
    """Per-tag ordered chunk positions of one size class at one instant."""

    def __init__(self):
        self._positions: dict[int, list[int]] = {}
        self._sorted = True

    def add(self, tag: int, position: int) -> None:
        self._positions.setdefault(tag, []).append(position)
        self._sorted = False

    def positions(self) -> dict[int, list[int]]:
        if not self._sorted:
            for lst in self._positions.values():
                lst.sort()
            self._sorted = True
        return self._positions


class SlotTagHistory:
    """Ordered assignment rounds per (memory position, tag) pair."""

    def __init__(self):
        self._rounds: dict[tuple[int, int], list[int]] = {}

    def add(self, position: int, tag: int, rnd: int) -> None:
        lst = self._rounds.setdefault((position, tag), [])
        assert not lst or rnd > lst[-1], "assignment rounds must increase"
        lst.append(rnd)

    def items(self):
        return self._rounds.items()

    def __len__(self):
        return len(self._rounds)


def spatial_distances(snapshot) -> DistanceMultiset:
    """Adjacent same-tag position gaps of one snapshot (Eq. 1 contribution).

    Accepts a SnapshotView or a mapping tag -> strictly increasing positions.
    Tags appearing once contribute nothing.
    """
    positions = snapshot.positions() if isinstance(snapshot, SnapshotView) else snapshot
    ms = DistanceMultiset(unit=CHUNK_UNITS)
    for tag, pos in positions.items():
        if len(pos) < 2:
            continue
        arr = np.asarray(pos)
        if not (np.diff(arr) > 0).all():
            raise ValueError(f"positions for tag {tag} are not strictly increasing")
        for d in np.diff(arr):
            ms.counts[int(d)] += 1
    return ms


def temporal_distances(history: SlotTagHistory) -> DistanceMultiset:
    """Adjacent same-(slot, tag) round gaps over the run (Eq. 2 contribution)."""
    ms = DistanceMultiset(unit=ROUND_UNITS)
    for (_pos, _tag), rounds in history.items():
        if len(rounds) < 2:
            continue
        for d in np.diff(np.asarray(rounds)):
            ms.counts[int(d)] += 1
    return ms


# -- closed-form entropies --------------------------------------------------

def geometric_entropy(p: float) -> float:
    """Entropy in bits of the geometric distribution P(X=k) = (1-p)^(k-1) p.

    Closed form [-(1-p) log2(1-p) - p log2 p] / p, which equals the infinite
    series; 0 at p = 1 (deterministic distribution).
    """
    if not 0.0 < p <= 1.0:
        raise DomainError(f"geometric parameter must be in (0, 1], got {p}")
    if p == 1.0:
        return 0.0
    q = 1.0 - p
    return (-q * math.log2(q) - p * math.log2(p)) / p


def triangular_entropy(n: int = 256) -> float:
    """Entropy in bits of Z2 - Z1 for Z1, Z2 independent uniform on 0..n-1.

    The pmf is P(k) = (n - |k|) / n^2 for |k| <= n-1, summed directly.
    """
    assert n >= 2
    k = np.arange(-(n - 1), n)
    pmf = (n - np.abs(k)) / float(n * n)
    return float(-(pmf * np.log2(pmf)).sum())


@dataclass
class SpatialModelReport:
    """Closed-form spatial collision-distance profile of the clustered layout."""

    density: float
    min_chunks: int
    avg_chunks: float
    entropy_bound_bits: float

    def as_dict(self):
        return {
            "density": self.density,
            "min_chunks": self.min_chunks,
            "avg_chunks": self.avg_chunks,
            "entropy_bound_bits": self.entropy_bound_bits,
        }


def cluster_spatial_model(density: float, slots: int = 256) -> SpatialModelReport:
    """Distance model slots*D + (Z2-Z1): D geometric with p=1/d, Z uniform.

    Minimum is one cluster (slots chunks), average is slots*d chunks, and the
    entropy bound is H(Z2-Z1) + H(G(1/d)) since the two draws are independent.
    """
    if density < 1:
        raise DomainError("density must be >= 1")
    return SpatialModelReport(
        density=density,
        min_chunks=slots,
        avg_chunks=slots * density,
        entropy_bound_bits=triangular_entropy(slots) + geometric_entropy(1.0 / density),
    )


# -- Monte Carlo temporal simulation ----------------------------------------

@dataclass
class TemporalSimResult:
    strategy: str
    rounds: int
    samples: DistanceMultiset
    min: int | None
    avg: float | None
    p25: int | None
    entropy_bits: float | None

    def as_dict(self):
        return {
            "strategy": self.strategy,
            "rounds": self.rounds,
            "samples": self.samples.total,
            "min": self.min,
            "avg": self.avg,
            "p25": self.p25,
            "entropy_bits": self.entropy_bits,
        }


class _GapAccumulator:
    """Histogram builder that batches bincounts to keep rounds cheap."""

    def __init__(self, flush_every: int = 2048):
        self._pending: list[np.ndarray] = []
        self._flush_every = flush_every
        self.counts = np.zeros(1, dtype=np.int64)

    def add(self, gaps: np.ndarray) -> None:
        self._pending.append(gaps)
        if len(self._pending) >= self._flush_every:
            self.flush()

    def flush(self) -> np.ndarray:
        if self._pending:
            gaps = np.concatenate(self._pending)
            self._pending.clear()
            top = int(gaps.max())
            if top >= self.counts.size:
                self.counts = np.concatenate(
                    (self.counts, np.zeros(top + 1 - self.counts.size, dtype=np.int64)))
            self.counts += np.bincount(gaps, minlength=self.counts.size)
        return self.counts


def monte_carlo_temporal(strategy: str, rounds: int, rng, *,
                         allocatable: int = 239, quarantine: int = 16,
                         random_slots: int = 256, random_select_max: int = 240,
                         tag_space: int = 256) -> TemporalSimResult:
    """Round-gap distribution between identical tags on one simulated cluster.

    Each round re-tags a uniformly random subset of chunks (subset size
    uniform over 1..max selectable) and records, per chunk, the gap in rounds
    since it last held the same tag.

    * ``circular-shift``: ``allocatable`` chunks hold distinct tags drawn
      from 1..tag_space-1; the quarantine tags plus the selected chunks' tags
      form a ring (quarantine first, then chunks by ascending index) that
      shifts one position right.  No gap can be shorter than the quarantine
      length.
    * ``random``: ``random_slots`` independent chunks; every selected chunk
      draws a fresh uniform tag from the full tag space, so gaps follow a
      geometric-like law with mean tag_space / E[selected fraction].
    """
    acc = _GapAccumulator()
    if strategy == CIRCULAR_SHIFT:
        perm = rng.permutation(np.arange(1, tag_space))
        slot_tags = perm[:allocatable].copy()
        quar = perm[allocatable:allocatable + quarantine].copy()
        last = np.full((allocatable, tag_space), -1, dtype=np.int64)
        for r in range(1, rounds + 1):
            k = int(rng.integers(1, allocatable + 1))
            sel = np.sort(rng.choice(allocatable, size=k, replace=False))
            ring = np.concatenate((quar, slot_tags[sel]))
            ring = np.roll(ring, 1)
            quar = ring[:quarantine]
            fresh = ring[quarantine:]
            slot_tags[sel] = fresh
            prev = last[sel, fresh]
            gaps = r - prev[prev >= 0]
            if gaps.size:
                acc.add(gaps)
            last[sel, fresh] = r
    elif strategy == RANDOM_RETAG:
        last = np.full((random_slots, tag_space), -1, dtype=np.int64)
        for r in range(1, rounds + 1):
            k = int(rng.integers(1, random_select_max + 1))
            sel = rng.choice(random_slots, size=k, replace=False)
            fresh = rng.integers(0, tag_space, size=k)
            prev = last[sel, fresh]
            gaps = r - prev[prev >= 0]
            if gaps.size:
                acc.add(gaps)
            last[sel, fresh] = r
    else:
        raise ValueError(f"unknown temporal strategy {strategy!r}")

    samples = DistanceMultiset.from_count_array(acc.flush(), unit=ROUND_UNITS)
    if samples.total == 0:
        return TemporalSimResult(strategy, rounds, samples, None, None, None, None)
    return TemporalSimResult(
        strategy=strategy,
        rounds=rounds,
        samples=samples,
        min=samples.min(),
        avg=samples.mean(),
        p25=samples.percentile(0.25),
        entropy_bits=samples.entropy_bits(),
    )
