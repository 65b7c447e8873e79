"""Intra-cluster tag initialization and circular-shift updating.

A cluster's usable tags are 1..255 (tag 0 marks cluster metadata and free
memory).  On first assignment every allocatable slot receives a distinct tag
from a random permutation; the leftover tags become the quarantine list.  On
cluster reuse the quarantine tags and the tags of currently freed slots form
a ring, ordered (quarantine order, then freed slots by ascending index), and
the ring is shifted one position: position i takes the tag formerly held at
i-1 (mod ring length).  Quarantine therefore lower-bounds the number of
rotations before any slot can see the same tag again.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .allocator import ClusterState

# slot status codes shared with the allocator
INFO, FREE, CACHED, INUSE = 0, 1, 2, 3


def init_cluster_tags(cluster: "ClusterState", rng) -> None:
    """Assign one distinct tag per allocatable slot of a fresh cluster.

    A uniformly random permutation of 1..255 fills the slots in ascending
    index order; the next ``quarantine_size`` values become the quarantine
    list.  The metadata area keeps tag 0 (shadow defaults to 0, so no shadow
    write is needed).
    """
    nslots = len(cluster.tags)
    allocatable = nslots - cluster.info_slots
    perm = rng.permutation(255) + 1          # values 1..255
    for i in range(allocatable):
        cluster.tags[cluster.info_slots + i] = int(perm[i])
    cluster.quarantine = [int(t) for t in perm[allocatable:allocatable + cluster.quarantine_size]]


def ring_members(cluster: "ClusterState") -> list[int]:
    """Slot indices currently in the rotation ring, ascending.

    Membership is computed at rotation time from current status: freed slots
    only; slots staged in the cache are pending hand-out and keep their tag.
    """
    status = cluster.status
    return [i for i in range(cluster.info_slots, len(status)) if status[i] == FREE]


def rotate_tags(cluster: "ClusterState") -> None:
    """One-position circular right shift over quarantine + freed-slot tags.

    Position i receives the tag formerly at position i-1 (mod ring length);
    in-use slots are untouched, so intra-cluster uniqueness is preserved and
    every freed slot's tag changes whenever the ring has length >= 2.
    """
    members = ring_members(cluster)
    ring = cluster.quarantine + [cluster.tags[i] for i in members]
    q = len(cluster.quarantine)
    shifted = ring[-1:] + ring[:-1]
    cluster.quarantine = shifted[:q]
    for pos, slot in enumerate(members):
        cluster.tags[slot] = shifted[q + pos]
    cluster.reuse_rounds += 1
    if cluster.rotation_log is not None:
        for slot in members:
            cluster.rotation_log.append((cluster.reuse_rounds, slot, cluster.tags[slot]))


def min_temporal_gap(quarantine_size: int) -> int:
    """Guaranteed lower bound, in cluster-reuse rounds, on same-slot tag reuse.

    A tag leaving a slot must traverse the full quarantine section of the
    ring before it can come back, so the gap is at least the quarantine
    size (simulations observe a slightly larger minimum, typically ~19 for
    16 quarantine tags).
    """
    assert quarantine_size >= 1
    return quarantine_size
