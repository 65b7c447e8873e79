"""Randomized allocation workloads used for warm-up, fuzzing, and traces."""

from __future__ import annotations

import math


def random_ops(model, rng, n_ops, *, min_size=0x10, max_size=0x10000,
               free_prob=0.5, live=None):
    """Drive ``n_ops`` random malloc/free events through an allocator model.

    Sizes are log-uniform over [min_size, max_size]; each event frees a
    uniformly chosen live chunk with probability ``free_prob`` (when one
    exists), otherwise allocates.  Returns the list of live tagged addresses.
    """
    live = [] if live is None else live
    lo, hi = math.log(min_size), math.log(max_size)
    for _ in range(n_ops):
        if live and rng.random() < free_prob:
            i = int(rng.integers(len(live)))
            live[i], live[-1] = live[-1], live[i]
            model.deallocate(live.pop())
        else:
            size = int(math.exp(rng.uniform(lo, hi)))
            live.append(model.allocate(size))
    return live


def synthesize_trace(rng, n_events, *, min_size=0x10, max_size=0x10000,
                     free_prob=0.5):
    """Yield malloc/free trace events as dicts with stable integer ids."""
    live = []
    next_id = 1
    lo, hi = math.log(min_size), math.log(max_size)
    for _ in range(n_events):
        if live and rng.random() < free_prob:
            i = int(rng.integers(len(live)))
            live[i], live[-1] = live[-1], live[i]
            yield {"op": "free", "id": live.pop()}
        else:
            size = int(math.exp(rng.uniform(lo, hi)))
            yield {"op": "malloc", "id": next_id, "size": size}
            live.append(next_id)
            next_id += 1
