"""Pure-Python kernels; the fallback when the compiled module is absent."""
import numpy as np

IMPLEMENTATION = "python"


def cumulative_at(starts, ends, resolution, n):
    """Measure of the union of disjoint sorted intervals inside ``[0, k*resolution)``.

    Returns an int64 array of length ``n + 1`` for k = 0..n.
    """
    out = np.zeros(n + 1, dtype=np.int64)
    total = 0
    i = 0
    count = len(starts)
    for k in range(1, n + 1):
        t = k * resolution
        while i < count and ends[i] <= t:
            total += ends[i] - starts[i]
            i += 1
        partial = 0
        if i < count and starts[i] < t:
            partial = t - starts[i]
        out[k] = total + partial
    return out


def first_intersection(avail, resolution, budget, peer_budgets, peer_periods):
    """First k >= 1 with ``budget + sum(ceil(t/T)*C) <= avail[k]``, t = k*resolution; -1 if none."""
    m = len(peer_budgets)
    for k in range(1, len(avail)):
        t = k * resolution
        demand = budget
        for j in range(m):
            demand += -(-t // peer_periods[j]) * peer_budgets[j]
        if demand <= avail[k]:
            return k
    return -1
