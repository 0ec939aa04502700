"""Pure-python fallback for the hot loops in fracgauss._kernels.

Both backends implement the same two entry points with identical argument
conventions so they can be swapped at import time (see backend.py):

  chaos_chain(mats, shifts, idx, x0, burn_in, out)
  min_plus_step(prev, cost, out)
"""
import numpy as np


def chaos_chain(mats, shifts, idx, x0, burn_in, out):
    """Iterate x <- mats[i] @ x + shifts[i] along idx, recording the states
    after the first burn_in steps into out (len(idx) - burn_in rows)."""
    x = np.array(x0, dtype=float)
    for k in range(idx.shape[0]):
        i = idx[k]
        x = mats[i] @ x + shifts[i]
        if k >= burn_in:
            out[k - burn_in] = x
    return out


def min_plus_step(prev, cost, out):
    """One layer of the interval-cover DP.

    prev[i] is the best cost of covering the first i atoms with k-1 blocks;
    cost[i, j] is the cost of a block spanning atoms i..j (inf for i > j).
    Writes out[j] = min(prev[j], min_i prev[i] + cost[i, j-1]).
    """
    a = cost.shape[0]
    out[0] = prev[0]
    stacked = prev[:a, None] + cost
    np.minimum(prev[1:], stacked.min(axis=0), out=out[1:])
    return out
