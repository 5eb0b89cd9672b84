"""Independent reference implementations used to cross-check the library.

These deliberately avoid the package's own vector helpers: distances use
np.dot / np.linalg.norm and the filtering scan is re-derived from its
definition, so agreement between library and oracle is meaningful.
"""

import numpy as np


def naive_cosine_distance(x, y):
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < 1e-30 or ny < 1e-30:
        return 2.0
    return min(max(1.0 - float(np.dot(x, y)) / (nx * ny), 0.0), 2.0)


def naive_filtered_aggregate(grads, tau, pivot):
    """Step-by-step agreement scan: seed with the pivot, visit the other
    micro-gradients in ascending index order, accept when the cosine
    distance to the current running sum is <= tau, and average the accepted
    set (None if only the pivot remains)."""
    g = np.array(grads[pivot], dtype=np.float64)
    count = 1
    mask = [False] * len(grads)
    mask[pivot] = True
    distances = []
    for i in range(len(grads)):
        if i == pivot:
            continue
        d = naive_cosine_distance(grads[i], g)
        distances.append(d)
        if d <= tau:
            g = g + grads[i]
            count += 1
            mask[i] = True
    gradient = g / count if count > 1 else None
    return gradient, count, mask, distances, count == 1


def naive_mean(grads):
    total = np.array(grads[0], dtype=np.float64)
    for g in grads[1:]:
        total = total + g
    return total / len(grads)


def finite_difference_grad(loss_fn, flat, indices, h=1e-5):
    """Central differences of loss_fn (a function of the flat parameter
    vector) at the given coordinates."""
    out = {}
    for idx in indices:
        hi = flat.copy()
        lo = flat.copy()
        hi[idx] += h
        lo[idx] -= h
        out[idx] = (loss_fn(hi) - loss_fn(lo)) / (2 * h)
    return out
