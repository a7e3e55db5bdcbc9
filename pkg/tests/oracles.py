"""Independent loop-based re-implementations of the evaluation metrics.

Deliberately written without numpy and without sharing code with the package
so the two can cross-check each other.  Inputs are plain lists of integer
labels in rank order (best first) unless noted.
"""

from fractions import Fraction


def oracle_sort(scores):
    """Rank order by descending score, ties by ascending original index."""
    return [i for _, i in sorted(((-s, i) for i, s in enumerate(scores)))]


def oracle_ap(labels):
    rel = [1 if g > 0 else 0 for g in labels]
    n_rel = sum(rel)
    if n_rel == 0:
        return 0.0
    total = 0.0
    hits = 0
    for rank, r in enumerate(rel, start=1):
        if r:
            hits += 1
            total += hits / rank
    return total / n_rel


def oracle_ap_exact(labels):
    """AP as an exact rational, for extremal-ordering comparisons."""
    rel = [1 if g > 0 else 0 for g in labels]
    n_rel = sum(rel)
    if n_rel == 0:
        return Fraction(0)
    total = Fraction(0)
    hits = 0
    for rank, r in enumerate(rel, start=1):
        if r:
            hits += 1
            total += Fraction(hits, rank)
    return total / n_rel


def oracle_rr(labels):
    for rank, g in enumerate(labels, start=1):
        if g > 0:
            return 1.0 / rank
    return 0.0


def oracle_p_at_k(labels, k):
    return sum(1 for g in labels[:k] if g > 0) / k


def oracle_err_at_k(labels, k, g_max):
    err = 0.0
    not_stopped = 1.0
    for rank, g in enumerate(labels[:k], start=1):
        gain = (2**g - 1) / 2**g_max
        err += not_stopped * gain / rank
        not_stopped *= 1.0 - gain
    return err


def oracle_avg_rec(labels):
    rel = [1 if g > 0 else 0 for g in labels]
    n_rel = sum(rel)
    if n_rel == 0:
        return 0.0
    total = 0.0
    hits = 0
    for r in rel:
        hits += r
        total += hits / n_rel
    return total / len(labels)


def oracle_pair_count(labels):
    """Number of (higher label, lower label) ordered pairs in one group."""
    n = 0
    for i, gi in enumerate(labels):
        for j, gj in enumerate(labels):
            if i != j and gi > gj:
                n += 1
    return n
