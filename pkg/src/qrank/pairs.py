"""Discordant candidate pairs, the training unit shared by all pairwise rankers.

Every pair is canonicalized so the first index carries the strictly higher
label; the pairwise target is therefore always +1 and only one direction per
unordered pair is stored.  Pairs never cross query boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, QueryGroup

__all__ = [
    "PairwiseSample",
    "generate_pairs",
    "dataset_pairs",
    "count_pairs",
    "pairwise_accuracy",
]


@dataclass
class PairwiseSample:
    """An ordered pair (u better than v) within one query group.

    u and v index candidates; whether they are group-local or positions in
    the stacked dataset matrix depends on the generating function.  `weight`
    is the distribution mass boosting places on the pair; it starts at 1.
    """

    qid: int
    u: int
    v: int
    y: int = 1
    weight: float = 1.0


def generate_pairs(group: QueryGroup) -> list[PairwiseSample]:
    """All label-discordant pairs of one group, u/v local candidate indices.

    Emitted in (u ascending, v ascending) order for determinism.
    """
    labels = group.labels
    out = []
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] > labels[j]:
                out.append(PairwiseSample(group.qid, i, j))
            elif labels[j] > labels[i]:
                out.append(PairwiseSample(group.qid, j, i))
    out.sort(key=lambda p: (p.u, p.v))
    return out


def dataset_pairs(ds: Dataset) -> list[PairwiseSample]:
    """Pairs for every group with u/v shifted to stacked-matrix positions."""
    out = []
    for offset, group in zip(ds.group_offsets(), ds.groups):
        for p in generate_pairs(group):
            out.append(PairwiseSample(p.qid, p.u + offset, p.v + offset))
    return out


def count_pairs(ds: Dataset) -> int:
    """Discordant pair count via label-value counts, no enumeration.

    Per group this is the sum over label values a > b of count(a) * count(b).
    """
    total = 0
    for group in ds.groups:
        values, counts = np.unique(group.labels, return_counts=True)
        for i in range(len(values)):
            for j in range(i + 1, len(values)):
                total += int(counts[i] * counts[j])
    return total


def pairwise_accuracy(scores, pairs: list[PairwiseSample]) -> float:
    """Fraction of pairs scored in the right order; score ties count 0.5."""
    if not pairs:
        raise ValueError("no pairs to score")
    scores = np.asarray(scores, dtype=float)
    correct = 0.0
    for p in pairs:
        su, sv = scores[p.u], scores[p.v]
        if su > sv:
            correct += 1.0
        elif su == sv:
            correct += 0.5
    return correct / len(pairs)
