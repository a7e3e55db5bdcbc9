"""Rank-order evaluation over query groups.

Implements AP/MAP, MRR, P@k, cascade ERR@k and AvgRec (mean recall over all
rank cutoffs).  All metrics consume a RankedList, the result of a stable
descending sort by score with ties broken by ascending original index, so
equal-score inputs always evaluate identically.

Binary metrics treat label > 0 as relevant; ERR uses the integer grades
through the gain map (2^g - 1) / 2^g_max.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .data import Dataset, QueryGroup, format_real

__all__ = [
    "RankedList",
    "QueryMetrics",
    "EvaluationReport",
    "rank_by_score",
    "ranked_list",
    "average_precision",
    "mean_average_precision",
    "reciprocal_rank",
    "precision_at_k",
    "err_at_k",
    "avg_rec",
    "evaluate_run",
    "metric_names",
    "per_query_metric",
    "aggregate_metric",
    "write_run_file",
    "read_run_file",
    "scores_from_run",
    "format_report_kv",
    "parse_report_kv",
    "format_report_table",
]

REPORT_KEYS = ("MAP", "MRR", "P@1", "P@5", "ERR@10", "AvgRec")


@dataclass(frozen=True)
class RankedList:
    """A query's candidates in evaluation order (best score first)."""

    qid: int
    indices: np.ndarray  # original candidate positions, rank order
    scores: np.ndarray  # non-increasing
    labels: np.ndarray  # integer grades, rank order

    def __len__(self) -> int:
        return len(self.indices)


def ranked_list(qid: int, labels, scores) -> RankedList:
    """Sort (labels, scores) into a RankedList; ties keep original index order."""
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError(f"labels {labels.shape} and scores {scores.shape} must be equal 1-d")
    if not np.all(np.isfinite(scores)):
        raise ValueError(f"qid {qid}: non-finite score")
    order = np.argsort(-scores, kind="stable")
    return RankedList(qid, order, scores[order], labels[order])


def rank_by_score(group: QueryGroup, scores) -> RankedList:
    """Rank one query group by a score vector aligned with its candidates."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(group),):
        raise ValueError(
            f"qid {group.qid}: {len(group)} candidates but scores shape {scores.shape}"
        )
    return ranked_list(group.qid, group.labels, scores)


def average_precision(rl: RankedList) -> float:
    """Mean of Precision@r over ranks r holding a relevant item.

    A list with no relevant items scores 0.0; evaluate_run counts these so
    reports can flag them.
    """
    rel = rl.labels > 0
    n_rel = int(rel.sum())
    if n_rel == 0:
        return 0.0
    ranks = np.arange(1, len(rl) + 1)
    prec_at_hit = np.cumsum(rel)[rel] / ranks[rel]
    return float(prec_at_hit.sum() / n_rel)


def mean_average_precision(rls: list[RankedList]) -> float:
    if not rls:
        raise ValueError("no queries")
    return float(np.mean([average_precision(rl) for rl in rls]))


def reciprocal_rank(rl: RankedList) -> float:
    """1 / rank of the first relevant item; 0.0 when none is relevant."""
    hits = np.flatnonzero(rl.labels > 0)
    return 0.0 if len(hits) == 0 else 1.0 / (int(hits[0]) + 1)


def precision_at_k(rl: RankedList, k: int) -> float:
    """Relevant count in the top min(k, n), divided by k (not n)."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    return float((rl.labels[:k] > 0).sum() / k)


def err_at_k(rl: RankedList, k: int, g_max: int | None = None) -> float:
    """Cascade expected reciprocal rank truncated at k.

    Each rank r contributes (1/r) * R_r * prod_{i<r}(1 - R_i) with
    R = (2^g - 1) / 2^g_max: the reciprocal rank weighted by the chance the
    reader stops there.  g_max defaults to the list's own maximum grade.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    top = rl.labels[:k]
    observed = int(rl.labels.max(initial=0))
    if g_max is None:
        g_max = observed
    elif g_max < observed:
        raise ValueError(f"g_max {g_max} below observed label {observed}")
    gains = (np.exp2(top) - 1.0) / float(2**g_max)
    err = 0.0
    carry = 1.0
    for r, gain in enumerate(gains, start=1):
        err += carry * gain / r
        carry *= 1.0 - gain
    return float(err)


def avg_rec(rl: RankedList) -> float:
    """Mean of Recall@r over r = 1..n; 0.0 when no item is relevant."""
    rel = rl.labels > 0
    n_rel = int(rel.sum())
    if n_rel == 0:
        return 0.0
    return float(np.mean(np.cumsum(rel) / n_rel))


@dataclass(frozen=True)
class QueryMetrics:
    """One row of metric values; used per query and for aggregates."""

    ap: float
    rr: float
    p1: float
    p5: float
    err10: float
    avgrec: float

    def as_dict(self) -> dict[str, float]:
        return dict(zip(REPORT_KEYS, (self.ap, self.rr, self.p1, self.p5, self.err10, self.avgrec)))


@dataclass(frozen=True)
class EvaluationReport:
    per_query: dict[int, QueryMetrics]
    aggregate: QueryMetrics
    n_queries: int
    n_no_relevant: int  # queries whose AP/AvgRec defaulted to 0.0


def _query_metrics(rl: RankedList, g_max: int) -> QueryMetrics:
    return QueryMetrics(
        ap=average_precision(rl),
        rr=reciprocal_rank(rl),
        p1=precision_at_k(rl, 1),
        p5=precision_at_k(rl, 5),
        err10=err_at_k(rl, 10, g_max),
        avgrec=avg_rec(rl),
    )


def _as_ranked_lists(ds: Dataset, scores) -> list[RankedList]:
    if ds.n_queries == 0:
        raise ValueError("empty dataset")
    if isinstance(scores, np.ndarray) and scores.ndim == 1:
        per_group = ds.split_scores(scores)
    else:
        per_group = [np.asarray(s, dtype=float) for s in scores]
        if len(per_group) != ds.n_queries:
            raise ValueError(f"{ds.n_queries} groups but {len(per_group)} score vectors")
    return [rank_by_score(g, s) for g, s in zip(ds.groups, per_group)]


def evaluate_run(ds: Dataset, scores) -> EvaluationReport:
    """Score-per-candidate evaluation of a whole dataset.

    `scores` is either one flat vector over all candidates in file order or a
    list of per-group vectors.  ERR's g_max is the dataset-wide maximum label
    so every query is gained on the same scale.
    """
    rls = _as_ranked_lists(ds, scores)
    g_max = int(max(int(rl.labels.max(initial=0)) for rl in rls))
    per_query = {rl.qid: _query_metrics(rl, g_max) for rl in rls}
    rows = list(per_query.values())
    aggregate = QueryMetrics(
        ap=float(np.mean([m.ap for m in rows])),
        rr=float(np.mean([m.rr for m in rows])),
        p1=float(np.mean([m.p1 for m in rows])),
        p5=float(np.mean([m.p5 for m in rows])),
        err10=float(np.mean([m.err10 for m in rows])),
        avgrec=float(np.mean([m.avgrec for m in rows])),
    )
    n_no_rel = sum(1 for rl in rls if not (rl.labels > 0).any())
    return EvaluationReport(per_query, aggregate, ds.n_queries, n_no_rel)


_METRIC_RE = re.compile(r"^(map|mrr|avgrec|p@(\d+)|err@(\d+))$")


def metric_names() -> list[str]:
    return ["map", "mrr", "p@1", "p@5", "err@10", "avgrec"]


def _metric_fn(name: str):
    m = _METRIC_RE.match(name.lower().strip())
    if not m:
        raise ValueError(f"unknown metric {name!r}; try one of {metric_names()}")
    if m.group(2):
        k = int(m.group(2))
        return lambda rl, g_max: precision_at_k(rl, k)
    if m.group(3):
        k = int(m.group(3))
        return lambda rl, g_max: err_at_k(rl, k, g_max)
    return {
        "map": lambda rl, g_max: average_precision(rl),
        "mrr": lambda rl, g_max: reciprocal_rank(rl),
        "avgrec": lambda rl, g_max: avg_rec(rl),
    }[m.group(1)]


def per_query_metric(name: str, rls: list[RankedList], g_max: int | None = None) -> np.ndarray:
    """Evaluate one named metric per query; used by boosting weight updates."""
    fn = _metric_fn(name)
    if g_max is None:
        g_max = int(max(int(rl.labels.max(initial=0)) for rl in rls)) if rls else 0
    return np.array([fn(rl, g_max) for rl in rls])


def aggregate_metric(name: str, rls: list[RankedList], g_max: int | None = None) -> float:
    if not rls:
        raise ValueError("no queries")
    return float(per_query_metric(name, rls, g_max).mean())


def write_run_file(rls: list[RankedList], path) -> None:
    """Write `<qid> <candidate-index> <rank> <score>` lines, rank 1-based.

    Candidate indices are 0-based positions within the query group's file
    order; groups appear contiguously in list order.
    """
    if not rls:
        raise ValueError("no queries")
    with open(path, "w", encoding="utf-8") as fh:
        for rl in rls:
            for rank, (idx, score) in enumerate(zip(rl.indices, rl.scores), start=1):
                fh.write(f"{rl.qid} {idx} {rank} {format_real(score)}\n")


@dataclass(frozen=True)
class RunGroup:
    """One query's block of a run file, in rank order."""

    qid: int
    indices: np.ndarray
    scores: np.ndarray


def read_run_file(path) -> list[RunGroup]:
    rows: list[tuple[int, int, int, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 4:
                raise ValueError(f"{path}:{lineno}: expected '<qid> <index> <rank> <score>'")
            try:
                qid, idx, rank = int(tokens[0]), int(tokens[1]), int(tokens[2])
                score = float(tokens[3])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad run line {line!r}") from None
            if not math.isfinite(score):
                raise ValueError(f"{path}:{lineno}: non-finite score")
            rows.append((qid, idx, rank, score))
    if not rows:
        raise ValueError(f"{path}: empty run file")

    groups: list[RunGroup] = []
    start = 0
    seen: set[int] = set()
    for i in range(1, len(rows) + 1):
        if i == len(rows) or rows[i][0] != rows[start][0]:
            block = rows[start:i]
            qid = block[0][0]
            if qid in seen:
                raise ValueError(f"{path}: qid {qid} not contiguous")
            seen.add(qid)
            ranks = [r for _, _, r, _ in block]
            if ranks != list(range(1, len(block) + 1)):
                raise ValueError(f"{path}: qid {qid} ranks not 1..{len(block)}")
            idxs = [x for _, x, _, _ in block]
            if sorted(idxs) != list(range(len(block))):
                raise ValueError(f"{path}: qid {qid} indices not a permutation of 0..{len(block) - 1}")
            groups.append(
                RunGroup(qid, np.array(idxs), np.array([s for _, _, _, s in block]))
            )
            start = i
    return groups


def scores_from_run(ds: Dataset, run: list[RunGroup]) -> np.ndarray:
    """Invert a run file back into a flat score vector in dataset order."""
    if [g.qid for g in run] != ds.qids:
        raise ValueError("run file qids do not match dataset")
    flat = np.empty(ds.n_candidates)
    pos = 0
    for group, rg in zip(ds.groups, run):
        if len(rg.indices) != len(group):
            raise ValueError(f"qid {group.qid}: run block size {len(rg.indices)} != {len(group)}")
        block = np.empty(len(group))
        block[rg.indices] = rg.scores
        flat[pos : pos + len(group)] = block
        pos += len(group)
    return flat


def format_report_kv(report: EvaluationReport) -> str:
    """Machine-readable `<key> <fraction>` lines, one per aggregate metric."""
    vals = report.aggregate.as_dict()
    return "".join(f"{key} {format_real(vals[key])}\n" for key in REPORT_KEYS)


def parse_report_kv(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, val = line.partition(" ")
        out[key] = float(val)
    missing = [k for k in REPORT_KEYS if k not in out]
    if missing:
        raise ValueError(f"report missing keys {missing}")
    return out


def format_report_table(report: EvaluationReport) -> str:
    """Human-readable table: each metric as a fraction and scaled by 100."""
    vals = report.aggregate.as_dict()
    lines = [
        f"queries evaluated : {report.n_queries}",
        f"no relevant items : {report.n_no_relevant}",
        "",
        f"{'metric':<8} {'fraction':>10} {'x100':>9}",
    ]
    for key in REPORT_KEYS:
        lines.append(f"{key:<8} {vals[key]:>10.6f} {100 * vals[key]:>9.3f}")
    return "\n".join(lines) + "\n"
