"""Boosting rankers: RankBoost over pair distributions, AdaRank over queries.

RankBoost minimizes the exponential pairwise loss sum_p exp(-(f(x_u)-f(x_v)))
with threshold-stump weak learners.  Each round selects the stump maximizing
r = sum_p D(p)(h(x_u)-h(x_v)) under the current pair distribution D, weights
it alpha = 0.5*ln((1+r)/(1-r)), and reweights D toward still-misordered
pairs.  A held-out metric is tracked per round and the best-round prefix is
the returned ensemble.

AdaRank boosts single-feature weak rankers against a query distribution:
each round picks the feature with the best P-weighted per-query metric,
then shifts P toward queries the growing ensemble still ranks poorly.  Both
trainers are fully deterministic given their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, format_real, split_tail
from .metrics import per_query_metric, rank_by_score
from .pairs import dataset_pairs

__all__ = [
    "Stump",
    "BoostTerm",
    "BoostRecord",
    "BoostEnsemble",
    "train_rankboost",
    "train_adarank",
    "score_ensemble",
    "save_boost_model",
    "load_boost_model",
]

R_CLAMP = 1.0 - 1e-10


@dataclass(frozen=True)
class Stump:
    """Binary weak ranker: h(x) = 1 iff direction*x[fid] > direction*threshold."""

    fid: int  # 1-based feature id
    threshold: float
    direction: int  # +1 or -1

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        col = np.atleast_2d(x)[:, self.fid - 1]
        return (self.direction * col > self.direction * self.threshold).astype(float)


@dataclass(frozen=True)
class BoostTerm:
    """One weighted weak ranker; threshold/direction are None for AdaRank."""

    alpha: float
    fid: int
    threshold: float | None = None
    direction: int | None = None


@dataclass
class BoostRecord:
    """Per-round training history kept for inspection and tests."""

    loss_trace: list[float] = field(default_factory=list)  # rankboost: Eq-style pair loss
    metric_trace: list[float] = field(default_factory=list)
    selected_fids: list[int] = field(default_factory=list)
    distribution_sums: list[float] = field(default_factory=list)
    distribution_trace: list[np.ndarray] = field(default_factory=list)  # adarank P per round
    best_round: int = 0
    stopped_early: bool = False


@dataclass
class BoostEnsemble:
    """f(x) = sum_t alpha_t * h_t(x) with kind-specific weak rankers."""

    kind: str  # rankboost | adarank
    dim: int
    terms: list[BoostTerm]
    record: BoostRecord | None = None

    def score_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {x.shape[1]}")
        scores = np.zeros(len(x))
        for t in self.terms:
            if self.kind == "rankboost":
                h = Stump(t.fid, t.threshold, t.direction).evaluate(x)
            else:
                h = x[:, t.fid - 1]
            scores += t.alpha * h
        return scores

    def score(self, x) -> float:
        return float(self.score_matrix(np.asarray(x, dtype=float)[None, :])[0])


def score_ensemble(model: BoostEnsemble, x) -> float:
    return model.score(x)


def _ranked_lists(ds: Dataset, scores: np.ndarray):
    return [rank_by_score(g, s) for g, s in zip(ds.groups, ds.split_scores(scores))]


def _dataset_metric(name: str, ds: Dataset, scores: np.ndarray, g_max: int) -> float:
    return float(per_query_metric(name, _ranked_lists(ds, scores), g_max).mean())


def _best_stump(
    x: np.ndarray, pi: np.ndarray, orders: list[np.ndarray], midpoints: list[np.ndarray]
) -> tuple[Stump | None, float]:
    """Signed-r argmax over all (feature, midpoint threshold, direction).

    r for direction -1 at a threshold is the negation of direction +1 there
    (candidate weights sum to zero), so scanning +1 suffices.  Ties keep the
    lowest feature id, then the lowest threshold.
    """
    best_r = 0.0
    best: Stump | None = None
    for f in range(x.shape[1]):
        thr = midpoints[f]
        if len(thr) == 0:
            continue
        order = orders[f]
        # suffix[j] = sum of pi over candidates ranked > j-th distinct cut
        suffix = np.cumsum(pi[order][::-1])[::-1]
        col = x[order, f]
        cut_pos = np.flatnonzero(col[:-1] != col[1:]) + 1
        r_plus = suffix[cut_pos]
        for r, t in zip(r_plus, thr):
            signed, direction = (r, 1) if r >= 0.0 else (-r, -1)
            if signed > best_r:
                best_r = signed
                best = Stump(f + 1, float(t), direction)
    return best, best_r


def train_rankboost(
    ds: Dataset,
    iterations: int = 300,
    metric: str = "err@10",
    valid: Dataset | None = None,
) -> BoostEnsemble:
    """Boost threshold stumps on pair distributions.

    When no validation set is given, the last fifth of the query groups is
    held out for round selection and training uses the rest (datasets with
    fewer than five groups validate on the training data itself).  The
    returned ensemble is the prefix up to the best validation round;
    `record` keeps the full traces.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if valid is None:
        if ds.n_queries >= 5:
            train, valid = split_tail(ds, max(1, ds.n_queries // 5))
        else:
            train = valid = ds
    else:
        train = ds

    pairs = dataset_pairs(train)
    if not pairs:
        raise ValueError("no discordant pairs; nothing to rank")
    x = train.matrix()
    u = np.array([p.u for p in pairs])
    v = np.array([p.v for p in pairs])
    n_pairs = len(pairs)
    g_max = int(ds.labels.max(initial=0))

    orders = [np.argsort(x[:, f], kind="stable") for f in range(train.dim)]
    midpoints = []
    for f in range(train.dim):
        col = x[orders[f], f]
        distinct = np.flatnonzero(col[:-1] != col[1:])
        midpoints.append((col[distinct] + col[distinct + 1]) / 2.0)

    d = np.full(n_pairs, 1.0 / n_pairs)
    margins = np.zeros(n_pairs)  # f(x_u) - f(x_v) per training pair
    valid_x = valid.matrix()
    valid_scores = np.zeros(len(valid_x))
    record = BoostRecord()
    terms: list[BoostTerm] = []

    for _ in range(iterations):
        pi = np.zeros(len(x))
        np.add.at(pi, u, d)
        np.add.at(pi, v, -d)
        stump, r = _best_stump(x, pi, orders, midpoints)
        if stump is None or r == 0.0:
            record.stopped_early = True
            break
        r = min(r, R_CLAMP)
        alpha = 0.5 * math.log((1.0 + r) / (1.0 - r))
        terms.append(BoostTerm(alpha, stump.fid, stump.threshold, stump.direction))
        record.selected_fids.append(stump.fid)

        h = stump.evaluate(x)
        margins += alpha * (h[u] - h[v])
        record.loss_trace.append(float(np.exp(-margins).sum()))
        d = np.exp(-margins)
        d /= d.sum()
        record.distribution_sums.append(float(d.sum()))

        valid_scores += alpha * stump.evaluate(valid_x)
        record.metric_trace.append(_dataset_metric(metric, valid, valid_scores, g_max))

    if not terms:
        raise ValueError("no informative stump found on the training pairs")
    best = int(np.argmax(record.metric_trace))  # earliest round wins ties
    record.best_round = best + 1
    return BoostEnsemble("rankboost", ds.dim, terms[: best + 1], record)


def train_adarank(
    ds: Dataset,
    rounds: int = 500,
    tolerance: float = 0.002,
    max_consecutive: int = 5,
    metric: str = "map",
) -> BoostEnsemble:
    """Boost single-feature rankers against a query distribution.

    Stops when a round improves the training metric by less than tolerance
    (a worsening round is dropped before stopping) or when one feature is
    selected max_consecutive times in a row with unchanged performance.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if max_consecutive < 1:
        raise ValueError(f"max_consecutive must be >= 1, got {max_consecutive}")
    if ds.n_queries < 1:
        raise ValueError("empty dataset")
    n_q, dim = ds.n_queries, ds.dim
    g_max = int(ds.labels.max(initial=0))
    x = ds.matrix()

    # E[q, f]: per-query metric when ranking by feature f alone
    e_matrix = np.empty((n_q, dim))
    for f in range(dim):
        rls = _ranked_lists(ds, x[:, f])
        e_matrix[:, f] = per_query_metric(metric, rls, g_max)

    p = np.full(n_q, 1.0 / n_q)
    w = np.zeros(dim)  # the ensemble is linear in the features
    record = BoostRecord()
    terms: list[BoostTerm] = []
    prev_metric = _dataset_metric(metric, ds, np.zeros(len(x)), g_max)
    streak = 0

    for _ in range(rounds):
        record.distribution_trace.append(p.copy())
        weighted = p @ e_matrix
        fid = int(np.argmax(weighted)) + 1  # argmax takes the lowest id on ties
        e_sel = e_matrix[:, fid - 1]
        num = float(p @ (1.0 + e_sel))
        den = max(float(p @ (1.0 - e_sel)), 1e-10)
        alpha = 0.5 * math.log(num / den)
        terms.append(BoostTerm(alpha, fid))
        record.selected_fids.append(fid)
        w[fid - 1] += alpha

        ensemble_e = per_query_metric(metric, _ranked_lists(ds, x @ w), g_max)
        cur_metric = float(ensemble_e.mean())
        record.metric_trace.append(cur_metric)
        p = np.exp(-ensemble_e)
        p /= p.sum()
        record.distribution_sums.append(float(p.sum()))

        if cur_metric - prev_metric < tolerance:
            if cur_metric < prev_metric:
                terms.pop()  # never end on a worsening round
            record.stopped_early = True
            break
        if record.selected_fids[-2:-1] == [fid] and cur_metric == prev_metric:
            streak += 1
        else:
            streak = 1
        if streak >= max_consecutive:
            record.stopped_early = True
            break
        prev_metric = cur_metric

    record.best_round = len(terms)
    return BoostEnsemble("adarank", dim, terms, record)


def save_boost_model(model: BoostEnsemble, path) -> None:
    """Text form: header then one `alpha= fid= [thr= dir=]` line per term."""
    if model.kind not in ("rankboost", "adarank"):
        raise ValueError(f"unknown ensemble kind {model.kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"boost {model.kind} dim={model.dim} terms={len(model.terms)}\n")
        for t in model.terms:
            line = f"alpha={format_real(t.alpha)} fid={t.fid}"
            if model.kind == "rankboost":
                sign = "+1" if t.direction > 0 else "-1"
                line += f" thr={format_real(t.threshold)} dir={sign}"
            fh.write(line + "\n")


def load_boost_model(path) -> BoostEnsemble:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("boost "):
        raise ValueError(f"{path}: not a boost model file")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError(f"{path}: bad header {lines[0]!r}")
    kind = head[1]
    if kind not in ("rankboost", "adarank"):
        raise ValueError(f"{path}: unknown ensemble kind {kind!r}")
    fields = dict(part.split("=", 1) for part in head[2:])
    dim = int(fields["dim"])
    n_terms = int(fields["terms"])
    terms = []
    for lineno, line in enumerate(lines[1:], start=2):
        kv = dict(part.split("=", 1) for part in line.split())
        if "alpha" not in kv or "fid" not in kv:
            raise ValueError(f"{path}:{lineno}: expected alpha= and fid=")
        if kind == "rankboost":
            terms.append(
                BoostTerm(
                    float(kv["alpha"]), int(kv["fid"]), float(kv["thr"]), int(kv["dir"])
                )
            )
        else:
            terms.append(BoostTerm(float(kv["alpha"]), int(kv["fid"])))
    if len(terms) != n_terms:
        raise ValueError(f"{path}: header says {n_terms} terms, found {len(terms)}")
    return BoostEnsemble(kind, dim, terms)
