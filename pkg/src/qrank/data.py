"""Query-grouped ranking data: parsing, validation, conversion, splitting, writing.

Two plain-text formats are supported:

* grouped: ``<label> qid:<qid> <fid>:<value> ... [# comment]`` per line, with
  feature ids strictly ascending and all lines of one qid contiguous;
* flat: the same line grammar without the ``qid:`` token.

Feature vectors are densified to ``dim`` = the largest feature id seen in the
file; ids absent from a line become 0.0.  Lines that are blank or start with
``#`` carry no record and are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Candidate",
    "QueryGroup",
    "Dataset",
    "FlatRecord",
    "ParseError",
    "format_real",
    "parse_ranking_file",
    "parse_flat_file",
    "attach_query_ids",
    "flatten_records",
    "split_tail",
    "concat",
    "write_ranking_file",
    "write_flat_file",
]


class ParseError(ValueError):
    """A line violated the file grammar; carries file path and line number."""

    def __init__(self, path, lineno: int | None, reason: str):
        self.path = str(path)
        self.lineno = lineno
        self.reason = reason
        where = self.path if lineno is None else f"{self.path}:{lineno}"
        super().__init__(f"{where}: {reason}")


def format_real(x: float) -> str:
    """Shortest decimal that parses back to exactly the same float.

    Integral values drop the trailing ``.0`` (``2.0`` -> ``"2"``).
    """
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True, eq=False)
class Candidate:
    """One labeled feature vector within a query group."""

    label: int
    qid: int
    features: np.ndarray  # dense, length = Dataset.dim, read-only
    comment: str | None = None

    def __post_init__(self):
        self.features.flags.writeable = False

    def __eq__(self, other):
        if not isinstance(other, Candidate):
            return NotImplemented
        return (
            self.label == other.label
            and self.qid == other.qid
            and self.comment == other.comment
            and np.array_equal(self.features, other.features)
        )


@dataclass(eq=False)
class QueryGroup:
    """All candidates of one query, in file order."""

    qid: int
    candidates: list[Candidate]

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.candidates], dtype=np.int64)

    def matrix(self) -> np.ndarray:
        """Feature rows stacked into an (n, dim) array."""
        return np.stack([c.features for c in self.candidates])

    def __eq__(self, other):
        if not isinstance(other, QueryGroup):
            return NotImplemented
        return self.qid == other.qid and self.candidates == other.candidates


@dataclass(eq=False)
class Dataset:
    """Ordered query groups sharing one feature dimensionality."""

    groups: list[QueryGroup]
    dim: int

    @property
    def n_queries(self) -> int:
        return len(self.groups)

    @property
    def n_candidates(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def qids(self) -> list[int]:
        return [g.qid for g in self.groups]

    @property
    def labels(self) -> np.ndarray:
        return np.concatenate([g.labels for g in self.groups])

    def matrix(self) -> np.ndarray:
        """All feature rows stacked into an (n_candidates, dim) array."""
        return np.concatenate([g.matrix() for g in self.groups])

    def group_offsets(self) -> list[int]:
        """Start index of each group within the stacked candidate order."""
        offsets, pos = [], 0
        for g in self.groups:
            offsets.append(pos)
            pos += len(g)
        return offsets

    def split_scores(self, scores: np.ndarray) -> list[np.ndarray]:
        """Slice a flat score vector back into per-group vectors."""
        scores = np.asarray(scores, dtype=float)
        if scores.shape != (self.n_candidates,):
            raise ValueError(
                f"expected {self.n_candidates} scores, got shape {scores.shape}"
            )
        out, pos = [], 0
        for g in self.groups:
            out.append(scores[pos : pos + len(g)])
            pos += len(g)
        return out

    def validate(self) -> None:
        if not self.groups:
            raise ValueError("empty dataset")
        seen = set()
        for g in self.groups:
            if not g.candidates:
                raise ValueError(f"qid {g.qid}: empty query group")
            if g.qid in seen:
                raise ValueError(f"qid {g.qid}: duplicated across groups")
            seen.add(g.qid)
            for c in g.candidates:
                if c.qid != g.qid:
                    raise ValueError(f"qid {g.qid}: candidate carries qid {c.qid}")
                if c.label < 0:
                    raise ValueError(f"qid {g.qid}: negative label {c.label}")
                if c.features.shape != (self.dim,):
                    raise ValueError(
                        f"qid {g.qid}: feature length {c.features.shape} != dim {self.dim}"
                    )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.dim == other.dim and self.groups == other.groups


@dataclass(eq=False)
class FlatRecord:
    """A candidate before any query id is attached."""

    label: int
    features: np.ndarray
    comment: str | None = None

    def __eq__(self, other):
        if not isinstance(other, FlatRecord):
            return NotImplemented
        return (
            self.label == other.label
            and self.comment == other.comment
            and np.array_equal(self.features, other.features)
        )


def _split_comment(line: str) -> tuple[str, str | None]:
    if "#" in line:
        body, comment = line.split("#", 1)
        comment = comment.strip()
        return body, comment if comment else None
    return line, None


def _parse_label(token: str, path, lineno: int) -> int:
    try:
        label = int(token)
    except ValueError:
        raise ParseError(path, lineno, f"bad label {token!r}: not an integer") from None
    if label < 0:
        raise ParseError(path, lineno, f"negative label {label}")
    return label


def _parse_features(tokens: list[str], path, lineno: int) -> list[tuple[int, float]]:
    if not tokens:
        raise ParseError(path, lineno, "no features on line")
    feats = []
    prev_fid = 0
    for tok in tokens:
        fid_s, _, val_s = tok.partition(":")
        if not val_s:
            raise ParseError(path, lineno, f"bad feature token {tok!r}: expected <fid>:<value>")
        try:
            fid = int(fid_s)
        except ValueError:
            raise ParseError(path, lineno, f"bad feature id {fid_s!r}") from None
        if fid < 1:
            raise ParseError(path, lineno, f"feature id {fid} must be >= 1")
        if fid <= prev_fid:
            raise ParseError(
                path, lineno, f"feature ids not strictly ascending ({prev_fid} then {fid})"
            )
        try:
            val = float(val_s)
        except ValueError:
            raise ParseError(path, lineno, f"bad feature value {val_s!r}") from None
        if math.isnan(val) or math.isinf(val):
            raise ParseError(path, lineno, f"non-finite feature value {val_s!r}")
        feats.append((fid, val))
        prev_fid = fid
    return feats


def _densify(sparse: list[tuple[int, float]], dim: int) -> np.ndarray:
    vec = np.zeros(dim)
    for fid, val in sparse:
        vec[fid - 1] = val
    return vec


def parse_ranking_file(path) -> Dataset:
    """Parse a grouped ranking file into a Dataset.

    Lines of equal qid must be contiguous; a qid reappearing after another
    qid intervened signals an unsorted file and is rejected rather than
    re-sorted, so evaluation output order always matches the input file.
    """
    rows: list[tuple[int, int, list[tuple[int, float]], str | None]] = []
    max_fid = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            body, comment = _split_comment(line)
            tokens = body.split()
            if len(tokens) < 2:
                raise ParseError(path, lineno, "expected '<label> qid:<qid> <fid>:<value> ...'")
            label = _parse_label(tokens[0], path, lineno)
            qid_tok = tokens[1]
            if not qid_tok.startswith("qid:"):
                raise ParseError(path, lineno, f"expected qid token, got {qid_tok!r}")
            try:
                qid = int(qid_tok[4:])
            except ValueError:
                raise ParseError(path, lineno, f"bad qid {qid_tok[4:]!r}") from None
            if qid < 1:
                raise ParseError(path, lineno, f"qid {qid} must be positive")
            feats = _parse_features(tokens[2:], path, lineno)
            rows.append((label, qid, feats, comment))
            max_fid = max(max_fid, feats[-1][0])

    if not rows:
        raise ParseError(path, None, "empty dataset")

    groups: list[QueryGroup] = []
    closed: set[int] = set()
    for label, qid, feats, comment in rows:
        cand = Candidate(label, qid, _densify(feats, max_fid), comment)
        if groups and groups[-1].qid == qid:
            groups[-1].candidates.append(cand)
        else:
            if qid in closed:
                raise ParseError(
                    path, None, f"qid {qid} reappears after another qid; file must be grouped"
                )
            if groups:
                closed.add(groups[-1].qid)
            groups.append(QueryGroup(qid, [cand]))

    ds = Dataset(groups, max_fid)
    ds.validate()
    return ds


def parse_flat_file(path) -> list[FlatRecord]:
    """Parse a flat (qid-less) file into ordered records."""
    rows: list[tuple[int, list[tuple[int, float]], str | None]] = []
    max_fid = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            body, comment = _split_comment(line)
            tokens = body.split()
            if len(tokens) >= 2 and tokens[1].startswith("qid:"):
                raise ParseError(path, lineno, "unexpected qid token in flat format")
            if len(tokens) < 2:
                raise ParseError(path, lineno, "expected '<label> <fid>:<value> ...'")
            label = _parse_label(tokens[0], path, lineno)
            feats = _parse_features(tokens[1:], path, lineno)
            rows.append((label, feats, comment))
            max_fid = max(max_fid, feats[-1][0])
    if not rows:
        raise ParseError(path, None, "empty dataset")
    return [FlatRecord(label, _densify(feats, max_fid), comment) for label, feats, comment in rows]


def attach_query_ids(records: list[FlatRecord], group_size: int = 10) -> Dataset:
    """Group consecutive blocks of `group_size` records under qids 1, 2, ...

    The default of 10 matches data where every query carries exactly ten
    candidates; pass the true block size for anything else.
    """
    if group_size < 1:
        raise ValueError(f"group_size must be positive, got {group_size}")
    if not records:
        raise ValueError("empty record list")
    if len(records) % group_size != 0:
        raise ValueError(
            f"record count {len(records)} not divisible by group size {group_size}"
        )
    dim = len(records[0].features)
    for r in records:
        if len(r.features) != dim:
            raise ValueError("records have inconsistent feature lengths")
    groups = []
    for start in range(0, len(records), group_size):
        qid = 1 + start // group_size
        cands = [
            Candidate(r.label, qid, np.array(r.features), r.comment)
            for r in records[start : start + group_size]
        ]
        groups.append(QueryGroup(qid, cands))
    ds = Dataset(groups, dim)
    ds.validate()
    return ds


def flatten_records(ds: Dataset) -> list[FlatRecord]:
    """Drop qids, returning records in stacked candidate order."""
    return [
        FlatRecord(c.label, np.array(c.features), c.comment)
        for g in ds.groups
        for c in g.candidates
    ]


def split_tail(ds: Dataset, n_tail: int) -> tuple[Dataset, Dataset]:
    """Split off the last `n_tail` query groups, preserving order.

    The head must stay non-empty: n_tail < number of groups.
    """
    if n_tail < 1:
        raise ValueError(f"n_tail must be positive, got {n_tail}")
    if n_tail >= ds.n_queries:
        raise ValueError(
            f"n_tail {n_tail} must be smaller than the number of groups ({ds.n_queries})"
        )
    head = Dataset(ds.groups[: ds.n_queries - n_tail], ds.dim)
    tail = Dataset(ds.groups[ds.n_queries - n_tail :], ds.dim)
    return head, tail


def concat(head: Dataset, tail: Dataset) -> Dataset:
    """Rejoin two datasets with disjoint qids and equal dim."""
    if head.dim != tail.dim:
        raise ValueError(f"dim mismatch: {head.dim} vs {tail.dim}")
    ds = Dataset(head.groups + tail.groups, head.dim)
    ds.validate()
    return ds


def _feature_tokens(features: np.ndarray) -> list[str]:
    toks = [f"{fid + 1}:{format_real(v)}" for fid, v in enumerate(features) if v != 0.0]
    # an all-zero vector still needs one token to keep the line grammatical
    return toks or ["1:0"]


def _candidate_line(c: Candidate) -> str:
    parts = [str(c.label), f"qid:{c.qid}"] + _feature_tokens(c.features)
    line = " ".join(parts)
    if c.comment is not None:
        line += f" # {c.comment}"
    return line


def write_ranking_file(ds: Dataset, path) -> None:
    """Write the grouped format; zero features are omitted.

    Re-parsing reproduces labels, qids and nonzero features exactly.  The
    recovered dim is the largest nonzero feature id, so a dataset whose top
    feature column is entirely zero re-parses with a smaller dim.
    """
    ds.validate()
    with open(path, "w", encoding="utf-8") as fh:
        for g in ds.groups:
            for c in g.candidates:
                fh.write(_candidate_line(c) + "\n")


def write_flat_file(records: list[FlatRecord], path) -> None:
    """Write the flat (qid-less) format; zero features are omitted."""
    if not records:
        raise ValueError("empty record list")
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            line = " ".join([str(r.label)] + _feature_tokens(r.features))
            if r.comment is not None:
                line += f" # {r.comment}"
            fh.write(line + "\n")
