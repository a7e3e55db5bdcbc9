"""Deterministic synthetic ranking data with a known scoring oracle.

Four scenarios:

- linear-utility: a hidden unit-norm weight vector scores each candidate;
  the top few per group are labeled relevant.
- single-feature: one planted feature column carries the whole signal.
- xor-nonlinear: relevance is sign agreement of the first two features, so
  the oracle score x1*x2 is invisible to any linear scorer.
- noise: labels land on random slots with no feature dependence (no oracle).

Every draw comes from `random.Random(f"{seed}:{stream}")` using only the
`.random()` method, which CPython guarantees stable across platforms, so a
seed pins the dataset byte for byte.  Features are uniform in (-1, 1).
An optional noise rate flips each label independently after assignment.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .data import Candidate, Dataset, QueryGroup, format_real

__all__ = [
    "SCENARIOS",
    "GenSpec",
    "GroundTruth",
    "generate",
    "write_ground_truth",
    "read_ground_truth",
]

SCENARIOS = ("linear-utility", "xor-nonlinear", "single-feature", "noise")

_GRADES = (2, 1, 1)  # grade pattern for the relevant slots, best first


@dataclass(frozen=True)
class GenSpec:
    """Generation request; scenario plus seed fully determine the output."""

    queries: int
    group_size: int = 10
    dim: int = 64
    scenario: str = "linear-utility"
    noise: float = 0.0
    seed: int = 42
    graded: bool = False

    def validate(self) -> None:
        if self.queries < 1:
            raise ValueError(f"queries must be >= 1, got {self.queries}")
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "xor-nonlinear" and self.dim < 2:
            raise ValueError("xor-nonlinear needs dim >= 2")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError(f"noise rate must be in [0, 1), got {self.noise}")

    @property
    def n_relevant(self) -> int:
        return min(3, self.group_size - 1)


@dataclass
class GroundTruth:
    """Label-generating rule; score_matrix ranks relevant first at noise 0."""

    scenario: str
    dim: int
    graded: bool
    noise: float
    seed: int
    w: np.ndarray | None = None
    fid: int | None = None

    def score_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.scenario == "linear-utility":
            return x @ self.w
        if self.scenario == "single-feature":
            return x[:, self.fid - 1].copy()
        if self.scenario == "xor-nonlinear":
            return x[:, 0] * x[:, 1]
        raise ValueError(f"scenario {self.scenario!r} has no scoring oracle")


def _stream(spec: GenSpec, name: str) -> random.Random:
    return random.Random(f"{spec.seed}:{name}")


def _uniform_row(rng: random.Random, dim: int) -> np.ndarray:
    return np.array([2.0 * rng.random() - 1.0 for _ in range(dim)])


def _pick_slots(rng: random.Random, n: int, k: int) -> list[int]:
    # partial Fisher-Yates so each draw consumes exactly one rng.random()
    pool = list(range(n))
    for i in range(k):
        j = i + int(rng.random() * (n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def _grade_for(rank: int, graded: bool) -> int:
    return _GRADES[rank] if graded else 1


def generate(spec: GenSpec) -> tuple[Dataset, GroundTruth]:
    """Build the dataset and the descriptor of the rule that labeled it."""
    spec.validate()
    feat = _stream(spec, "features")
    struct = _stream(spec, "structure")
    noise_rng = _stream(spec, "noise")
    n_rel = spec.n_relevant

    truth = GroundTruth(spec.scenario, spec.dim, spec.graded, spec.noise, spec.seed)
    if spec.scenario == "linear-utility":
        w = _uniform_row(struct, spec.dim)
        while float(w @ w) < 1e-12:
            w = _uniform_row(struct, spec.dim)
        truth.w = w / np.linalg.norm(w)
    elif spec.scenario == "single-feature":
        truth.fid = 1 + int(struct.random() * spec.dim)

    groups = []
    for qid in range(1, spec.queries + 1):
        x = np.stack([_uniform_row(feat, spec.dim) for _ in range(spec.group_size)])
        labels = [0] * spec.group_size
        if spec.scenario in ("linear-utility", "single-feature"):
            utility = truth.score_matrix(x)
            order = np.argsort(-utility, kind="stable")
            for rank in range(n_rel):
                labels[int(order[rank])] = _grade_for(rank, spec.graded)
        else:
            slots = _pick_slots(struct, spec.group_size, n_rel)
            for rank, slot in enumerate(slots):
                labels[slot] = _grade_for(rank, spec.graded)
            if spec.scenario == "xor-nonlinear":
                # force sign agreement of the first two features exactly on
                # the relevant slots; flipping one sign keeps the marginals
                for i in range(spec.group_size):
                    while x[i, 0] * x[i, 1] == 0.0:
                        x[i, 1] = 2.0 * feat.random() - 1.0
                    agree = x[i, 0] * x[i, 1] > 0.0
                    if agree != (labels[i] > 0):
                        x[i, 1] = -x[i, 1]
        if spec.noise > 0.0:
            for i in range(spec.group_size):
                if noise_rng.random() < spec.noise:
                    if spec.graded:
                        shift = 1 + int(noise_rng.random() * 2)
                        labels[i] = (labels[i] + shift) % 3
                    else:
                        labels[i] = 1 - labels[i]
        x.flags.writeable = False
        cands = tuple(
            Candidate(labels[i], qid, x[i]) for i in range(spec.group_size)
        )
        groups.append(QueryGroup(qid, cands))
    return Dataset(tuple(groups), spec.dim), truth


def write_ground_truth(truth: GroundTruth, path) -> None:
    """Sidecar text file naming the labeling rule; round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "groundtruth"
            f" scenario={truth.scenario}"
            f" dim={truth.dim}"
            f" graded={int(truth.graded)}"
            f" noise={format_real(truth.noise)}"
            f" seed={truth.seed}\n"
        )
        if truth.w is not None:
            fh.write("w " + " ".join(format_real(v) for v in truth.w) + "\n")
        if truth.fid is not None:
            fh.write(f"fid {truth.fid}\n")


def read_ground_truth(path) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("groundtruth "):
        raise ValueError(f"{path}: not a ground-truth file")
    fields = dict(part.split("=", 1) for part in lines[0].split()[1:])
    truth = GroundTruth(
        scenario=fields["scenario"],
        dim=int(fields["dim"]),
        graded=bool(int(fields["graded"])),
        noise=float(fields["noise"]),
        seed=int(fields["seed"]),
    )
    for line in lines[1:]:
        tag, _, rest = line.partition(" ")
        if tag == "w":
            truth.w = np.array([float(t) for t in rest.split()])
        elif tag == "fid":
            truth.fid = int(rest)
        else:
            raise ValueError(f"{path}: unexpected line {line!r}")
    return truth
