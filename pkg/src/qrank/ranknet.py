"""Pairwise neural ranker: one sigmoid hidden layer trained on cross entropy.

The net scores a candidate as f(x) = w2 . sigmoid(W1 x + b1) + b2.  For a
pair ordered u better than v, the modeled probability of that ordering is
P = sigmoid(f(x_u) - f(x_v)) and the loss is the cross entropy against the
target probability.  With canonicalized pairs the target is always 1; the
general form stays available because tests exercise its symmetry.

Training is plain per-pair stochastic gradient descent in a seed-fixed
shuffled order, matching the tiny learning-rate regime the defaults assume.
Note the output bias b2 cancels in every pair difference, so its gradient
is identically zero and its initial value never changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, format_real
from .pairs import dataset_pairs

__all__ = [
    "NeuralNet",
    "forward",
    "pair_loss",
    "pair_gradients",
    "train_ranknet",
    "save_ranknet_model",
    "load_ranknet_model",
]


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _softplus(z):
    return np.logaddexp(0.0, z)


@dataclass
class NeuralNet:
    """Weights of the one-hidden-layer scorer; hidden count is len(b1)."""

    w1: np.ndarray  # (hidden, dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    learning_rate: float = 5e-5
    loss_trace: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def score_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {x.shape[1]}")
        return _sigmoid(x @ self.w1.T + self.b1) @ self.w2 + self.b2

    def score(self, x) -> float:
        return float(self.score_matrix(np.asarray(x, dtype=float)[None, :])[0])


def forward(net: NeuralNet, x) -> float:
    """Score one candidate; deterministic in the weights."""
    return net.score(x)


def pair_loss(net: NeuralNet, xu, xv, target: float = 1.0) -> float:
    """Cross entropy of the modeled ordering probability for (u over v).

    Stabilized through softplus, so extreme score differences never hit
    log(0).  `target` is the ground-truth probability that u outranks v;
    canonicalized pairs use 1.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target probability must be in [0, 1], got {target}")
    diff = net.score(xu) - net.score(xv)
    return float(target * _softplus(-diff) + (1.0 - target) * _softplus(diff))


def pair_gradients(net: NeuralNet, xu, xv, target: float = 1.0):
    """Analytic pair-loss gradients (dw1, db1, dw2, db2).

    db2 is returned for completeness; it is exactly zero because the output
    bias cancels in the score difference.
    """
    xu = np.asarray(xu, dtype=float)
    xv = np.asarray(xv, dtype=float)
    hu = _sigmoid(net.w1 @ xu + net.b1)
    hv = _sigmoid(net.w1 @ xv + net.b1)
    fu = float(net.w2 @ hu) + net.b2
    fv = float(net.w2 @ hv) + net.b2
    dldd = float(_sigmoid(fu - fv)) - target  # dL / d(score difference)

    gu = net.w2 * hu * (1.0 - hu)  # df(x_u)/db1
    gv = net.w2 * hv * (1.0 - hv)
    dw1 = dldd * (np.outer(gu, xu) - np.outer(gv, xv))
    db1 = dldd * (gu - gv)
    dw2 = dldd * (hu - hv)
    return dw1, db1, dw2, 0.0


def _init_net(dim: int, hidden: int, lr: float, rng: np.random.Generator) -> NeuralNet:
    bound = 1.0 / np.sqrt(dim)
    w1 = rng.uniform(-bound, bound, size=(hidden, dim))
    w2 = rng.uniform(-bound, bound, size=hidden)
    return NeuralNet(w1, np.zeros(hidden), w2, 0.0, learning_rate=lr)


def train_ranknet(
    ds: Dataset,
    epochs: int = 100,
    lr: float = 5e-5,
    seed: int = 0,
    hidden: int = 10,
) -> NeuralNet:
    """Stochastic per-pair descent over all discordant pairs.

    Weights start uniform in [-1/sqrt(d), 1/sqrt(d)] and biases at zero,
    both drawn from the given seed.  After each epoch the mean pair loss
    over the full pair set is appended to the returned net's loss_trace.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if hidden < 1:
        raise ValueError(f"hidden must be >= 1, got {hidden}")
    pairs = dataset_pairs(ds)
    if not pairs:
        raise ValueError("no discordant pairs; nothing to rank")
    x = ds.matrix()
    u = np.array([p.u for p in pairs])
    v = np.array([p.v for p in pairs])
    rng = np.random.default_rng(seed)
    net = _init_net(ds.dim, hidden, lr, rng)

    w1, b1, w2 = net.w1, net.b1, net.w2
    for _ in range(epochs):
        for p in rng.permutation(len(pairs)):
            xu, xv = x[u[p]], x[v[p]]
            hu = _sigmoid(w1 @ xu + b1)
            hv = _sigmoid(w1 @ xv + b1)
            dldd = float(_sigmoid(w2 @ hu - w2 @ hv)) - 1.0
            gu = w2 * hu * (1.0 - hu)
            gv = w2 * hv * (1.0 - hv)
            step = lr * dldd
            w1 -= step * (np.outer(gu, xu) - np.outer(gv, xv))
            b1 -= step * (gu - gv)
            w2 -= step * (hu - hv)
        scores = net.score_matrix(x)
        net.loss_trace.append(float(np.mean(_softplus(-(scores[u] - scores[v])))))
    return net


def save_ranknet_model(net: NeuralNet, path) -> None:
    """Header then w1 rows, b1, w2 and b2 as decimal lists; exact round-trip."""

    def fmt(vec) -> str:
        return " ".join(format_real(val) for val in np.atleast_1d(vec))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ranknet dim={net.dim} hidden={net.hidden}\n")
        for row in net.w1:
            fh.write(f"w1 {fmt(row)}\n")
        fh.write(f"b1 {fmt(net.b1)}\n")
        fh.write(f"w2 {fmt(net.w2)}\n")
        fh.write(f"b2 {format_real(net.b2)}\n")


def load_ranknet_model(path) -> NeuralNet:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("ranknet "):
        raise ValueError(f"{path}: not a ranknet model file")
    fields = dict(part.split("=", 1) for part in lines[0].split()[1:])
    dim = int(fields["dim"])
    hidden = int(fields["hidden"])
    expected = hidden + 3
    if len(lines) - 1 != expected:
        raise ValueError(f"{path}: expected {expected} weight lines, found {len(lines) - 1}")

    def parse(line: str, tag: str, n: int) -> np.ndarray:
        tokens = line.split()
        if tokens[0] != tag or len(tokens) - 1 != n:
            raise ValueError(f"{path}: bad {tag} line {line!r}")
        return np.array([float(t) for t in tokens[1:]])

    w1 = np.stack([parse(lines[1 + i], "w1", dim) for i in range(hidden)])
    b1 = parse(lines[1 + hidden], "b1", hidden)
    w2 = parse(lines[2 + hidden], "w2", hidden)
    b2 = float(parse(lines[3 + hidden], "b2", 1)[0])
    return NeuralNet(w1, b1, w2, b2)
