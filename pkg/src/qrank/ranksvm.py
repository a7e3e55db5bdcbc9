"""Pairwise ranking SVM with linear, RBF and sigmoid-tanh kernels.

Training minimizes

    0.5*||w||^2 + C_eff * sum_p max(0, 1 - w.(x_u - x_v))

over all discordant pairs p, with C_eff = c / P so the loss term is a mean
over the P pairs and the useful range of c does not drift with dataset size.
There is no bias term: pair differences cancel any shared offset.

Both trainers run dual coordinate descent over the pair variables.  The
linear path keeps w explicit; the kernel path precomputes the pair-level
kernel matrix, which bounds it to desk-scale pair counts (see max_pairs).
The sigmoid kernel is indefinite, so its solver clamps the curvature it
divides by and stops on constraint violation rather than duality gap.

The reported objective trace is the best value seen so far (the returned
model is that incumbent iterate), so the trace is non-increasing even though
raw dual coordinate descent does not monotonically improve the primal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, format_real
from .pairs import dataset_pairs

__all__ = [
    "Kernel",
    "LinearModel",
    "KernelModel",
    "TrainState",
    "kernel_eval",
    "kernel_matrix",
    "train_linear",
    "train_kernel",
    "score",
    "save_svm_model",
    "load_svm_model",
]

KERNEL_KINDS = ("linear", "rbf", "sigmoid")


@dataclass(frozen=True)
class Kernel:
    """Kernel family plus its scale parameters; linear ignores both."""

    kind: str
    gamma: float | None = None  # None -> 1/d, resolved at training time
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def resolved(self, dim: int) -> "Kernel":
        if self.kind == "linear":
            return Kernel("linear")
        gamma = self.gamma if self.gamma is not None else 1.0 / dim
        return Kernel(self.kind, gamma, self.coef0)


def kernel_matrix(kernel: Kernel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise kernel values between row sets a (m,d) and b (n,d)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite input to kernel")
    if kernel.kind == "linear":
        return a @ b.T
    if kernel.gamma is None:
        raise ValueError("gamma unresolved; call Kernel.resolved(dim) first")
    if kernel.kind == "rbf":
        sq = (
            np.sum(a * a, axis=1)[:, None]
            - 2.0 * (a @ b.T)
            + np.sum(b * b, axis=1)[None, :]
        )
        return np.exp(-kernel.gamma * np.maximum(sq, 0.0))
    return np.tanh(kernel.gamma * (a @ b.T) + kernel.coef0)


def kernel_eval(kernel: Kernel, a, b) -> float:
    """Single kernel value k(a, b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(kernel_matrix(kernel, a[None, :], b[None, :])[0, 0])


@dataclass
class TrainState:
    """Optimizer diagnostics attached to a trained model."""

    slacks: np.ndarray  # xi_p = max(0, 1 - margin_p) at the returned iterate
    n_iters: int  # epochs actually run
    objective_trace: list[float]  # incumbent objective per epoch, non-increasing
    converged: bool


@dataclass
class LinearModel:
    """f(x) = w.x; bias is identically zero."""

    w: np.ndarray
    c: float
    objective: float | None = None
    bias: float = 0.0
    state: TrainState | None = None

    @property
    def dim(self) -> int:
        return len(self.w)

    def score_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {x.shape[1]}")
        return x @ self.w

    def score(self, x) -> float:
        return float(self.score_matrix(np.asarray(x, dtype=float)[None, :])[0])


@dataclass
class KernelModel:
    """Dual expansion f(x) = sum_p alpha_p (k(x, u_p) - k(x, v_p)).

    Only support pairs (alpha > 0) are kept.  `scale` divides inputs before
    kernel evaluation when the model was trained on standardized features.
    """

    alphas: np.ndarray
    su: np.ndarray  # (n_support, d) better-labeled pair members
    sv: np.ndarray  # (n_support, d) worse-labeled pair members
    kernel: Kernel
    c: float
    dim: int
    scale: np.ndarray | None = None
    objective: float | None = None
    state: TrainState | None = None

    def score_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {x.shape[1]}")
        if self.scale is not None:
            x = x / self.scale
        if len(self.alphas) == 0:
            return np.zeros(len(x))
        diff = kernel_matrix(self.kernel, x, self.su) - kernel_matrix(self.kernel, x, self.sv)
        return diff @ self.alphas

    def score(self, x) -> float:
        return float(self.score_matrix(np.asarray(x, dtype=float)[None, :])[0])


def score(model, x) -> float:
    """Score one candidate with either model family."""
    return model.score(x)


def _pair_difference_matrix(ds: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = dataset_pairs(ds)
    if not pairs:
        raise ValueError("no discordant pairs; nothing to rank")
    u = np.array([p.u for p in pairs])
    v = np.array([p.v for p in pairs])
    return ds.matrix(), u, v


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sd = x.std(axis=0)
    sd[sd == 0.0] = 1.0
    return x / sd, sd


def train_linear(
    ds: Dataset,
    c: float,
    tol: float = 1e-6,
    max_iters: int = 1000,
    seed: int = 0,
    standardize: bool = False,
) -> LinearModel:
    """Fit the linear ranker by dual coordinate descent on pair differences.

    Stops when an epoch's projected-gradient spread falls below tol, else
    after max_iters epochs with state.converged False.  The returned w is the
    iterate with the best primal objective seen.
    """
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    x, u, v = _pair_difference_matrix(ds)
    sd = None
    if standardize:
        x, sd = _standardize(x)
    z = x[u] - x[v]
    n_pairs = len(z)
    c_eff = c / n_pairs
    qdiag = np.einsum("ij,ij->i", z, z)

    rng = np.random.default_rng(seed)
    alpha = np.zeros(n_pairs)
    w = np.zeros(ds.dim)

    def objective(wv: np.ndarray) -> float:
        hinge = np.maximum(0.0, 1.0 - z @ wv)
        return float(0.5 * wv @ wv + c_eff * hinge.sum())

    best_w = w.copy()
    best_obj = objective(w)
    trace = []
    converged = False
    epochs = 0
    for epoch in range(max_iters):
        epochs = epoch + 1
        pg_max, pg_min = -np.inf, np.inf
        for p in rng.permutation(n_pairs):
            g = float(z[p] @ w) - 1.0
            a = alpha[p]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == c_eff:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                if qdiag[p] < 1e-12:
                    new = c_eff if g < 0 else 0.0
                else:
                    new = min(max(a - g / qdiag[p], 0.0), c_eff)
                if new != a:
                    w += (new - a) * z[p]
                    alpha[p] = new
        obj = objective(w)
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
        trace.append(best_obj)
        if pg_max - pg_min < tol:
            converged = True
            break

    if sd is not None:
        best_w = best_w / sd  # fold the scaling back so raw inputs score directly
        slack_z = (ds.matrix()[u] - ds.matrix()[v])
    else:
        slack_z = z
    slacks = np.maximum(0.0, 1.0 - slack_z @ best_w)
    state = TrainState(slacks, epochs, trace, converged)
    return LinearModel(best_w, c, objective=best_obj, state=state)


def train_kernel(
    ds: Dataset,
    kernel: Kernel,
    c: float,
    tol: float = 1e-6,
    max_iters: int = 300,
    seed: int = 0,
    max_pairs: int = 6000,
    standardize: bool = False,
) -> KernelModel:
    """Fit a kernelized ranker on the explicit pair-kernel matrix.

    For PSD kernels (linear, rbf) the stop rule is duality gap <= tol
    relative to the primal; the indefinite sigmoid uses projected-gradient
    spread like the linear path.  Pair counts above max_pairs are refused
    because the matrix is materialized densely.
    """
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    x, u, v = _pair_difference_matrix(ds)
    sd = None
    if standardize:
        x, sd = _standardize(x)
    n_pairs = len(u)
    if n_pairs > max_pairs:
        raise ValueError(
            f"{n_pairs} pairs exceeds the dense-matrix budget of {max_pairs};"
            " raise max_pairs to opt in"
        )
    kern = kernel.resolved(ds.dim)
    kmat = kernel_matrix(kern, x, x)
    q = kmat[np.ix_(u, u)] - kmat[np.ix_(u, v)] - kmat[np.ix_(v, u)] + kmat[np.ix_(v, v)]
    qdiag = np.clip(np.diag(q).copy(), 1e-12, None)  # sigmoid can go non-positive
    c_eff = c / n_pairs
    psd = kern.kind != "sigmoid"

    rng = np.random.default_rng(seed)
    alpha = np.zeros(n_pairs)
    g = np.zeros(n_pairs)  # g = Q alpha, maintained incrementally

    def primal(margins: np.ndarray, reg: float) -> float:
        return float(0.5 * reg + c_eff * np.maximum(0.0, 1.0 - margins).sum())

    best_alpha = alpha.copy()
    best_obj = primal(g, 0.0)
    trace = []
    converged = False
    epochs = 0
    for epoch in range(max_iters):
        epochs = epoch + 1
        pg_max, pg_min = -np.inf, np.inf
        for p in rng.permutation(n_pairs):
            grad = g[p] - 1.0
            a = alpha[p]
            if a == 0.0:
                pg = min(grad, 0.0)
            elif a == c_eff:
                pg = max(grad, 0.0)
            else:
                pg = grad
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                new = min(max(a - grad / qdiag[p], 0.0), c_eff)
                if new != a:
                    g += (new - a) * q[p]
                    alpha[p] = new
        reg = float(alpha @ g)
        obj = primal(g, reg)
        if obj < best_obj:
            best_obj = obj
            best_alpha = alpha.copy()
        trace.append(best_obj)
        if psd:
            gap = obj - (alpha.sum() - 0.5 * reg)
            if gap <= tol * max(1.0, abs(obj)):
                converged = True
                break
        elif pg_max - pg_min < tol:
            converged = True
            break

    margins = q @ best_alpha
    slacks = np.maximum(0.0, 1.0 - margins)
    state = TrainState(slacks, epochs, trace, converged)
    support = best_alpha > 0.0
    return KernelModel(
        alphas=best_alpha[support],
        su=x[u[support]],
        sv=x[v[support]],
        kernel=kern,
        c=c,
        dim=ds.dim,
        scale=sd,
        objective=best_obj,
        state=state,
    )


def _sparse_token(vec: np.ndarray) -> str:
    return ",".join(f"{i + 1}:{format_real(v)}" for i, v in enumerate(vec) if v != 0.0)


def _parse_sparse_token(token: str, dim: int, where: str) -> np.ndarray:
    vec = np.zeros(dim)
    if not token:
        return vec
    for part in token.split(","):
        fid_s, _, val_s = part.partition(":")
        try:
            fid = int(fid_s)
            val = float(val_s)
        except ValueError:
            raise ValueError(f"{where}: bad sparse entry {part!r}") from None
        if not 1 <= fid <= dim:
            raise ValueError(f"{where}: feature id {fid} outside 1..{dim}")
        vec[fid - 1] = val
    return vec


def save_svm_model(model: LinearModel | KernelModel, path) -> None:
    """Write the text model format; loading it back reproduces all scoring
    fields exactly (optimizer state and objective are not persisted)."""
    with open(path, "w", encoding="utf-8") as fh:
        if isinstance(model, LinearModel):
            fh.write(f"ranksvm linear c={format_real(model.c)} dim={model.dim}\n")
            fh.write("w " + " ".join(format_real(v) for v in model.w) + "\n")
            return
        k = model.kernel
        header = f"ranksvm {k.kind} c={format_real(model.c)} dim={model.dim}"
        if k.kind != "linear":
            header += f" gamma={format_real(k.gamma)} coef0={format_real(k.coef0)}"
        fh.write(header + "\n")
        if model.scale is not None:
            fh.write("scale " + " ".join(format_real(v) for v in model.scale) + "\n")
        for a, u_vec, v_vec in zip(model.alphas, model.su, model.sv):
            fh.write(
                f"alpha={format_real(a)} u={_sparse_token(u_vec)} v={_sparse_token(v_vec)}\n"
            )


def _parse_header_fields(parts: list[str], path) -> dict[str, str]:
    fields = {}
    for part in parts:
        key, sep, val = part.partition("=")
        if not sep:
            raise ValueError(f"{path}: bad header field {part!r}")
        fields[key] = val
    return fields


def load_svm_model(path) -> LinearModel | KernelModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) < 4 or head[0] != "ranksvm":
        raise ValueError(f"{path}: not a ranksvm model file")
    kind = head[1]
    if kind not in KERNEL_KINDS:
        raise ValueError(f"{path}: unknown kernel {kind!r}")
    fields = _parse_header_fields(head[2:], path)
    c = float(fields["c"])
    dim = int(fields["dim"])

    body = lines[1:]
    if body and body[0].startswith("w "):
        w = np.array([float(t) for t in body[0].split()[1:]])
        if len(w) != dim:
            raise ValueError(f"{path}: w has {len(w)} entries, header says dim={dim}")
        return LinearModel(w, c)

    if kind == "linear":
        kernel = Kernel("linear")
    else:
        kernel = Kernel(kind, float(fields["gamma"]), float(fields["coef0"]))
    scale = None
    if body and body[0].startswith("scale "):
        scale = np.array([float(t) for t in body[0].split()[1:]])
        if len(scale) != dim:
            raise ValueError(f"{path}: scale has {len(scale)} entries, dim={dim}")
        body = body[1:]
    alphas, su, sv = [], [], []
    for lineno, line in enumerate(body, start=2):
        tokens = line.split()
        if len(tokens) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'alpha=... u=... v=...'")
        kv = _parse_header_fields(tokens, f"{path}:{lineno}")
        alphas.append(float(kv["alpha"]))
        su.append(_parse_sparse_token(kv["u"], dim, f"{path}:{lineno}"))
        sv.append(_parse_sparse_token(kv["v"], dim, f"{path}:{lineno}"))
    return KernelModel(
        alphas=np.array(alphas),
        su=np.array(su).reshape(len(alphas), dim),
        sv=np.array(sv).reshape(len(alphas), dim),
        kernel=kernel,
        c=c,
        dim=dim,
        scale=scale,
    )
