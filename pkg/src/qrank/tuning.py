"""Hyperparameter search for the rankers: kernel sweep, then C in two passes.

The flow mirrors the intended use: pick a kernel at a fixed small C, find
the right order of magnitude for C on a coarse grid, then walk a fine grid
and keep the best observed C.  Every sweep evaluates on a held-out tail
split, returns a table of rows, and never aborts on a failed grid point
(failed rows are flagged and skipped by the argmax).

fine_c_search has two variants.  The default records the best value seen
so far while stepping (an argmax scan, ties going to the smallest C).  The
`literal` flag keeps the improvement threshold frozen at the initial C's
score, which returns the LAST C that beat the initial score instead; it
exists so both readings of the stepping rule stay testable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .boosting import train_adarank, train_rankboost
from .data import Dataset, format_real
from .forest import train_forest
from .metrics import evaluate_run
from .ranknet import train_ranknet
from .ranksvm import Kernel, train_kernel, train_linear

__all__ = [
    "RANKERS",
    "DEFAULT_COARSE_GRID",
    "TuningConfig",
    "SweepRow",
    "SweepResult",
    "kernel_sweep",
    "coarse_c_scan",
    "fine_grid",
    "fine_c_search",
    "fine_c_table",
    "method_comparison",
    "write_trace_csv",
    "write_sweep_csv",
]

RANKERS = ("ranksvm", "rankboost", "ranknet", "adarank", "rforest")

DEFAULT_COARSE_GRID = (3.0, 30.0, 300.0, 3000.0, 30000.0)

# sweep tables carry these four metrics; the objective must be one of them
_ROW_METRICS = {"map": "map", "mrr": "mrr", "p@1": "p1", "p@5": "p5"}
_AGG_ATTRS = {"map": "ap", "mrr": "rr", "p@1": "p1", "p@5": "p5"}

# search-phase solver budget; loose tolerance keeps grids affordable
_SEARCH_TOL = 1e-3
_SEARCH_ITERS = 200


@dataclass(frozen=True)
class TuningConfig:
    kernels: tuple = (Kernel("linear"), Kernel("rbf"), Kernel("sigmoid"))
    coarse_grid: tuple = DEFAULT_COARSE_GRID
    fine_range: tuple = (5.0, 40.0)
    step: float = 5.0
    initial_c: float = 3.0
    metric: str = "map"

    def validate(self) -> None:
        if not self.kernels:
            raise ValueError("kernel list is empty")
        if not self.coarse_grid:
            raise ValueError("coarse grid is empty")
        if any(c <= 0 for c in self.coarse_grid):
            raise ValueError("coarse grid C values must be positive")
        low, high = self.fine_range
        if low > high:
            raise ValueError(f"fine range low {low} exceeds high {high}")
        if low <= 0 or self.initial_c <= 0:
            raise ValueError("C values must be positive")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.metric not in _ROW_METRICS:
            raise ValueError(
                f"objective metric must be one of {sorted(_ROW_METRICS)}, got {self.metric!r}"
            )


@dataclass(frozen=True)
class SweepRow:
    """One evaluated setting; metrics are nan when the point failed."""

    setting: str
    value: object
    map: float = math.nan
    mrr: float = math.nan
    p1: float = math.nan
    p5: float = math.nan
    failed: bool = False
    error: str = ""


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    best: SweepRow
    metric: str = "map"


def _metric_key(metric: str) -> str:
    if metric not in _ROW_METRICS:
        raise ValueError(f"objective metric must be one of {sorted(_ROW_METRICS)}")
    return _ROW_METRICS[metric]


def _evaluated_row(setting: str, value, model, eval_ds: Dataset) -> SweepRow:
    report = evaluate_run(eval_ds, model.score_matrix(eval_ds.matrix()))
    a = report.aggregate
    return SweepRow(setting, value, a.ap, a.rr, a.p1, a.p5)


def _pick_best(rows, metric: str) -> SweepRow:
    key = _metric_key(metric)
    best = None
    for row in rows:
        if row.failed:
            continue
        v = getattr(row, key)
        if best is None or v > getattr(best, key):
            best = row
    if best is None:
        raise RuntimeError("every grid point failed; no best setting")
    return best


def kernel_sweep(
    train: Dataset,
    eval_ds: Dataset,
    kernels=None,
    c: float = 3.0,
    seed: int = 42,
    metric: str = "map",
    trainer=None,
) -> SweepResult:
    """One kernel model per entry at fixed C; failures abort, naming the kernel."""
    kernels = tuple(kernels) if kernels is not None else TuningConfig().kernels
    if not kernels:
        raise ValueError("kernel list is empty")
    if trainer is None:
        def trainer(kernel):
            return train_kernel(
                train, kernel, c, tol=_SEARCH_TOL, max_iters=_SEARCH_ITERS, seed=seed
            )
    rows = []
    for kernel in kernels:
        try:
            model = trainer(kernel)
        except Exception as exc:
            raise RuntimeError(f"kernel {kernel.kind}: training failed: {exc}") from exc
        rows.append(_evaluated_row(kernel.kind, kernel, model, eval_ds))
    rows = tuple(rows)
    return SweepResult(rows, _pick_best(rows, metric), metric)


def coarse_c_scan(
    train: Dataset,
    eval_ds: Dataset,
    grid=DEFAULT_COARSE_GRID,
    seed: int = 42,
    metric: str = "map",
    trainer=None,
) -> SweepResult:
    """Linear ranker per C; failed points become flagged rows, never aborts."""
    grid = tuple(grid)
    if not grid:
        raise ValueError("C grid is empty")
    if trainer is None:
        def trainer(c):
            return train_linear(
                train, c, tol=_SEARCH_TOL, max_iters=_SEARCH_ITERS, seed=seed
            )
    rows = []
    for c in grid:
        setting = f"c={format_real(float(c))}"
        try:
            model = trainer(c)
        except Exception as exc:
            rows.append(SweepRow(setting, float(c), failed=True, error=str(exc)))
            continue
        rows.append(_evaluated_row(setting, float(c), model, eval_ds))
    rows = tuple(rows)
    return SweepResult(rows, _pick_best(rows, metric), metric)


def fine_grid(cfg: TuningConfig) -> list[float]:
    """Evaluation order: initial C first, then low..high inclusive by step."""
    low, high = cfg.fine_range
    n = int(math.floor((high - low) / cfg.step + 1e-9)) + 1
    cs = [float(cfg.initial_c)]
    for i in range(n):
        c = low + i * cfg.step
        if abs(c - cfg.initial_c) > 1e-12:
            cs.append(float(c))
    return cs


def fine_c_search(
    train: Dataset,
    eval_ds: Dataset,
    cfg: TuningConfig | None = None,
    literal: bool = False,
    evaluate=None,
    seed: int = 42,
):
    """Step through the fine grid and return (best C, ascending trace).

    `evaluate` maps a C value to the objective metric; the default trains
    the linear ranker and scores the evaluation split.  The default scan
    is an argmax with ties to the smallest C; `literal` freezes the
    improvement bar at the initial C's score and returns the last C that
    cleared it.  Failed points carry nan and never win.
    """
    cfg = cfg or TuningConfig()
    cfg.validate()
    if evaluate is None:
        attr = _AGG_ATTRS[cfg.metric]

        def evaluate(c):
            model = train_linear(train, c, tol=_SEARCH_TOL, max_iters=_SEARCH_ITERS, seed=seed)
            report = evaluate_run(eval_ds, model.score_matrix(eval_ds.matrix()))
            return getattr(report.aggregate, attr)

    order = fine_grid(cfg)
    seen = [(c, float(evaluate(c))) for c in order]
    trace = sorted(seen, key=lambda cv: cv[0])

    if literal:
        bar = seen[0][1]  # initial C's score, never updated
        best = seen[0][0]
        for c, v in seen[1:]:
            if bar < v:
                best = c
        return best, trace

    best = None
    best_v = math.nan
    for c, v in trace:
        if math.isnan(v):
            continue
        if best is None or v > best_v:
            best, best_v = c, v
    if best is None:
        raise RuntimeError("every grid point failed; no best C")
    return best, trace


def fine_c_table(
    train: Dataset,
    eval_ds: Dataset,
    cfg: TuningConfig | None = None,
    literal: bool = False,
    seed: int = 42,
    trainer=None,
) -> tuple[SweepResult, float, list]:
    """Fine search plus the full per-C metric rows, each C trained once."""
    cfg = cfg or TuningConfig()
    cfg.validate()
    grid = sorted(fine_grid(cfg))
    result = coarse_c_scan(train, eval_ds, grid=grid, seed=seed, metric=cfg.metric, trainer=trainer)
    key = _metric_key(cfg.metric)
    lookup = {row.value: getattr(row, key) for row in result.rows}
    best, trace = fine_c_search(
        train, eval_ds, cfg, literal=literal, evaluate=lambda c: lookup[c], seed=seed
    )
    return result, best, trace


def method_comparison(
    train: Dataset,
    eval_ds: Dataset,
    desk_scale: bool = True,
    seed: int = 42,
    metric: str = "map",
) -> SweepResult:
    """All five rankers on the same split; desk scale shrinks the budgets."""
    if desk_scale:
        trainers = {
            "ranksvm": lambda: train_linear(train, 3.0, tol=_SEARCH_TOL, max_iters=_SEARCH_ITERS, seed=seed),
            "rankboost": lambda: train_rankboost(train, iterations=50),
            "ranknet": lambda: train_ranknet(train, epochs=20, seed=seed),
            "adarank": lambda: train_adarank(train, rounds=100),
            "rforest": lambda: train_forest(train, bags=5, trees_per_bag=20, seed=seed),
        }
    else:
        trainers = {
            "ranksvm": lambda: train_linear(train, 3.0, seed=seed),
            "rankboost": lambda: train_rankboost(train, iterations=300),
            "ranknet": lambda: train_ranknet(train, epochs=100, seed=seed),
            "adarank": lambda: train_adarank(train, rounds=500),
            "rforest": lambda: train_forest(train, bags=300, trees_per_bag=100, seed=seed),
        }
    rows = []
    for name in RANKERS:
        try:
            model = trainers[name]()
        except Exception as exc:
            rows.append(SweepRow(name, name, failed=True, error=str(exc)))
            continue
        rows.append(_evaluated_row(name, name, model, eval_ds))
    rows = tuple(rows)
    return SweepResult(rows, _pick_best(rows, metric), metric)


def _csv_cell(v: float) -> str:
    return "nan" if math.isnan(v) else format_real(v)


def write_trace_csv(rows, path) -> None:
    """C-scan curve as `c,map,mrr,p1,p5`; rows must carry numeric C values."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("c,map,mrr,p1,p5\n")
        for row in rows:
            fh.write(
                f"{format_real(float(row.value))},{_csv_cell(row.map)},"
                f"{_csv_cell(row.mrr)},{_csv_cell(row.p1)},{_csv_cell(row.p5)}\n"
            )


def write_sweep_csv(result: SweepResult, path) -> None:
    """Named-setting table as `setting,map,mrr,p1,p5`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("setting,map,mrr,p1,p5\n")
        for row in result.rows:
            fh.write(
                f"{row.setting},{_csv_cell(row.map)},{_csv_cell(row.mrr)},"
                f"{_csv_cell(row.p1)},{_csv_cell(row.p5)}\n"
            )
