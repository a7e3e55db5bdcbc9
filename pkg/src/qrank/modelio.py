"""One entry point for model files: dispatch on the header's first word."""

from __future__ import annotations

from .boosting import BoostEnsemble, load_boost_model, save_boost_model
from .forest import ForestModel, load_forest_model, save_forest_model
from .ranknet import NeuralNet, load_ranknet_model, save_ranknet_model
from .ranksvm import KernelModel, LinearModel, load_svm_model, save_svm_model

__all__ = ["load_model", "save_model"]

_LOADERS = {
    "ranksvm": load_svm_model,
    "boost": load_boost_model,
    "forest": load_forest_model,
    "ranknet": load_ranknet_model,
}

_SAVERS = (
    ((LinearModel, KernelModel), save_svm_model),
    ((BoostEnsemble,), save_boost_model),
    ((ForestModel,), save_forest_model),
    ((NeuralNet,), save_ranknet_model),
)


def load_model(path):
    """Read any saved ranker; the header's first token names the format."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
    kind = head[0] if head else ""
    loader = _LOADERS.get(kind)
    if loader is None:
        raise ValueError(f"{path}: unknown model header {kind!r}")
    return loader(path)


def save_model(model, path) -> None:
    for types, saver in _SAVERS:
        if isinstance(model, types):
            saver(model, path)
            return
    raise TypeError(f"cannot save model of type {type(model).__name__}")
