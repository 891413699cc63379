"""Point forecasters: Lasso, gradient-boosted trees and a shape-constrained GAM."""

import json

from .gam import GamModel, fit_gam, predict_gam
from .gbr import BoostedTreesModel, Loss, fit_gbr, predict_gbr
from .lasso import LassoModel, fit_lasso, predict_lasso
from ._common import ColumnMismatchError

FORMAT_VERSION = 1
_KINDS = {"lasso": LassoModel, "gbr": BoostedTreesModel, "gam": GamModel}


def model_to_json(model) -> str:
    return json.dumps({"format_version": FORMAT_VERSION, "model": model.to_dict()})


def model_from_json(text: str):
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    body = doc["model"]
    return _KINDS[body["kind"]].from_dict(body)


__all__ = [
    "BoostedTreesModel", "ColumnMismatchError", "GamModel", "LassoModel", "Loss",
    "fit_gam", "fit_gbr", "fit_lasso", "model_from_json", "model_to_json",
    "predict_gam", "predict_gbr", "predict_lasso",
]
