"""Model registry and the Papangelou-intensity entry points.

Usage:
    from papangelou import build_model, papangelou, papangelou_ratio

    model = build_model({"kind": "strauss", "z": 1.0, "beta": 1.0, "radius": 0.1}, dim=2)
    lam = papangelou(model, MarkedPoint((0.5, 0.5)), config)
"""

import logging

from knn_model import KnnModel
from pair_model import PAIR_KINDS, PairModel
from voronoi_model import VoronoiModel
from widom_rowlinson_model import WidomRowlinsonModel

logger = logging.getLogger("Models")

PapangelouModel = PairModel | WidomRowlinsonModel | VoronoiModel | KnnModel

MODEL_REGISTRY = {kind: PairModel for kind in PAIR_KINDS}
MODEL_REGISTRY.update({
    WidomRowlinsonModel.KIND: WidomRowlinsonModel,
    VoronoiModel.KIND: VoronoiModel,
    KnnModel.KIND: KnnModel,
})

# "poisson" is the pair model with no interaction
POISSON_ALIAS = {"kind": "strauss", "radius": 0.0, "beta": 0.0}


def build_model(section, dim):
    """Construct a model from a config section with a `kind` tag."""
    section = dict(section)
    kind = section.get("kind")
    if kind == "poisson":
        section.update(POISSON_ALIAS)
        kind = "strauss"
    model_cls = MODEL_REGISTRY.get(kind)
    if model_cls is None:
        raise ValueError(f"Unknown model kind: {kind!r} (expected one of {sorted(MODEL_REGISTRY) + ['poisson']})")
    if "z" not in section:
        raise ValueError(f"Model section for {kind!r} requires z")
    try:
        model = model_cls.from_section(section, dim)
    except KeyError as e:
        raise ValueError(f"Model section for {kind!r} is missing {e.args[0]!r}") from None
    logger.debug(f"Built model {model!r}")
    return model


def local_energy(model, x, config):
    return model.local_energy(x, config)


def papangelou(model, x, config):
    """lambda*(x, gamma) = z * exp(-beta * h(x, gamma)); 0 for infinite energy."""
    return model.papangelou(x, config)


def papangelou_ratio(model, x, config, y):
    """lambda*(x, gamma + y) / lambda*(x, gamma); HardCoreConflict when lambda*(x, gamma) = 0."""
    return model.papangelou_ratio(x, config, y)


def global_energy(model, config):
    return model.global_energy(config)
