"""Python access to the native geoentity representation core.

Geoentities are passed as dicts in the line-delimited ingestion format
({"id", "parent_id", "kind", "coords", "tags"}).
"""

import json

from . import _nara
from ._nara import NumericError, ParseError, ShapeError, ValidationError, macro_f1, weighted_f1

RELATIONS = ("disjoint", "intersects", "adjacent", "contains_within")

__all__ = [
    "RELATIONS",
    "NumericError",
    "ParseError",
    "ShapeError",
    "ValidationError",
    "classify_relation",
    "default_city_params",
    "default_train_config",
    "embed",
    "generate_city",
    "gradcheck",
    "macro_f1",
    "min_distance",
    "probe_classify",
    "relcheck",
    "train",
    "weighted_f1",
]


def _line(record):
    return record if isinstance(record, str) else json.dumps(record)


def classify_relation(a, b):
    return _nara.classify_relation(_line(a), _line(b))


def min_distance(a, b):
    return _nara.min_distance(_line(a), _line(b))


def default_city_params():
    return json.loads(_nara.default_city_params())


def default_train_config():
    return json.loads(_nara.default_train_config())


def generate_city(**overrides):
    """Returns (records, labels); labels map "zone"/"speed" to {id: value}."""
    params = default_city_params()
    params.update(overrides)
    lines, labels = _nara.generate_city(json.dumps(params))
    labels = json.loads(labels)
    return [json.loads(x) for x in lines], {k: {int(i): v for i, v in d.items()} for k, d in labels.items()}


def train(records, out_dir="", **overrides):
    """Pretrains on the records. Nested keys use dicts, e.g. loss={"alpha_rsr": 0}.
    Returns (checkpoint dict, per-epoch mean joint loss)."""
    cfg = default_train_config()
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    ckpt, losses = _nara.train([_line(r) for r in records], json.dumps(cfg), out_dir)
    return json.loads(ckpt), losses


def embed(checkpoint, records, ids, radius=100.0, mask_target=False, random_context=False, seed=0):
    """Returns (h_fused, h_sem) as arrays with one row per id."""
    return _nara.embed(json.dumps(checkpoint), [_line(r) for r in records], list(ids), radius, mask_target,
                       random_context, seed)


def probe_classify(features, labels, seed=0, epochs=200, lr=1e-2):
    return json.loads(_nara.probe_classify(features, list(labels), seed, epochs, lr))


def relcheck(pairs=1000, seed=0):
    return json.loads(_nara.relcheck(pairs, seed))


def gradcheck(windows=20, seed=0):
    return json.loads(_nara.gradcheck(windows, seed))
