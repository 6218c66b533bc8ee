"""Mean-field stochastic LQ control with random coefficients on scenario trees.

Instances are JSON documents (dict, JSON text or a path to a file); reports
come back as dicts.
"""

import json
import os

from . import _mfslq
from ._mfslq import ConfigError, Error, ResourceLimitError, ShapeError, StageError, default_seed

__all__ = [
    "ConfigError",
    "Error",
    "ResourceLimitError",
    "ShapeError",
    "StageError",
    "corpus",
    "default_seed",
    "instance1",
    "instance1_random",
    "operators",
    "oracle",
    "riccati_root",
    "solve",
    "verify",
]


def _text(instance):
    if isinstance(instance, dict):
        return json.dumps(instance)
    if isinstance(instance, (str, os.PathLike)) and os.path.exists(instance):
        with open(instance, encoding="utf-8") as f:
            return f.read()
    if isinstance(instance, str):
        return instance
    raise TypeError("instance must be a dict, JSON text or a file path")


def solve(instance, tol=1e-8):
    """Optimal control, multipliers and cost of an instance."""
    return json.loads(_mfslq.solve(_text(instance), tol))


def verify(instance, seed=default_seed, particles=20000):
    """Runs every invariant check; the report has a list of checks with pass flags."""
    return json.loads(_mfslq.verify(_text(instance), seed, particles))


def operators(instance):
    """P xi, L1 and L2 as NumPy arrays."""
    return _mfslq.operators(_text(instance))


def oracle(instance):
    """Brute-force minimum of the discrete cost over adapted node controls."""
    return _mfslq.oracle(_text(instance))


def riccati_root(instance, euler=False):
    """Riccati solution at the root node of every level."""
    return _mfslq.riccati_root(_text(instance), euler)


def corpus(seed=default_seed):
    return [json.loads(doc) for doc in _mfslq.corpus(seed)]


def instance1(steps=4):
    return json.loads(_mfslq.instance1(steps))


def instance1_random(steps=4):
    return json.loads(_mfslq.instance1_random(steps))
