"""Parameter construction and traversal.

Weights are drawn uniformly in +-1/sqrt(fan_in) from a seeded generator;
biases and normalization shifts start at zero, gains at one.  Parameter
containers are plain dataclasses; ``named_parameters`` walks them
depth-first in field order, yielding stable slash-separated paths used for
checkpointing.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator

import numpy as np

from .autodiff import Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(float(fan_in))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def named_parameters(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield (path, tensor) pairs for every learnable tensor under obj."""
    if isinstance(obj, Tensor):
        if obj.requires_grad:
            yield prefix, obj
        return
    if dataclasses.is_dataclass(obj):
        for field in dataclasses.fields(obj):
            child = getattr(obj, field.name)
            sub = f"{prefix}/{field.name}" if prefix else field.name
            yield from named_parameters(child, sub)
        return
    if isinstance(obj, (list, tuple)):
        for i, child in enumerate(obj):
            sub = f"{prefix}/{i}" if prefix else str(i)
            yield from named_parameters(child, sub)
        return
    # anything else (ints, arrays of constants, None) carries no parameters


def parameter_count(obj) -> int:
    return sum(t.size for _, t in named_parameters(obj))


def zero_all_grads(obj) -> None:
    for _, t in named_parameters(obj):
        t.zero_grad()
