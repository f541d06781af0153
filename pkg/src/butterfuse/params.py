"""Flatten and rebuild nested parameter dataclasses by dotted name."""

from __future__ import annotations

import dataclasses
from typing import Any, Mapping

import numpy as np

from . import btf
from .tensor import Tensor


def named_tensors(obj: Any, prefix: str = "") -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    if isinstance(obj, Tensor):
        out[prefix] = obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            out.update(named_tensors(getattr(obj, f.name), _join(prefix, f.name)))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out.update(named_tensors(item, _join(prefix, str(i))))
    return out


def replace_tensors(obj: Any, values: Mapping[str, Tensor], prefix: str = "") -> Any:
    """Copy of ``obj`` with every named tensor found in ``values`` swapped in."""
    if isinstance(obj, Tensor):
        return values.get(prefix, obj)
    if dataclasses.is_dataclass(obj):
        changes = {f.name: replace_tensors(getattr(obj, f.name), values, _join(prefix, f.name))
                   for f in dataclasses.fields(obj)}
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, (list, tuple)):
        return type(obj)(replace_tensors(item, values, _join(prefix, str(i)))
                         for i, item in enumerate(obj))
    return obj


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def trainable(obj: Any) -> Any:
    """Copy of ``obj`` whose tensors are fresh leaves with ``requires_grad``."""
    return replace_tensors(obj, {k: Tensor(v.data, requires_grad=True)
                                 for k, v in named_tensors(obj).items()})


def sgd_step(obj: Any, lr: float) -> Any:
    """Plain gradient-descent update using the ``.grad`` left by ``backward``."""
    new = {}
    for name, t in named_tensors(obj).items():
        g = t.grad if t.grad is not None else 0.0
        new[name] = Tensor(t.data - lr * g)
    return replace_tensors(obj, new)


def count(obj: Any) -> int:
    return int(sum(np.prod(t.dims) for t in named_tensors(obj).values()))


def save(path, obj: Any) -> None:
    btf.save_dir(path, named_tensors(obj))


def load(path, template: Any) -> Any:
    """Load a parameter directory into the structure of ``template``."""
    loaded = btf.load_dir(path)
    expected = named_tensors(template)
    missing = sorted(set(expected) - set(loaded))
    if missing:
        raise btf.FormatError(f"parameter directory lacks {missing}")
    for name, t in expected.items():
        if loaded[name].dims != t.dims:
            raise btf.FormatError(f"{name}: expected dims {list(t.dims)}, "
                                  f"found {list(loaded[name].dims)}")
    return replace_tensors(template, loaded)
