"""BTF tensor files and parameter directories.

Layout: ``b"BTF1"``, u32 LE ndim, ndim x u32 LE extents, then
prod(extents) x f32 LE values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"BTF1"
MANIFEST = "manifest.txt"


def encode(t: Tensor | np.ndarray) -> bytes:
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode(buf: bytes) -> Tensor:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("bad magic: not a BTF1 file")
    (ndim,) = struct.unpack_from("<I", buf, 4)
    end = 8 + 4 * ndim
    if len(buf) < end:
        raise FormatError("truncated payload: header ends early")
    dims = struct.unpack_from(f"<{ndim}I", buf, 8)
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) < end + 4 * count:
        raise FormatError(f"truncated payload: expected {count} values, "
                          f"found {(len(buf) - end) // 4}")
    if len(buf) > end + 4 * count:
        raise FormatError("trailing bytes after payload")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=end).reshape(dims)
    return Tensor(data.astype(np.float64))


def write(path: str | Path, t: Tensor | np.ndarray) -> None:
    Path(path).write_bytes(encode(t))


def read(path: str | Path) -> Tensor:
    return decode(Path(path).read_bytes())


def save_dir(path: str | Path, tensors: Mapping[str, Tensor]) -> None:
    """Write named tensors as ``<name>.btf`` plus a ``name d1 d2 ...`` manifest."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, t in tensors.items():
        write(root / f"{name}.btf", t)
        lines.append(" ".join([name, *map(str, t.dims)]))
    (root / MANIFEST).write_text("\n".join(lines) + "\n")


def load_dir(path: str | Path) -> dict[str, Tensor]:
    root = Path(path)
    manifest = root / MANIFEST
    if not manifest.exists():
        raise FormatError(f"missing {MANIFEST} in {root}")
    out = {}
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, *dims = line.split()
        t = read(root / f"{name}.btf")
        if list(t.dims) != [int(d) for d in dims]:
            raise FormatError(f"{name}: manifest dims {dims} disagree with file {list(t.dims)}")
        out[name] = t
    return out
