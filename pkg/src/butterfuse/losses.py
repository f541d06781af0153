"""Box-coordinate, class and focal losses and their weighted total."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .detect import HeadOutput
from .errors import FormatError, ShapeError
from .tensor import Tensor, as_tensor, clip, log, power, record_branch, transpose, tsum

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class GtBox:
    cell: int  # row-major grid cell index i
    slot: int  # responsible box slot j
    x: float
    y: float
    w: float
    h: float
    cls: int


@dataclass(frozen=True)
class GroundTruth:
    grid: int  # S
    boxes_per_cell: int  # B
    classes: int  # K
    boxes: tuple[GtBox, ...]

    def __post_init__(self):
        for b in self.boxes:
            if not 0 <= b.cell < self.grid ** 2:
                raise ValueError(f"cell {b.cell} outside a {self.grid}x{self.grid} grid")
            if not 0 <= b.slot < self.boxes_per_cell:
                raise ValueError(f"slot {b.slot} outside 0..{self.boxes_per_cell - 1}")
            if not (0 <= b.x <= 1 and 0 <= b.y <= 1):
                raise ValueError(f"box centre ({b.x}, {b.y}) outside [0, 1]")
            if not (b.w > 0 and b.h > 0):
                raise ValueError(f"box size ({b.w}, {b.h}) must be positive")
            if not 0 <= b.cls < self.classes:
                raise ValueError(f"class {b.cls} outside 0..{self.classes - 1}")

    def object_cells(self) -> dict[int, int]:
        """Cell index -> class of the object it holds."""
        cells: dict[int, int] = {}
        for b in self.boxes:
            if cells.setdefault(b.cell, b.cls) != b.cls:
                raise ValueError(f"cell {b.cell} holds objects of different classes")
        return cells


@dataclass(frozen=True)
class LossWeights:
    iou: float = 7.5
    cls: float = 0.5
    dfl: float = 1.5


@dataclass(frozen=True)
class LossBreakdown:
    iou: Tensor | float
    cls: Tensor | float
    dfl: Tensor | float
    total: Tensor | float

    def values(self) -> dict[str, float]:
        return {k: float(np.asarray(getattr(v, "data", v)))
                for k, v in vars(self).items()}


def parse_ground_truth(text: str) -> GroundTruth:
    """Header ``S=<int> B=<int> K=<int>`` then one ``i j x y w h class`` record per line."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty ground-truth file")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        s, nb, k = int(header["S"]), int(header["B"]), int(header["K"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad header {lines[0]!r}; expected 'S=<int> B=<int> K=<int>'") from exc
    boxes = []
    for n, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != 7:
            raise FormatError(f"line {n}: expected 7 fields, got {len(fields)}")
        try:
            i, j = int(fields[0]), int(fields[1])
            x, y, w, h = map(float, fields[2:6])
            c = int(fields[6])
        except ValueError as exc:
            raise FormatError(f"line {n}: {exc}") from exc
        boxes.append(GtBox(i, j, x, y, w, h, c))
    try:
        return GroundTruth(s, nb, k, tuple(boxes))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def load_ground_truth(path: str | Path) -> GroundTruth:
    return parse_ground_truth(Path(path).read_text())


def format_ground_truth(gt: GroundTruth) -> str:
    lines = [f"S={gt.grid} B={gt.boxes_per_cell} K={gt.classes}"]
    lines += [f"{b.cell} {b.slot} {b.x!r} {b.y!r} {b.w!r} {b.h!r} {b.cls}" for b in gt.boxes]
    return "\n".join(lines) + "\n"


def select_head(heads: HeadOutput | Sequence[HeadOutput], grid: int) -> HeadOutput:
    if isinstance(heads, HeadOutput):
        heads = [heads]
    for head in heads:
        if head.grid == (grid, grid):
            return head
    raise ShapeError(f"no head with a {grid}x{grid} grid among {[h.grid for h in heads]}")


def _sqrt_nonneg(t: Tensor, diagnostics: dict | None) -> Tensor:
    negative = t.data < 0
    record_branch(negative)
    if diagnostics is not None and negative.any():
        diagnostics["clamped_sizes"] = diagnostics.get("clamped_sizes", 0) + int(negative.sum())
    out = np.sqrt(np.maximum(t.data, 0.0))
    safe = np.where(out > 0, out, 1.0)
    return Tensor.from_op(out, (t,), "sqrt_nonneg",
                          lambda g: (np.where(out > 0, 0.5 * g / safe, 0.0),))


def _gt_index(gt: GroundTruth):
    rows, cols = np.divmod(np.array([b.cell for b in gt.boxes], dtype=np.int64), gt.grid)
    slots = np.array([b.slot for b in gt.boxes], dtype=np.int64)
    return slots, rows, cols


def iou_coordinate_loss(pred: HeadOutput | Sequence[HeadOutput], gt: GroundTruth,
                        diagnostics: dict | None = None) -> Tensor:
    """Squared centre error plus squared sqrt-size error over responsible slots."""
    head = select_head(pred, gt.grid)
    if not gt.boxes:
        return Tensor(0.0)
    slots, rows, cols = _gt_index(gt)
    p = head.box[slots, :, rows, cols]  # [n, 4]
    target = np.array([[b.x, b.y, b.w, b.h] for b in gt.boxes])
    centre = tsum((p[:, :2] - target[:, :2]) ** 2)
    size = tsum((_sqrt_nonneg(p[:, 2:], diagnostics) - np.sqrt(target[:, 2:])) ** 2)
    return centre + size


def cls_loss(pred: HeadOutput | Sequence[HeadOutput], gt: GroundTruth) -> Tensor:
    """Squared error between class probabilities and one-hot labels on object cells."""
    head = select_head(pred, gt.grid)
    cells = gt.object_cells()
    if not cells:
        return Tensor(0.0)
    probs, labels = _object_probs(head, gt, cells)
    return tsum((probs - labels) ** 2)


def _object_probs(head: HeadOutput, gt: GroundTruth, cells: dict[int, int]):
    idx = np.array(sorted(cells), dtype=np.int64)
    rows, cols = np.divmod(idx, gt.grid)
    probs = head.cls[:, rows, cols]  # [K, n]
    labels = np.zeros(probs.dims)
    labels[[cells[i] for i in idx], np.arange(len(idx))] = 1.0
    return probs, labels


def dfl_focal_loss(probs: Tensor, labels, alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    """Focal loss over ``[N, K]`` probabilities with one-hot ``labels``.

    ``-sum y*alpha*(1-p)^gamma*log(p) + (1-y)*(1-alpha)*p^gamma*log(1-p)``,
    probabilities clamped to ``[1e-7, 1 - 1e-7]``.
    """
    probs = as_tensor(probs)
    y = np.asarray(getattr(labels, "data", labels), dtype=float)
    if y.shape != probs.dims:
        raise ShapeError(f"labels {list(y.shape)} and probabilities {list(probs.dims)} differ")
    if not (np.isin(y, (0.0, 1.0)).all() and (y.sum(axis=-1) == 1).all()):
        raise ValueError("labels must be one-hot rows")
    p = clip(probs, PROB_CLAMP, 1 - PROB_CLAMP)
    pos = alpha * y * power(1 - p, gamma) * log(p)
    neg = (1 - alpha) * (1 - y) * power(p, gamma) * log(1 - p)
    return -tsum(pos + neg)


def total_loss(iou, cls, dfl, weights: LossWeights = LossWeights()) -> LossBreakdown:
    for name, part in (("iou", iou), ("cls", cls), ("dfl", dfl)):
        if float(np.asarray(getattr(part, "data", part))) < 0:
            raise ValueError(f"loss component {name} is negative")
    total = weights.iou * iou + weights.cls * cls + weights.dfl * dfl
    return LossBreakdown(iou, cls, dfl, total)


def detection_loss(heads: HeadOutput | Sequence[HeadOutput], gt: GroundTruth,
                   weights: LossWeights = LossWeights(), alpha: float = 0.25,
                   gamma: float = 2.0, diagnostics: dict | None = None) -> LossBreakdown:
    head = select_head(heads, gt.grid)
    iou = iou_coordinate_loss(head, gt, diagnostics)
    cells = gt.object_cells()
    if cells:
        probs, labels = _object_probs(head, gt, cells)
        cls = tsum((probs - labels) ** 2)
        dfl = dfl_focal_loss(transpose(probs, (1, 0)), labels.T, alpha, gamma)
    else:
        cls = dfl = Tensor(0.0)
    return total_loss(iou, cls, dfl, weights)
