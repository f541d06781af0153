"""One plain gradient-descent step of the toy detector on a fixed scene."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .detect import detector_forward, init_detector_params
from .losses import GroundTruth, detection_loss, parse_ground_truth
from .params import sgd_step, trainable
from .tensor import Tensor, backward, no_grad

TOY_SCENE = "S=2 B=1 K=2\n0 0 0.5 0.5 0.3 0.4 0\n3 0 0.4 0.6 0.2 0.2 1\n"


@dataclass(frozen=True)
class StepResult:
    seed: int
    before: float
    after: float

    @property
    def decreased(self) -> bool:
        return self.after < self.before


def toy_image(size: int, seed: int) -> Tensor:
    return Tensor(np.random.default_rng([seed, 7]).uniform(0, 1, (3, size, size)))


def descent_step(seed: int, config: RunConfig = RunConfig(), lr: float = 1e-3, size: int = 64,
                 gt: GroundTruth | None = None) -> StepResult:
    """Loss before and after one step of size ``lr`` from the seed's random initialization."""
    gt = gt or parse_ground_truth(TOY_SCENE)
    if size // 32 != gt.grid:
        raise ValueError(f"a {size}x{size} image has no {gt.grid}x{gt.grid} head")
    config = replace(config, seed=seed)
    params = trainable(init_detector_params(config.channels, gt.classes, config.rng(),
                                            gt.boxes_per_cell, config.damping_size,
                                            config.amplifier_size))
    image = toy_image(size, seed)

    def loss(p):
        out = detector_forward(image, p)
        return detection_loss(out.heads, gt, config.loss_weights, config.alpha,
                              config.gamma).total

    before = loss(params)
    backward(before)
    stepped = sgd_step(params, lr)
    with no_grad():
        after = loss(stepped)
    return StepResult(seed, before.item(), after.item())
