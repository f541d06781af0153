"""Finite-difference gradient checks of each module at toy sizes.

Every target builds a scalar objective (a fixed random projection of the
module output, or the detection loss) over named parameter groups and
compares reverse-mode gradients with central differences. Probes that
straddle a kink of a piecewise op (bilinear cell change, max-pool argmax,
clamp) are discarded and counted, since a central difference is not a
derivative estimate there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .config import RunConfig
from .detect import decode_head, detector_forward, init_detector_params
from .displacement import (DisplacementParams, displacement_field, init_displacement_params,
                           local_cosine_similarity, resample)
from .fafce import fafce_forward, init_fafce_params
from .losses import detection_loss, parse_ground_truth
from .params import named_tensors, replace_tensors
from .phffnet import PyramidFeatures, init_phff_params, phffnet_forward
from .tensor import Tensor, grad_check_params, tsum
from .training import TOY_SCENE
from .triggers import TriggerParams, chfa_apply, chfa_kernels, clfd_apply, clfd_kernels


@dataclass
class GradReport:
    target: str
    errors: dict[str, float]
    skipped: dict[str, int] = field(default_factory=dict)

    def passed(self, threshold: float) -> bool:
        return all(e < threshold for e in self.errors.values())


def _projection(rng, *shapes):
    return [rng.standard_normal(s) for s in shapes]


def _triggers(config: RunConfig, rng):
    c = 3
    tp = TriggerParams(Tensor(0.5 * rng.standard_normal((config.damping_size ** 2, c, 3, 3))),
                       Tensor(0.5 * rng.standard_normal((config.amplifier_size ** 2, c, 3, 3))))
    groups = {"clfd": tp.clfd, "chfa": tp.chfa, "m": Tensor(rng.standard_normal((c, 6, 6))),
              "a": Tensor(rng.standard_normal((c, 6, 6))),
              "b": Tensor(rng.standard_normal((c, 3, 3)))}
    r1, r2 = _projection(rng, (c, 6, 6), (c, 6, 6))

    def f(p):
        params = TriggerParams(p["clfd"], p["chfa"])
        up = clfd_apply(p["b"], clfd_kernels(p["m"], params))
        sharp = chfa_apply(p["a"], chfa_kernels(p["m"], params))
        return tsum(up * r1) + tsum(sharp * r2)

    return f, groups, None


def _displacement(config: RunConfig, rng):
    c = 3
    dp = init_displacement_params(c, rng, scale=0.5)
    groups = {"orient": dp.orient, "scale": dp.scale,
              "m": Tensor(rng.standard_normal((c, 6, 6))),
              "x": Tensor(rng.standard_normal((c, 6, 6)))}
    (r,) = _projection(rng, (c, 6, 6))

    def f(p):
        s = local_cosine_similarity(p["m"])
        d = displacement_field(p["m"], s, DisplacementParams(p["orient"], p["scale"]))
        return tsum(resample(p["x"], d) * r)

    return f, groups, None


def _fafce_params(config: RunConfig, c: int, rng):
    params = init_fafce_params(c, rng, config.damping_size, config.amplifier_size, scale=0.5,
                               upsample=config.upsample, amplify=config.amplify,
                               share_gates=config.share_gates)
    # move the gates off 1 so that each gate group has a generic gradient
    gates = {k: Tensor(1 + 0.3 * rng.standard_normal(c)) for k in ("w_a1", "w_b1", "w_a3", "w_b3")}
    return replace_tensors(params, gates)


def _fafce(config: RunConfig, rng):
    c = 4
    params = _fafce_params(config, c, rng)
    groups = dict(named_tensors(params))
    groups["a"] = Tensor(rng.standard_normal((c, 8, 8)))
    groups["b"] = Tensor(rng.standard_normal((c, 4, 4)))
    (r,) = _projection(rng, (c, 8, 8))

    def f(p):
        net = replace_tensors(params, {k: v for k, v in p.items() if k not in ("a", "b")})
        return tsum(fafce_forward(p["a"], p["b"], net) * r)

    return f, groups, config.probes


def _phffnet(config: RunConfig, rng):
    c = 3
    params = init_phff_params(c, rng, fafce=_fafce_params(config, c, rng))
    params = replace_tensors(params, {k: Tensor(3 * v.data) for k, v in named_tensors(params).items()
                                      if ".casf." in k})
    sizes = (16, 8, 4, 2)
    groups = dict(named_tensors(params, "neck"))
    for name, s in zip(("c2", "c3", "c4", "c5"), sizes):
        groups[name] = Tensor(rng.standard_normal((c, s, s)))
    rs = _projection(rng, *[(c, s, s) for s in sizes])

    def f(p):
        net = replace_tensors(params, {k[5:]: v for k, v in p.items() if k.startswith("neck.")})
        fused = phffnet_forward(PyramidFeatures(p["c2"], p["c3"], p["c4"], p["c5"]), net)
        out = None
        for x, r in zip(fused.head_inputs, rs):
            term = tsum(x * r)
            out = term if out is None else out + term
        return out

    return f, groups, config.probes


def _loss(config: RunConfig, rng):
    gt = parse_ground_truth("S=3 B=2 K=3\n0 0 0.5 0.5 0.3 0.4 0\n4 1 0.2 0.7 0.6 0.1 2\n"
                            "8 0 0.9 0.1 0.2 0.2 1\n8 1 0.4 0.4 0.5 0.5 1\n")
    groups = {"raw": Tensor(rng.standard_normal((5 * 2 + 3, 3, 3)))}

    def f(p):
        head = decode_head(p["raw"], 2)
        return detection_loss(head, gt, config.loss_weights, config.alpha, config.gamma).total

    return f, groups, None


def _end2end(config: RunConfig, rng):
    gt = parse_ground_truth(TOY_SCENE)
    params = init_detector_params(4, gt.classes, rng, gt.boxes_per_cell,
                                  config.damping_size, config.amplifier_size)
    image = Tensor(rng.uniform(0, 1, (3, 64, 64)))

    def f(p):
        out = detector_forward(image, replace_tensors(params, p))
        return detection_loss(out.heads, gt, config.loss_weights, config.alpha,
                              config.gamma).total

    return f, dict(named_tensors(params)), config.probes


TARGETS: dict[str, Callable] = {
    "triggers": _triggers,
    "displacement": _displacement,
    "fafce": _fafce,
    "phffnet": _phffnet,
    "loss": _loss,
    "end2end": _end2end,
}


def run_gradcheck(target: str, config: RunConfig = RunConfig(),
                  probes: int | None | str = "config") -> GradReport:
    """Check ``target``; ``probes=None`` forces an exhaustive check of every element."""
    if target not in TARGETS:
        raise KeyError(f"unknown gradcheck target {target!r}; choose from {sorted(TARGETS)}")
    rng = config.rng(1000 + sorted(TARGETS).index(target))
    f, groups, default_probes = TARGETS[target](config, rng)
    limit = default_probes if probes == "config" else probes
    skipped: dict[str, int] = {}
    errors = grad_check_params(f, groups, eps=config.eps, max_elements=limit, rng=rng,
                               skip_kinks=True, skipped=skipped)
    return GradReport(target, errors, skipped)
