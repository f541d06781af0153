"""``butterfuse`` command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 input-format error,
64 configuration or usage error, 65 fine/coarse spatial-ratio violation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from . import btf, params as param_io
from .aliasing import alias_demo
from .config import RunConfig, load_config
from .errors import ConfigError, FormatError, ShapeError
from .fafce import fafce_trace, init_fafce_params, trace_summary
from .gradchecks import TARGETS, run_gradcheck
from .imaging import spectrum_pgm
from .tensor import Tensor, no_grad
from .verify import run_suites

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_FORMAT = 2
EXIT_CONFIG = 64
EXIT_RATIO = 65


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: usage error: {message}\n")


def _read_tensor(path: str) -> Tensor:
    try:
        return btf.read(path)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _cast(obj, dtype):
    return param_io.replace_tensors(obj, {k: Tensor(v.data, dtype=dtype) for k, v in
                                          param_io.named_tensors(obj).items()})


def cmd_fuse(config: RunConfig, a_path: str, b_path: str, out_path: str) -> int:
    a, b = _read_tensor(a_path), _read_tensor(b_path)
    if a.ndim != 3 or b.ndim != 3:
        raise FormatError(f"fuse needs [C,H,W] tensors, got {list(a.dims)} and {list(b.dims)}")
    if a.dims[1:] != (2 * b.dims[1], 2 * b.dims[2]):
        raise ShapeError(f"fine input {list(a.dims)} is not exactly 2x the coarse input "
                         f"{list(b.dims)}")
    channels = a.dims[0]
    params = init_fafce_params(channels, config.rng(), config.damping_size,
                               config.amplifier_size, in_channels_b=b.dims[0],
                               zero=config.init == "zero", upsample=config.upsample,
                               amplify=config.amplify, share_gates=config.share_gates)
    if config.params:
        try:
            params = param_io.load(config.params, params)
        except (OSError, KeyError, ValueError) as exc:
            raise FormatError(f"cannot load parameters from {config.params}: {exc}") from exc
    params = _cast(params, config.dtype)
    with no_grad():
        trace = fafce_trace(Tensor(a.data, dtype=config.dtype), Tensor(b.data, dtype=config.dtype),
                            params)
    out = Path(out_path)
    btf.write(out, trace.b_out)
    manifest = {"a.dims": " ".join(map(str, a.dims)), "b.dims": " ".join(map(str, b.dims)),
                "out.dims": " ".join(map(str, trace.b_out.dims)), "seed": config.seed,
                "precision": config.precision, "init": config.params or config.init,
                "damping_size": config.damping_size, "amplifier_size": config.amplifier_size}
    manifest.update({k: f"{v:.9g}" for k, v in trace_summary(trace).items()})
    trace_path = out.with_name(out.name + ".trace.txt")
    trace_path.write_text("".join(f"{k} {v}\n" for k, v in manifest.items()))
    print(f"wrote {out} {list(trace.b_out.dims)} and {trace_path}")
    return EXIT_OK


def cmd_spectrum(config: RunConfig, in_path: str, out_path: str) -> int:
    image = spectrum_pgm(_read_tensor(in_path))
    Path(out_path).write_bytes(image)
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_alias_demo(config: RunConfig, u: str, length: int) -> int:
    report = alias_demo(u, length)
    print("\n".join(report.lines()))
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_verify(config: RunConfig, faults: dict[str, float] | None = None) -> int:
    results = run_suites(config.seed, config.cases, faults=faults or {})
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed properties: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"all {len(results)} suites passed (seed {config.seed}, {config.cases} cases)")
    return EXIT_OK


def cmd_gradcheck(config: RunConfig, target: str) -> int:
    if config.precision != "double":
        raise ConfigError("gradient checks run in double precision only")
    report = run_gradcheck(target, config)
    width = max(len(k) for k in report.errors)
    for name, err in report.errors.items():
        status = "ok" if err < config.threshold else "FAIL"
        skipped = report.skipped.get(name, 0)
        note = f"  ({skipped} kink probes skipped)" if skipped else ""
        print(f"{status:4}  {name:<{width}}  max rel err {err:.3e}{note}")
    worst = max(report.errors.values())
    verdict = "passed" if report.passed(config.threshold) else "FAILED"
    print(f"{target}: {verdict}, worst {worst:.3e} vs threshold {config.threshold:g}")
    return EXIT_OK if report.passed(config.threshold) else EXIT_VERIFY


def _parse_faults(items: Sequence[str]) -> dict[str, float]:
    faults = {}
    for item in items:
        name, _, value = item.partition("=")
        try:
            faults[name] = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad fault spec {item!r}; expected op=value") from exc
    return faults


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("--out", help="output path")
    for f in fields(RunConfig):
        if f.name == "out":
            continue
        common.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                            metavar=f.name.upper(), help=f"override config key {f.name}")

    parser = _Parser(prog="butterfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("fuse", parents=[common], help="fuse a fine and a coarse BTF tensor")
    p.add_argument("a", help="fine map [C, 2H, 2W]")
    p.add_argument("b", help="coarse map [C, H, W]")
    p = sub.add_parser("spectrum", parents=[common], help="log-magnitude DFT as a PGM image")
    p.add_argument("input")
    p = sub.add_parser("alias-demo", parents=[common], help="frequency folding under subsampling")
    p.add_argument("u", help="normalized frequency in (0, 0.5)")
    p.add_argument("length", type=int, nargs="?", default=40, help="even sequence length N")
    p = sub.add_parser("verify", parents=[common], help="run every invariant and oracle suite")
    p.add_argument("--inject-fault", action="append", default=[], help=argparse.SUPPRESS)
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("target", help=f"one of {', '.join(TARGETS)}")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name, None) is not None}
    try:
        config = load_config(args.config, overrides)
        if args.command == "gradcheck" and args.target not in TARGETS:
            parser.error(f"unknown gradcheck target {args.target!r}; "
                         f"choose from {', '.join(TARGETS)}")
        if args.command in ("fuse", "spectrum") and not config.out:
            raise ConfigError(f"{args.command} needs an output path (--out)")
        if args.command == "fuse":
            return cmd_fuse(config, args.a, args.b, config.out)
        if args.command == "spectrum":
            return cmd_spectrum(config, args.input, config.out)
        if args.command == "alias-demo":
            return cmd_alias_demo(config, args.u, args.length)
        if args.command == "verify":
            return cmd_verify(config, _parse_faults(args.inject_fault))
        return cmd_gradcheck(config, args.target)
    except ConfigError as exc:
        print(f"butterfuse: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"butterfuse: input format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ShapeError as exc:
        print(f"butterfuse: spatial ratio violation: {exc}", file=sys.stderr)
        return EXIT_RATIO


if __name__ == "__main__":
    sys.exit(main())
