"""``plenopose`` command-line entry point.

Exit codes: 0 on success, 1 when a component fails (a one-line JSON error
record goes to stderr), 2 for invalid configuration or usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import files, pipeline
from .config import ConfigError, PipelineConfig, describe, load_config
from .dlv import DlvConfig, build_dlv, store_dlv
from .lfio import load_lightfield
from .scene import SceneSpec, planted_cylinder_spec, planted_plane_spec

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

ESTIMATE_KEYS = ("likelihood", "diffusion", "termination", "seed")
DLV_KEYS = ("dlv",)
ALL_KEYS = ("dlv", "likelihood", "diffusion", "termination", "loss", "seed")


class UsageError(ValueError):
    pass


def _threads(args) -> int:
    env = os.environ.get("PLENOPOSE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"PLENOPOSE_THREADS must be an integer, got {env!r}") from exc
    return max(1, args.threads)


def _config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _pair(text: str, kind, n: int, name: str):
    try:
        vals = tuple(kind(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"{name} must be {n} comma-separated numbers") from exc
    if len(vals) != n:
        raise UsageError(f"{name} must be {n} comma-separated numbers")
    return vals


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    if args.spec:
        d = files.read_json(args.spec, "scene spec")
        try:
            spec = SceneSpec.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scene spec {args.spec}: {exc}") from exc
    elif args.preset == "planted-cylinder":
        spec = planted_cylinder_spec(seed=args.seed)
    else:
        spec = planted_plane_spec(seed=args.seed)
    pipeline.synthesize(spec, args.out)
    return EXIT_OK


def cmd_dlv(args) -> int:
    cfg = _config(args)
    over = cfg.dlv.to_dict()
    if args.planes is not None:
        over["num_planes"] = args.planes
    if args.range:
        over["depth_min"], over["depth_max"] = _pair(args.range, float, 2, "--range")
    try:
        dcfg = DlvConfig(**over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lf = load_lightfield(args.input)
    cam = pipeline.require_camera(args.input)
    roi = _pair(args.roi, int, 4, "--roi") if args.roi else (0, 0, lf.spatial_w, lf.spatial_h)
    store_dlv(build_dlv(lf, cam, roi, dcfg, threads=_threads(args)), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _config(args)
    model = files.read_model(args.model)
    votes = files.read_votes(args.votes)
    label = args.label or model.label
    if label not in votes:
        raise pipeline.PipelineError(f"{args.votes} has no votes for object {label!r}")
    seg = files.read_seg(args.seg)
    cam = pipeline.require_camera(args.lf)
    threads = _threads(args)
    if args.dlv:
        from .dlv import load_dlv
        vol = load_dlv(args.dlv)
    else:
        vol = pipeline.object_dlv(load_lightfield(args.lf), cam, votes[label], cfg, threads)
    res = pipeline.estimate_object(seg, votes[label], vol, model, cam, cfg, threads)
    files.write_pose(res.pose, args.out, res.weight, res.iterations)
    return EXIT_OK


def cmd_eval(args) -> int:
    estimates = pipeline.read_estimates(args.est)
    seg_pred = files.read_seg(args.seg_pred) if args.seg_pred else None
    report = pipeline.evaluate(estimates, args.gt, args.max_threshold, seg_pred)
    files.dump_json(report, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    pipeline.run(args.input, args.out, cfg, _threads(args))
    return EXIT_OK


def cmd_plot_data(args) -> int:
    report = files.read_json(args.report, "report")
    text = pipeline.plot_csv(report)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plenopose",
                                     description="Light-field 6D pose estimation for transparent objects.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    def add(name, help_text, keys=()):
        epilog = describe(keys) if keys else "config keys read: none"
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=epilog, formatter_class=fmt)
        return p

    def threads(p):
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (PLENOPOSE_THREADS overrides this)")

    p = add("synth", "render a synthetic scene directory")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="scene spec JSON")
    src.add_argument("--preset", choices=["planted-cylinder", "planted-plane"])
    p.add_argument("--seed", type=int, default=0, help="texture and noise seed for presets")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = add("dlv", "build a depth likelihood volume", DLV_KEYS)
    p.add_argument("--input", required=True, help="light-field container directory")
    p.add_argument("--roi", help="x,y,w,h (default: whole image)")
    p.add_argument("--planes", type=int, help="number of depth planes")
    p.add_argument("--range", help="dmin,dmax in meters")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    threads(p)
    p.set_defaults(func=cmd_dlv)

    p = add("estimate", "estimate one object's pose", ("dlv",) + ESTIMATE_KEYS)
    p.add_argument("--lf", required=True, help="light-field container directory")
    p.add_argument("--seg", required=True, help="class-index segmentation PNG")
    p.add_argument("--votes", required=True, help="votes JSON")
    p.add_argument("--model", required=True, help="object model JSON")
    p.add_argument("--label", help="object label (default: the model's)")
    p.add_argument("--dlv", help="stored DLV directory to use instead of building one")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", required=True, help="pose JSON to write")
    threads(p)
    p.set_defaults(func=cmd_estimate)

    p = add("eval", "score estimated poses against ground truth")
    p.add_argument("--est", required=True, help="directory of <label>/pose.json")
    p.add_argument("--gt", required=True, help="scene directory with gt.json and models/")
    p.add_argument("--seg-pred", help="predicted segmentation PNG to score against the scene's")
    p.add_argument("--max-threshold", type=float, default=0.1, help="ADD-S curve range in meters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = add("run", "DLV, pose estimation and evaluation for every object of a scene", ALL_KEYS)
    p.add_argument("--input", required=True, help="scene directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", required=True)
    threads(p)
    p.set_defaults(func=cmd_run)

    p = add("plot-data", "accuracy-threshold curve of a report as CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_plot_data)
    return parser


def _error(kind: str, exc: BaseException) -> None:
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    path = getattr(exc, "path", None) or getattr(exc, "filename", None)
    if path:
        rec["path"] = str(path)
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "threads"):
            args.threads = _threads(args)  # validated before any work
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        _error("config", exc)
        return EXIT_CONFIG
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        _error("failure", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
