"""Command-line entry point.

    depthquery simulate --config cfg.json --out scene.json [--seed S] [--frames F]
    depthquery detect   --scene scene.json --config cfg.json --out report.json
    depthquery ablate   --scene scene.json --config cfg.json --out ablation.csv
    depthquery eval     --report report.json [--out ap.csv]
    depthquery plot-bev --report report.json --frame 0 --out bev.svg

Exit codes: 0 ok, 2 config error, 3 I/O or format error, 4 invariant violation.
Failures print exactly one line to stderr: ``depthquery: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, config_to_dict, load_config
from .errors import ConfigError, DepthQueryError, InvariantViolation, PlacementFailure, SchemaVersionError
from .metrics import EvalConfig, mean_ap
from .pipeline import run_ablation, run_sequence
from .plotting import bev_svg
from .serialization import (
    SCHEMA_VERSION,
    load_report,
    load_scene,
    report_detections,
    report_to_dict,
    roi_from_dict,
    save_scene,
    timings_to_dict,
    write_json,
)
from .simworld import generate_scene

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None and args.command != "simulate":
        cfg = dataclasses.replace(cfg, weight_seed=args.seed, stub_seed=args.seed, query_seed=args.seed)
    return cfg


def _seeds(cfg: PipelineConfig, scene_seed: int | None) -> dict:
    return {"scene": scene_seed, "weights": cfg.weight_seed, "stub": cfg.stub_seed, "queries": cfg.query_seed}


def _manifest(out: Path, command: str, cfg: PipelineConfig, seeds: dict, outputs: list[Path], **extra) -> Path:
    path = out.with_name(out.name + ".manifest.json")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "manifest",
        "command": command,
        "version": __version__,
        "config": config_to_dict(cfg),
        "seeds": seeds,
        "outputs": [str(p) for p in outputs + [path]],
        **extra,
    }
    write_json(path, doc)
    return path


def _load_scene(args, cfg: PipelineConfig):
    scene = load_scene(args.scene)
    if args.frames is not None:
        if args.frames < 0:
            raise ConfigError("--frames: must be >= 0")
        scene = dataclasses.replace(scene, frames=scene.frames[: args.frames])
    return scene


def cmd_simulate(args) -> int:
    cfg = _config(args)
    scene_cfg = cfg.scene
    if args.frames is not None:
        if args.frames < 1:
            raise ConfigError("--frames: must be >= 1")
        scene_cfg = dataclasses.replace(scene_cfg, n_frames=args.frames)
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out)
    save_scene(generate_scene(scene_cfg, seed), out)
    _manifest(out, "simulate", dataclasses.replace(cfg, scene=scene_cfg), _seeds(cfg, seed), [out])
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args)
    scene = _load_scene(args, cfg)
    result = run_sequence(scene, cfg)
    out = Path(args.out)
    write_json(out, report_to_dict(result, config_to_dict(cfg), scene.seed))
    timings = out.with_name(out.name + ".timings.json")
    write_json(timings, timings_to_dict(result))
    _manifest(out, "detect", cfg, _seeds(cfg, scene.seed), [out, timings], weights_checksum=result.weights_checksum)
    return EXIT_OK


ABLATION_FIELDS = ["arm", "n_ref_points", "mAP", "mean_ref_distance", "weights_checksum"]


def ablation_csv(arms: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_FIELDS)
    for name in ("fixed", "depth_guided"):
        arm = arms[name]
        writer.writerow([
            name,
            arm.n_refs,
            "" if arm.result.ap.mAP is None else repr(arm.result.ap.mAP),
            "" if arm.mean_ref_distance is None else repr(arm.mean_ref_distance),
            arm.result.weights_checksum,
        ])
    return buf.getvalue()


def cmd_ablate(args) -> int:
    cfg = _config(args)
    scene = _load_scene(args, cfg)
    arms = run_ablation(scene, cfg)
    checksums = {a.result.weights_checksum for a in arms.values()}
    if len(checksums) != 1:
        raise InvariantViolation("ablation arms ran with different weights")
    out = Path(args.out)
    out.write_text(ablation_csv(arms))
    _manifest(out, "ablate", cfg, _seeds(cfg, scene.seed), [out], weights_checksum=checksums.pop())
    return EXIT_OK


def cmd_eval(args) -> int:
    doc = load_report(args.report)
    dets, gts = report_detections(doc)
    cfg = doc["config"]
    result = mean_ap(dets, gts, EvalConfig(tuple(cfg["thresholds"]), tuple(range(cfg["n_classes"]))))
    text = result.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot_bev(args) -> int:
    doc = load_report(args.report)
    n = len(doc["frames"])
    if not 0 <= args.frame < n:
        raise UsageError(f"--frame: {args.frame} out of range for {n} frames")
    fr = doc["frames"][args.frame]
    roi = roi_from_dict(doc["config"]["roi"])
    svg = bev_svg(fr["ref_points"], fr["gt"]["centers"], roi, title=f"frame {args.frame}")
    Path(args.out).write_text(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthquery", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene file")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.set_defaults(func=cmd_simulate)

    for name, func, help_ in (
        ("detect", cmd_detect, "run the pipeline over a scene and write a report"),
        ("ablate", cmd_ablate, "compare fixed and depth-guided queries on a scene"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scene", required=True)
        p.add_argument("--config")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, help="overrides weight, stub and query seeds")
        p.add_argument("--frames", type=int, help="use only the first F frames")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="recompute the AP table of a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot-bev", help="BEV plot of reference points and gt centers")
    p.add_argument("--report", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_bev)
    return parser


def _fail(kind: str, msg: str, code: int) -> int:
    line = " ".join(str(msg).split())
    print(f"depthquery: {kind}: {line}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PlacementFailure, UsageError) as exc:
        return _fail("config-error", exc, EXIT_CONFIG)
    except SchemaVersionError as exc:
        return _fail("io-error", exc, EXIT_IO)
    except json.JSONDecodeError as exc:
        return _fail("io-error", f"malformed JSON: {exc}", EXIT_IO)
    except (OSError, KeyError, TypeError) as exc:
        return _fail("io-error", f"{type(exc).__name__}: {exc}", EXIT_IO)
    except (InvariantViolation, DepthQueryError) as exc:
        return _fail("invariant-violation", exc, EXIT_INVARIANT)


if __name__ == "__main__":
    sys.exit(main())
