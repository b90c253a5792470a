"""handvote command line: synth, encode, decode, train, infer, eval, sweep, selftest.

Exit codes: 0 ok, 1 property/assertion failure, 2 config or format error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .aggregator import estimate_pose
from .codec import encode_targets
from .config import DEFAULTS, ConfigError, RunConfig
from .geometry import GeometryError, depth_to_pointmap

log = logging.getLogger("handvote")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class PropertyFailure(AssertionError):
    pass


def _expand(paths, pattern: str, skip_sidecars: bool = False) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob(pattern))
            if skip_sidecars:
                found = [f for f in found if not (f.with_suffix(".pgm").exists() or f.with_suffix(".dvt").exists()
                                                  or f.with_suffix(".bin").exists() or f.name == "manifest.json")]
            out += found
        else:
            out.append(p)
    return out


def _paired(a: list[Path], b: list[Path], what: str):
    if len(a) != len(b):
        raise ConfigError(f"{len(a)} frames but {len(b)} {what}")
    return zip(a, b)


def cmd_synth(args, cfg: RunConfig) -> int:
    from .synth import generate_dataset

    manifest = generate_dataset(cfg.hand_model(), args.count, args.seed, cfg.camera, args.out,
                                theta=cfg.theta, tau=cfg.tau, noise=cfg.noise, model_name=cfg.model_name)
    print(Path(args.out) / "manifest.json")
    log.info("%d samples", manifest["count"])
    return EXIT_OK


def cmd_encode(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = _expand(args.frames, "*.pgm")
    poses = _expand(args.poses, "*.json", skip_sidecars=True)
    for f, p in _paired(frames, poses, "poses"):
        targets = encode_targets(io.read_depth(f), io.read_pose(p), cfg.theta, cfg.tau)
        io.write_targets(out / f"{f.stem}.dvt", targets)
    print(out)
    return EXIT_OK


def cmd_decode(args, cfg: RunConfig) -> int:
    from dataclasses import replace

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agg = cfg.aggregator
    if args.weighting:
        agg = replace(agg, weighting=args.weighting)
    frames = _expand(args.frames, "*.pgm")
    targets = _expand(args.targets, "*.dvt")
    for f, t in _paired(frames, targets, "target files"):
        frame = io.read_depth(f)
        tg = io.read_targets(t)
        est = estimate_pose(depth_to_pointmap(frame), tg, replace(agg, theta=tg.theta), frame.intrinsics)
        io.write_pose_estimate(out / f"{f.stem}.json", est.joints, est.joint_names, est.status)
    print(out)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from .learner import save_model, train, write_log
    from .learner.training import config_dict

    tc = cfg.train_config
    res = train(args.data, tc)
    names = io.read_json(Path(args.data))["model"]["names"]
    save_model(args.out_model, res.predictor.arch, res.params,
               {"train": config_dict(tc), "joint_names": names})
    if args.log:
        write_log(args.log, res.log)
    final = res.log[-1]["loss"] if res.log else float("nan")
    print(f"{args.out_model} final_loss={final:.6g}")
    return EXIT_OK


def cmd_infer(args, cfg: RunConfig) -> int:
    from .learner import forward, load_model

    predictor, params, desc = load_model(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = desc.get("joint_names", [])
    for f in _expand(args.frames, "*.pgm"):
        frame = io.read_depth(f)
        pred = forward(predictor, params, frame).as_targets(cfg.theta, cfg.tau, names)
        est = estimate_pose(depth_to_pointmap(frame), pred, cfg.aggregator, frame.intrinsics)
        io.write_pose_estimate(out / f"{f.stem}.json", est.joints, est.joint_names, est.status)
    print(out)
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    from .eval import evaluate, write_report

    preds = _expand(args.pred, "*.json", skip_sidecars=True)
    gts = _expand(args.gt, "*.json", skip_sidecars=True)
    if len(preds) != len(gts):
        raise ConfigError(f"{len(preds)} predictions but {len(gts)} ground-truth poses")
    P = [io.read_pose_record(p)[0] for p in preds]
    G = [io.read_pose(g).joints for g in gts]
    res = evaluate(P, G, cfg.thresholds)
    write_report([(args.name, res)], args.out)
    print(f"mean_error_mm={res.mean_error_mm:.6f} frames={res.frame_count} failed={res.failed_frames}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    from .eval import sweep, write_metrics_csv
    from .synth import load_dataset

    grid_src = args.grid
    grid = json.loads(Path(grid_src).read_text()) if Path(grid_src).is_file() else json.loads(grid_src)
    rows = sweep(load_dataset(args.data), grid, cfg.aggregator, cfg.noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "sweep.csv", rows)
    for name, r in rows:
        print(f"{name}: {r.mean_error_mm:.4f} mm ({r.failed_frames} failed of {r.frame_count})")
    return EXIT_OK


def cmd_selftest(args, cfg: RunConfig) -> int:
    from .selftest import run_all

    failures = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += not ok
    if failures:
        raise PropertyFailure(f"{failures} self-test check(s) failed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    d = DEFAULTS
    p = argparse.ArgumentParser(
        prog="handvote",
        description="Dense 3D offset regression for hand pose: synthetic data, target encoding, "
                    "mean-shift decoding, training and evaluation.",
        epilog=(f"config defaults: theta {d['codec']['theta_mm']} mm, tau {d['codec']['tau_px']} px, "
                f"K {d['aggregator']['k']}, sigma {d['aggregator']['sigma_mm']} mm, "
                f"lr {d['train']['lr']}, beta1 {d['train']['beta1']}. "
                "Exit codes: 0 ok, 1 property failure, 2 config/format error, 3 I/O error."),
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help, description=help)
        sp.add_argument("--config", default=None,
                        help="JSON run config (sections camera, codec, aggregator, train, synth, eval); "
                             "default: built-in defaults")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("synth", cmd_synth, "render a synthetic dataset of (frame, pose, targets) triples")
    sp.add_argument("--count", type=int, default=64, help="number of samples (default 64)")
    sp.add_argument("--seed", type=int, default=0, help="dataset seed (default 0)")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("encode", cmd_encode, "encode frames and poses into dense target files")
    sp.add_argument("--frames", nargs="+", required=True, help="PGM depth frames or directories")
    sp.add_argument("--poses", nargs="+", required=True, help="pose JSON files or directories")
    sp.add_argument("--out", required=True, help="output directory for .dvt files")

    sp = add("decode", cmd_decode, "decode dense targets into poses with mean shift")
    sp.add_argument("--frames", nargs="+", required=True, help="PGM depth frames or directories")
    sp.add_argument("--targets", nargs="+", required=True, help=".dvt target files or directories")
    sp.add_argument("--weighting", choices=("weighted", "unweighted", "uniform"), default=None,
                    help="override aggregator.weighting (default from config: weighted)")
    sp.add_argument("--out", required=True, help="output directory for pose JSON")

    sp = add("train", cmd_train, "train the dense predictor on a synthetic dataset")
    sp.add_argument("--data", required=True, help="dataset manifest.json")
    sp.add_argument("--out-model", required=True, help="model descriptor path (.json; blob written as .bin)")
    sp.add_argument("--log", default=None, help="training log CSV (step,loss,loss_R,loss_S,loss_V)")

    sp = add("infer", cmd_infer, "run a trained model and decode poses")
    sp.add_argument("--model", required=True, help="model descriptor written by train")
    sp.add_argument("--frames", nargs="+", required=True, help="PGM depth frames or directories")
    sp.add_argument("--out", required=True, help="output directory for pose JSON")

    sp = add("eval", cmd_eval, "mean joint error and success-rate curve")
    sp.add_argument("--pred", nargs="+", required=True, help="predicted pose files or directories")
    sp.add_argument("--gt", nargs="+", required=True, help="ground-truth pose files or directories")
    sp.add_argument("--name", default="method", help="label used in metrics.csv and the plot legend")
    sp.add_argument("--out", required=True, help="output directory for metrics.csv and success_curve.svg")

    sp = add("sweep", cmd_sweep, "mean error over a grid of aggregator settings on noisy targets")
    sp.add_argument("--data", required=True, help="dataset manifest.json")
    sp.add_argument("--grid", required=True,
                    help='grid JSON (file or literal), keys k, sigma_mm, weighting, e.g. \'{"k": [1, 5]}\'')
    sp.add_argument("--out", required=True, help="output directory for sweep.csv")

    add("selftest", cmd_selftest, "run the built-in property checks; exit 1 on any failure")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        return args.fn(args, cfg)
    except (PropertyFailure, AssertionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, io.FormatError, GeometryError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
