"""Command-line entry point: ``streammotion <subcommand> [flags]``.

Exit codes: 0 success, 2 usage or validation error, 1 runtime error.
Machine-readable results go to stdout as JSON (or to ``--json-out``);
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from streammotion import attention, harness, metrics, spectral, world
from streammotion.config import load_config
from streammotion.errors import StreamMotionError, ValidationError
from streammotion.motion_model import (
    load_motion,
    load_trajectory,
    read_depth,
    read_pgm,
    save_trajectory,
    write_pgm,
)
from streammotion.smoothing import smooth_trajectory
from streammotion.soft_mask import soft_mask

log = logging.getLogger("streammotion")


def _emit(payload, args):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if getattr(args, "json_out", None):
        Path(args.json_out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _config(args, overrides):
    return load_config(args.config, overrides)


def _write_matrix_csv(mat, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(mat):
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_attend(args):
    cfg = _config(args, {"attention.window_size": args.window, "attention.fusion": args.fusion,
                         "attention.seed": args.seed})
    if args.features:
        frames = attention.read_features(args.features)
    else:
        frames = harness.random_features(args.frames, args.tokens, args.dim, cfg.attention.seed)
    d = frames[0].shape[1]
    params = attention.AttentionParams.random(d, cfg.attention.window_size, cfg.attention.seed,
                                              cfg.attention.fusion)
    payload = {"frames": len(frames), "tokens": frames[0].shape[0], "dim": d,
               "window_size": params.window_size, "fusion": params.fusion, "mode": args.mode}
    outputs = None
    if args.mode in ("stream", "both"):
        probe = harness.latency_probe(frames, params=params)
        outputs = attention.stream_forward(frames, params)
        payload["ops_per_frame"] = probe["ops"]
        payload["constant_work"] = probe["constant_work"]
    if args.mode in ("offline", "both"):
        offline = attention.offline_window_forward(frames, params)
        if outputs is not None:
            payload["max_abs_diff"] = max(float(np.max(np.abs(a - b)))
                                          for a, b in zip(outputs, offline))
        else:
            outputs = offline
    if args.out:
        attention.write_features(outputs, args.out)
    _emit(payload, args)


def cmd_smooth(args):
    cfg = _config(args, {
        "smoother.alpha": args.alpha, "smoother.buffer_size": args.buffer,
        "smoother.lambda_clamp": args.lambda_clamp,
        "smoother.clamp_enabled": False if args.no_clamp else None,
        "smoother.recency_flip": True if args.recency_flip else None,
    })
    traj = load_trajectory(args.input)
    smoothed = smooth_trajectory(traj, cfg.smoother)
    save_trajectory(smoothed, args.out)
    payload = {"frames": len(traj), "smoother": asdict(cfg.smoother)}
    if len(traj) >= 4:
        payload["jitter_raw"] = metrics.jitter(traj.translations()[:, None])
        payload["jitter_smoothed"] = metrics.jitter(smoothed.translations()[:, None])
    if args.figure:
        from streammotion.plotting import plot_trajectories
        plot_trajectories([traj.translations(), smoothed.translations()], args.figure,
                          labels=["raw", "smoothed"])
    _emit(payload, args)


def cmd_mask(args):
    cfg = _config(args, {"mask.kernel_size": args.kernel_size,
                         "mask.dilation_iterations": args.iterations, "mask.sigma": args.sigma})
    grid = read_pgm(args.input)
    binary = (np.asarray(grid.values) > 0.5).astype(float)
    soft = soft_mask(binary, cfg.mask)
    write_pgm(soft, args.out)
    if args.figure:
        from streammotion.plotting import plot_mask
        plot_mask(soft.values, args.figure)
    _emit({"height": soft.height, "width": soft.width, "max": float(soft.values.max()),
           "coverage": float(binary.mean())}, args)


def cmd_scale(args):
    cfg = _config(args, {"scale.frames": args.frames, "scale.dilation": args.dilation})
    if len(args.slam_depth) != len(args.metric_depth):
        raise ValidationError("need one metric depth map per SLAM depth map")
    masks = args.human_mask or []
    if masks and len(masks) != len(args.slam_depth):
        raise ValidationError("need one human mask per depth pair")
    pairs = []
    for i, (sd, md) in enumerate(zip(args.slam_depth, args.metric_depth)):
        mask = read_pgm(masks[i]) if masks else None
        pairs.append(world.DepthPair(read_depth(sd), read_depth(md), mask))
    ratios = world.scale_ratios(pairs, cfg.scale.dilation, cfg.scale.frames)
    s = world.estimate_scale(pairs, cfg.scale.dilation, cfg.scale.frames)
    if args.out:
        counts, edges = np.histogram(ratios, bins=args.bins)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    _emit({"scale": s, "pixels": int(ratios.size), "frames_used": min(len(pairs), cfg.scale.frames)},
          args)


def cmd_spectrogram(args):
    cfg = _config(args, {"stft.n_fft": args.n_fft, "stft.hop": args.hop,
                         "stft.channel_mode": args.channel_mode,
                         "stft.symmetric": True if args.symmetric else None})
    seq = load_motion(args.input)
    mag = spectral.spectrogram(seq, cfg.stft)
    _write_matrix_csv(mag, args.out)
    payload = {"bins": int(mag.shape[0]), "frames": int(mag.shape[1])}
    if args.gt:
        gt = spectral.spectrogram(load_motion(args.gt), cfg.stft)
        payload["rmse_norm"] = spectral.rmse_norm(gt, mag)
        payload["corr_norm"] = spectral.corr_norm(gt, mag)
    if args.figure:
        from streammotion.plotting import plot_spectrogram
        plot_spectrogram(mag, args.figure)
    _emit(payload, args)


def cmd_metrics(args):
    cfg = _config(args, {"metrics.segment_len": args.segment_len})
    pred = load_motion(args.pred)
    gt = load_motion(args.gt)
    kwargs = {}
    if args.pred_verts and args.gt_verts:
        kwargs["pred_vertices"] = load_motion(args.pred_verts)
        kwargs["gt_vertices"] = load_motion(args.gt_verts)
    if args.pred_traj and args.gt_traj:
        pt, gt_t = load_trajectory(args.pred_traj), load_trajectory(args.gt_traj)
        kwargs.update(pred_root=pt.translations(), gt_root=gt_t.translations(),
                      pred_rot=pt.rotations(), gt_rot=gt_t.rotations())
    report = metrics.evaluate(pred, gt, segment_len=cfg.metrics.segment_len,
                              root_joint=cfg.metrics.root_joint, fps=args.fps, **kwargs)
    row = report.as_dict()
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            w.writeheader()
            w.writerow({k: "" if v is None else repr(v) for k, v in row.items()})
    units = dict(metrics.MetricReport.UNITS)
    if args.fps:
        units.update(accel_error="mm/s^2", jitter="mm/s^3")
    _emit({"metrics": row, "units": units}, args)


def cmd_synth(args):
    spec = harness.SynthSpec(kind=args.kind, frames=args.frames, noise_sigma_t=args.sigma_t,
                             noise_sigma_r=args.sigma_r, seed=args.seed, radius=args.radius)
    clean, noisy = harness.generate(spec)
    if args.out_clean:
        save_trajectory(clean, args.out_clean)
    if args.out_noisy:
        save_trajectory(noisy, args.out_noisy)
    _emit({"kind": spec.kind, "frames": spec.frames, "seed": spec.seed}, args)


def cmd_run(args):
    cfg = _config(args, {
        "smoother.alpha": args.alpha, "smoother.buffer_size": args.buffer,
        "smoother.lambda_clamp": args.lambda_clamp,
        "smoother.clamp_enabled": False if args.no_clamp else None,
        "attention.window_size": args.window, "attention.seed": args.seed,
    })
    if args.poses:
        poses = load_trajectory(args.poses)
    else:
        spec = harness.SynthSpec(kind=args.kind, frames=args.frames, noise_sigma_t=args.sigma_t,
                                 noise_sigma_r=args.sigma_r, seed=cfg.attention.seed)
        poses = harness.generate(spec)[1]
    if args.features:
        frames = attention.read_features(args.features)
    else:
        frames = harness.random_features(len(poses), args.tokens, args.dim, cfg.attention.seed)
    scale = args.scale if args.scale is not None else poses.scale
    pcfg = harness.PipelineConfig(window_size=cfg.attention.window_size,
                                  fusion=cfg.attention.fusion, smoother=cfg.smoother,
                                  scale=scale, seed=cfg.attention.seed)
    results = []
    with open(args.out, "w") as fh:
        for r in harness.run_pipeline(frames, poses, pcfg):
            fh.write(json.dumps(r.record()) + "\n")
            results.append(r)
    warmup = max(cfg.attention.window_size - 1, cfg.smoother.buffer_size)
    probe = harness.latency_probe(results, warmup=min(warmup, len(results)))
    probe.pop("ops")
    if args.probe:
        Path(args.probe).write_text(json.dumps(probe, indent=2, sort_keys=True) + "\n")
    _emit({"frames": len(results), "out": args.out, "constant_work": probe["constant_work"]}, args)


def cmd_delay(args):
    mode = "offline_batch" if args.mode in ("offline", "offline_batch") else "online"
    model = harness.DelayModel(mode, args.fps, args.frames)
    _emit({"mode": mode, "fps": args.fps, "frames": args.frames,
           "avg_delay_s": harness.avg_delay(model), "total_delay_s": harness.total_delay(model)},
          args)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="streammotion", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (fallback: $STREAMMOTION_CONFIG)")
    common.add_argument("--json-out", help="write the JSON result here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    def smoother_flags(p):
        p.add_argument("--alpha", type=float)
        p.add_argument("--buffer", type=int, help="history buffer size B")
        p.add_argument("--lambda-clamp", type=float)
        p.add_argument("--no-clamp", action="store_true")

    p = add("attend", cmd_attend, "streaming / offline windowed attention over a feature stream")
    p.add_argument("--features", help="binary f32 feature stream")
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--tokens", type=int, default=4)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--window", type=int)
    p.add_argument("--fusion", choices=attention.FUSION_MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("stream", "offline", "both"), default="stream")
    p.add_argument("--out", help="write fused outputs as a binary f32 stream")

    p = add("smooth", cmd_smooth, "EMA-smooth a trajectory JSONL")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    smoother_flags(p)
    p.add_argument("--recency-flip", action="store_true",
                   help="weight the newest sample most instead of the oldest")
    p.add_argument("--figure", help="also render raw vs smoothed paths to this image")

    p = add("mask", cmd_mask, "soft confidence mask from a binary PGM mask")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-k", "--kernel-size", type=int)
    p.add_argument("-n", "--iterations", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--figure")

    p = add("scale", cmd_scale, "metric scale from SLAM / metric depth pairs")
    p.add_argument("--slam-depth", nargs="+", required=True)
    p.add_argument("--metric-depth", nargs="+", required=True)
    p.add_argument("--human-mask", nargs="*")
    p.add_argument("--frames", type=int, help="use only the first K frames")
    p.add_argument("--dilation", type=int)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", help="ratio histogram CSV")

    p = add("spectrogram", cmd_spectrogram, "STFT magnitude spectrogram of a motion file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="magnitude CSV (rows = bins, cols = frames)")
    p.add_argument("--gt", help="ground-truth motion; adds rmse_norm / corr_norm")
    p.add_argument("--n-fft", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--channel-mode", choices=spectral.CHANNEL_MODES)
    p.add_argument("--symmetric", action="store_true", help="symmetric Hann window")
    p.add_argument("--figure")

    p = add("metrics", cmd_metrics, "pose / trajectory metrics between prediction and ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred-verts")
    p.add_argument("--gt-verts")
    p.add_argument("--pred-traj")
    p.add_argument("--gt-traj")
    p.add_argument("--segment-len", type=int)
    p.add_argument("--fps", type=float, help="report accel/jitter per second instead of per frame")
    p.add_argument("--csv", help="also write a one-row CSV")

    p = add("synth", cmd_synth, "generate clean and noisy synthetic trajectories")
    p.add_argument("--kind", choices=harness.SYNTH_KINDS, default="circle")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--sigma-t", type=float, default=0.0)
    p.add_argument("--sigma-r", type=float, default=0.0)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-clean")
    p.add_argument("--out-noisy")

    p = add("run", cmd_run, "end-to-end online pipeline, JSONL per frame")
    p.add_argument("--poses", help="trajectory JSONL (default: synthetic noisy circle)")
    p.add_argument("--features", help="binary f32 feature stream (default: random)")
    p.add_argument("--kind", choices=harness.SYNTH_KINDS, default="circle")
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--sigma-t", type=float, default=0.05)
    p.add_argument("--sigma-r", type=float, default=0.02)
    p.add_argument("--tokens", type=int, default=4)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--window", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=float)
    smoother_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--probe", help="write the latency probe report (JSON) here")

    p = add("delay", cmd_delay, "average per-frame delay for online vs offline processing")
    p.add_argument("--mode", choices=("online", "offline", "offline_batch"), required=True)
    p.add_argument("--fps", type=float, required=True)
    p.add_argument("--frames", type=int, default=1)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except ValidationError as exc:
        log.error("%s", exc)
        return 2
    except (StreamMotionError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
