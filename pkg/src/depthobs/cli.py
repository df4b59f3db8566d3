"""Command line entry point: ``depthobs synth|flow|estimate|eval``.

Dataset layout written by ``synth`` and read by the other commands::

    DIR/config.txt            resolved configuration echo
    DIR/motion.csv            t,v1,v2,v3,w1,w2,w3
    DIR/poses.csv             t,x,y,z,qx,qy,qz,qw
    DIR/frames/frame_0000.pgm 16-bit frames, (value + pgm_offset) * pgm_scale
    DIR/truth/depth_0000.fgrid
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, preset
from .flow import FlowField
from .geometry import PixelGrid
from .metrics_io import (
    FormatError,
    error_report,
    normalize_intensity,
    read_fgrid,
    read_motion_csv,
    read_pgm,
    write_curve_csv,
    write_fgrid,
    write_motion_csv,
    write_pgm,
)
from .observers import MODES, ObserverRun, gamma_to_depth, run_observer
from .scene import SyntheticSequence, generate_sequence

log = logging.getLogger("depthobs")

FRAME_FMT = "frame_{:04d}.pgm"
DEPTH_FMT = "depth_{:04d}.fgrid"
FLOW_FMT = ("v1_{:04d}.fgrid", "v2_{:04d}.fgrid")


class UsageError(RuntimeError):
    pass


def resolve_config(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base
    if getattr(args, "preset", None):
        cfg = preset(args.preset)
    if cfg is None:
        cfg = ExperimentConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "out", None):
        overrides["out"] = args.out
    return replace(cfg, **overrides)


def _write_poses(path: Path, seq: SyntheticSequence) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "x", "y", "z", "qx", "qy", "qz", "qw"])
    for m, p in zip(seq.motions, seq.poses):
        wr.writerow([repr(float(x)) for x in (m.t, *p.position, *p.orientation)])
    path.write_text(buf.getvalue())


def synthesize(cfg: ExperimentConfig) -> SyntheticSequence:
    """Render the sequence a config describes, in memory."""
    return generate_sequence(
        cfg.grid(), cfg.scene(), cfg.trajectory(), cfg.sigma, cfg.seed,
        supersample=cfg.supersample, extent_mask=cfg.extent_mask,
    )


def run_mode(seq: SyntheticSequence, cfg: ExperimentConfig, external=None) -> ObserverRun:
    """Run the estimator selected by ``cfg.mode`` with the config's settings."""
    return run_observer(
        seq, cfg.mode, cfg.observer(), cfg.hs(), cfg.var(),
        external_flow=external, presmooth=cfg.presmooth,
    )


def cmd_synth(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(exist_ok=True)
    seq = synthesize(cfg)
    for k, frame in enumerate(seq.frames):
        write_pgm(out / "frames" / FRAME_FMT.format(k), frame, cfg.pgm_scale, cfg.pgm_offset)
        truth = seq.truth_depth[k]
        if seq.valid is not None:
            truth = np.where(seq.valid[k], truth, np.nan)
        write_fgrid(out / "truth" / DEPTH_FMT.format(k), truth)
    write_motion_csv(out / "motion.csv", seq.motions)
    _write_poses(out / "poses.csv", seq)
    (out / "config.txt").write_text(cfg.echo())
    log.info("wrote %d frames to %s", len(seq), out)
    return out


def load_dataset(data: Path, cfg: ExperimentConfig) -> SyntheticSequence:
    frame_paths = sorted((data / "frames").glob("frame_*.pgm"))
    if len(frame_paths) < 2:
        raise UsageError(f"{data}/frames holds {len(frame_paths)} frames, need at least 2")
    frames = [read_pgm(p, cfg.pgm_scale, cfg.pgm_offset) for p in frame_paths]
    if cfg.normalize:
        frames = [normalize_intensity(f) for f in frames]
    motions = read_motion_csv(data / "motion.csv")
    if len(motions) != len(frames):
        raise UsageError(f"{len(frames)} frames but {len(motions)} motion samples")
    h, w = frames[0].shape
    grid = PixelGrid.from_fov(w, h, cfg.fov_h_deg, cfg.fov_v_deg)
    truth = valid = None
    truth_paths = [data / "truth" / DEPTH_FMT.format(k) for k in range(len(frames))]
    if all(p.exists() for p in truth_paths):
        truth = [read_fgrid(p).astype(float) for p in truth_paths]
        valid = [np.isfinite(t) for t in truth]
        if all(v.all() for v in valid):
            valid = None
        else:
            truth = [np.where(v, t, 1.0) for t, v in zip(truth, valid)]
    return SyntheticSequence(
        frames=frames, motions=motions, grid=grid, fps=cfg.fps,
        truth_depth=truth, noise_sigma=cfg.sigma, rng_seed=cfg.seed, valid=valid,
    )


def _external_flow(directory: Path, shape):
    def load(k: int) -> FlowField:
        paths = [directory / f.format(k) for f in FLOW_FMT]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise UsageError(f"external flow file missing: {missing[0]}")
        v1, v2 = (read_fgrid(p).astype(float) for p in paths)
        if v1.shape != shape or v2.shape != shape:
            raise UsageError(f"external flow {paths[0]} has shape {v1.shape}, frames have {shape}")
        return FlowField(v1, v2)

    return load


def _write_flow_csv(path: Path, stats) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["pair", "t", "median_rel_error", "mean_epe", "median_speed"])
    for s in stats:
        wr.writerow([s["frame"], f"{s['t']:.9g}", f"{s['median_rel_error']:.9g}",
                     f"{s['mean_epe']:.9g}", f"{s['median_speed']:.9g}"])
    path.write_text(buf.getvalue())


def cmd_flow(data: Path, cfg: ExperimentConfig) -> Path:
    seq = load_dataset(data, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    run = run_observer(seq, "hs-flow-only", hs=cfg.hs(), presmooth=cfg.presmooth)
    for k, flow in enumerate(run.flows):
        for fmt, comp in zip(FLOW_FMT, flow):
            write_fgrid(out / fmt.format(k), comp)
    if run.flow_stats:
        _write_flow_csv(out / "flow_errors.csv", run.flow_stats)
        med = np.median([s["median_rel_error"] for s in run.flow_stats[1:] or run.flow_stats])
        print(f"median relative flow error over pairs: {med:.4f}")
    return out


def cmd_estimate(data: Path, cfg: ExperimentConfig) -> Path:
    seq = load_dataset(data, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    external = None
    if cfg.external_flow:
        if cfg.mode != "flow-observer":
            raise UsageError("external_flow is only used by mode flow-observer")
        external = _external_flow(Path(cfg.external_flow), seq.grid.shape)
    run = run_mode(seq, cfg, external)
    if cfg.mode in ("flow-observer", "gamma-observer"):
        depths, reports = run.depth, run.reports
    elif cfg.mode == "variational-only":
        depths = [gamma_to_depth(g, cfg.depth_min, cfg.depth_max) for g in run.gamma_hs]
        reports = run.gamma_reports
    else:
        depths, reports = [], []
        for k, flow in enumerate(run.flows):
            for fmt, comp in zip(FLOW_FMT, flow):
                write_fgrid(out / fmt.format(k), comp)
        if run.flow_stats:
            _write_flow_csv(out / "flow_errors.csv", run.flow_stats)
    for k, d in enumerate(depths):
        write_fgrid(out / DEPTH_FMT.format(k), d)
    if reports:
        write_curve_csv(out / "errors.csv", reports)
        print(f"final global error: {reports[-1].global_error:.6f}")
    (out / "config.txt").write_text(cfg.echo())
    return out


def cmd_eval(estimates: Path, truth: Path, cfg: ExperimentConfig, threshold: float | None, out: Path | None) -> int:
    est_paths = sorted(estimates.glob("depth_*.fgrid"))
    if not est_paths:
        raise UsageError(f"no depth_*.fgrid files in {estimates}")
    reports = []
    for p in est_paths:
        k = int(p.stem.split("_")[1])
        tp = truth / DEPTH_FMT.format(k)
        if not tp.exists():
            raise UsageError(f"no truth file {tp} for estimate {p.name}")
        d, t = read_fgrid(p).astype(float), read_fgrid(tp).astype(float)
        if d.shape != t.shape:
            raise UsageError(f"{p.name}: estimate {d.shape} and truth {t.shape} differ")
        grid = PixelGrid.from_fov(t.shape[1], t.shape[0], cfg.fov_h_deg, cfg.fov_v_deg)
        valid = np.isfinite(t)
        reports.append(error_report(k, k / cfg.fps, d, np.where(valid, t, 1.0), grid, valid))
    target = out or estimates / "eval.csv"
    write_curve_csv(target, reports)
    final = reports[-1]
    sys.stdout.write(Path(target).read_text())
    print(f"final: frame {final.frame_index} E={final.global_error:.6g} "
          f"linf={final.linf_error:.6g} l1={final.lp_errors[1]:.6g} l2={final.lp_errors[2]:.6g}")
    if threshold is not None:
        ok = final.global_error <= threshold
        print(f"threshold {threshold:g}: {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depthobs", description="Dense depth from known camera motion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--preset", help="named preset used as the base config")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("synth", help="render a synthetic dataset")
    common(sp)
    sp = sub.add_parser("flow", help="Horn-Schunck flow for every frame pair")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset directory")
    sp = sub.add_parser("estimate", help="run a depth estimator over a dataset")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--mode", choices=MODES)
    sp = sub.add_parser("eval", help="score depth estimates against truth")
    common(sp)
    sp.add_argument("--estimates", required=True)
    sp.add_argument("--truth", required=True, help="directory of truth depth_*.fgrid files")
    sp.add_argument("--threshold", type=float, help="exit nonzero if the final error exceeds this")
    return p


def _dataset_config(data: Path) -> ExperimentConfig | None:
    path = data / "config.txt"
    return load_config(path) if path.exists() else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "synth":
            cmd_synth(resolve_config(args))
        elif args.command in ("flow", "estimate"):
            data = Path(args.data)
            base = _dataset_config(data)
            if args.out is None:
                args.out = str(data / ("flow" if args.command == "flow" else "estimates"))
            cfg = resolve_config(args, base)
            (cmd_flow if args.command == "flow" else cmd_estimate)(data, cfg)
        else:
            cfg = resolve_config(args)
            return cmd_eval(Path(args.estimates), Path(args.truth), cfg, args.threshold,
                            Path(args.out) if args.out else None)
    except (ConfigError, FormatError, UsageError, OSError) as e:
        print(f"depthobs: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
