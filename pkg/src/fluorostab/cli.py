"""Command line entry point: ``fluorostab run | phantom | ablate``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, MODES, PipelineConfig, load_kv
from .flow import quantize_flow
from .phantom import generate_phantom, load_spec
from .pipeline import StageError, run_ablation_suite, run_pipeline
from .video_io import FRAME_NAME, add_gaussian_noise, read_sequence, write_pgm, write_sequence

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

log = logging.getLogger("fluorostab")

# flag name -> config key; values stay strings so file and CLI share one coercion path
RUN_FLAGS = {
    "--mode": "mode",
    "--noise-var": "noise_var",
    "--seed": "seed",
    "--clean": "clean",
    "--bit-depth": "bit_depth",
    "--canvas-scale": "canvas_scale",
    "--kde-bandwidth": "kde_bandwidth",
    "--rank": "rank",
    "--window": "window",
    "--lambda": "lam",
    "--pcp-iters": "pcp_iters",
    "--pcp-tol": "pcp_tol",
    "--bernoulli-p": "bernoulli_p",
    "--replicas": "replicas",
    "--kernel-radius": "kernel_radius",
    "--temporal-radius": "temporal_radius",
    "--rho": "rho",
}

SIGNED = ("S", "S_hat", "S_bar")


def _build_parser():
    parser = argparse.ArgumentParser(prog="fluorostab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="denoise a directory of PGM frames")
    run.add_argument("--input", required=True, help="directory of frame_%%05d.pgm files")
    run.add_argument("--output", required=True, help="directory for denoised frames")
    run.add_argument("--config", help="flat key = value config file; flags override it")
    for flag, key in RUN_FLAGS.items():
        kwargs = {"dest": key, "default": None}
        if flag == "--mode":
            kwargs["choices"] = MODES
        run.add_argument(flag, **kwargs)
    run.add_argument("--student", dest="student", action="store_const", const="true", default=None,
                     help="distill a student filter (default)")
    run.add_argument("--no-student", dest="student", action="store_const", const="false",
                     help="apply the blind-spot teacher directly")
    run.add_argument("--dump-intermediates", dest="dump_intermediates", action="store_const", const="true",
                     default=None, help="write panorama, L, S and denoised components as PGM")
    run.add_argument("--dump-flow", dest="dump_flow", action="store_const", const="true", default=None,
                     help="write quantized stabilization flow fields as PGM")

    ph = sub.add_parser("phantom", help="render a synthetic phantom sequence")
    ph.add_argument("--spec", required=True, help="phantom spec file (key = value)")
    ph.add_argument("--output", required=True)
    ph.add_argument("--noise-var", type=float, default=None, help="also write a noisy copy to OUTPUT/noisy")
    ph.add_argument("--seed", type=int, default=0)

    ab = sub.add_parser("ablate", help="compare full, no-stabilize and denoise-only modes")
    ab.add_argument("--config", required=True)
    ab.add_argument("--report", required=True, help="CSV output path")
    return parser


def _run_config(args):
    values = load_kv(args.config) if args.config else {}
    keys = list(RUN_FLAGS.values()) + ["student", "dump_intermediates", "dump_flow"]
    values.update({k: getattr(args, k) for k in keys if getattr(args, k) is not None})
    values["input"] = args.input
    values["output"] = args.output
    return PipelineConfig.from_mapping(values).validate()


def _encode_signed(seq):
    return np.clip(0.5 + np.asarray(seq), 0.0, 1.0)


def _dump_intermediates(inter, root, bit_depth):
    for key, seq in inter.items():
        if key in ("flow", "background"):
            continue
        seq = _encode_signed(seq) if key in SIGNED else np.clip(seq, 0.0, 1.0)
        write_sequence(seq, root / key, bit_depth)


def _dump_flows(flows, root):
    for sub in ("u", "v"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    lines = []
    for t, flow in enumerate(flows):
        if flow is None:
            continue
        u, v, scale = quantize_flow(flow)
        for sub, img in (("u", u), ("v", v)):
            write_pgm(root / sub / FRAME_NAME.format(t), np.floor(img * 255 + 0.5).astype(np.uint8), 255)
        lines.append(f"{t} {scale!r}")
    # pixel value 0.5 means zero flow; 0 and 1 mean -scale and +scale
    (root / "scale.txt").write_text("".join(line + "\n" for line in lines))


def cmd_run(args):
    try:
        cfg = _run_config(args)
        seq = read_sequence(cfg.input)
        reference = read_sequence(cfg.clean) if cfg.clean else None
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.noise_var is not None:
        if reference is None:
            reference = seq
        seq = add_gaussian_noise(seq, cfg.noise_var, cfg.seed)
    if reference is not None and reference.shape != seq.shape:
        print(f"error: clean sequence {reference.shape} does not match input {seq.shape}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(cfg.output)
    keep = cfg.dump_intermediates or cfg.dump_flow
    try:
        result = run_pipeline(seq, cfg, clean=reference, keep_intermediates=keep)
    except StageError as exc:
        if exc.partial is not None:
            write_sequence(exc.partial, out_dir, cfg.bit_depth)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE

    write_sequence(result.denoised, out_dir, cfg.bit_depth)
    if cfg.dump_intermediates:
        _dump_intermediates(result.intermediates, out_dir / "intermediates", cfg.bit_depth)
    if cfg.dump_flow and "flow" in result.intermediates:
        _dump_flows(result.intermediates["flow"], out_dir / "flow")
    if result.report is not None:
        result.report.write_csv(out_dir / "metrics.csv")
        print(result.report.summary())
    print(f"wrote {len(result.denoised)} frames to {out_dir} ({result.seconds:.2f}s, mode={cfg.mode})")
    return EXIT_OK


def cmd_phantom(args):
    try:
        spec = load_spec(args.spec)
        clean, truth = generate_phantom(spec, seed=args.seed)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.output)
    write_sequence(clean, out_dir)
    write_sequence(np.asarray(truth.masks, dtype=np.float64), out_dir / "masks")
    (out_dir / "offsets.txt").write_text("".join(f"{u} {v}\n" for u, v in truth.offsets))
    if args.noise_var is not None:
        try:
            noisy = add_gaussian_noise(clean, args.noise_var, args.seed)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        write_sequence(noisy, out_dir / "noisy")
    print(f"wrote {len(clean)} phantom frames to {out_dir}")
    return EXIT_OK


def cmd_ablate(args):
    try:
        cfg = PipelineConfig.from_mapping(load_kv(args.config)).validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = run_ablation_suite(cfg, report_path=args.report)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for row in rows:
        print(f"variance={row['variance']:g} seed={row['seed']} mode={row['mode']:<13} "
              f"psnr={row['psnr']:.3f} ssim={row['ssim']:.4f} ie={row['ie_background']:.3f}")
    print(f"report written to {args.report}")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "phantom": cmd_phantom, "ablate": cmd_ablate}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
