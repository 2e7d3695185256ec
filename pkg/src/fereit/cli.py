"""Command line entry point: ``fereit <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 compute error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, config_help, load_config
from .io import CacheError, load_frames_text, load_image_csv, save_frames_text
from .mesh import LayoutError, MeshError, assign_electrodes, generate_disk_mesh, save_mesh
from .pipeline import (StageError, build_mesh, jacobian, reconstruct_frames, run_pipeline,
                       simulate, write_images)
from .render import render_image

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("fereit")


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--threads", type=int, help="worker threads (default: available parallelism)")
    p.add_argument("--no-motion-filter", action="store_true", help="skip the boundary motion filter")
    p.add_argument("--lambda", dest="lam", help="regularization parameter (number or 'inf')")
    p.add_argument("--lambda-b", dest="lambda_b", help="motion-filter parameter")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help="output directory or file")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="fereit",
        description="Time-difference EIT reconstruction with fidelity-embedded regularization.",
        epilog="config keys:\n" + config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("mesh-gen", help="generate a disk mesh with electrodes")
    _common(p)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--edge-length", type=float, default=0.05)
    p.add_argument("--symmetry", type=int, default=16)
    p.add_argument("--coverage", type=float, default=0.5)

    p = sub.add_parser("jacobian", help="build (or fetch from cache) the sensitivity matrix")
    _common(p)
    p.add_argument("--mesh", help="mesh file (default: generate from config)")
    p.add_argument("--coverage", type=float)

    p = sub.add_parser("phantom", help="simulate breathing frames to <out>/frames.txt")
    _common(p)

    p = sub.add_parser("recon", help="reconstruct images from a frame file")
    _common(p)
    p.add_argument("--frames", required=True, help="EITF1 text frame file")

    p = sub.add_parser("pipeline", help="run mesh, jacobian, phantom, recon and render")
    _common(p)

    p = sub.add_parser("render", help="render an image CSV to PPM")
    p.add_argument("--mesh", required=True)
    p.add_argument("--image", required=True, help="element_index,value CSV")
    p.add_argument("--out", required=True, help="output .ppm")
    p.add_argument("--range", dest="vrange", type=float, help="symmetric colour range")
    return parser


def _config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        "threads": getattr(args, "threads", None),
        "lambda": getattr(args, "lam", None),
        "lambda_b": getattr(args, "lambda_b", None),
        "seed": getattr(args, "seed", None),
        "out": getattr(args, "out", None),
    }
    for key, value in overrides.items():
        if value is not None:
            cfg.set(key, str(value))
    if getattr(args, "no_motion_filter", False):
        cfg.set("motion_filter", "false")
    if getattr(args, "mesh", None):
        cfg.set("mesh_path", args.mesh)
    if getattr(args, "coverage", None) is not None:
        cfg.set("coverage", str(args.coverage))
    return cfg.validate()


def cmd_mesh_gen(args):
    mesh = generate_disk_mesh(args.radius, args.edge_length, args.symmetry)
    layout = assign_electrodes(mesh, 16, args.coverage)
    out = Path(args.out or "mesh.txt")
    save_mesh(mesh, out, layout)
    print(f"{out}: {mesh.n_nodes} nodes, {mesh.n_elem} triangles, 16 electrodes")


def cmd_jacobian(args):
    cfg = _config(args)
    mesh, layout = build_mesh(cfg)
    jac = jacobian(mesh, layout, cfg.cache_path)
    state = "cache hit" if jac.cache_hit else "built"
    print(f"S: {jac.S.shape[0]} x {jac.S.shape[1]} ({state} in {jac.seconds:.3f} s) -> {jac.cache_file}")


def cmd_phantom(args):
    cfg = _config(args)
    mesh, layout = build_mesh(cfg)
    frames = simulate(cfg, mesh, layout)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    path = Path(cfg.out) / "frames.txt"
    save_frames_text(frames, path)
    print(f"{path}: {len(frames)} frames")


def cmd_recon(args):
    cfg = _config(args)
    mesh, layout = build_mesh(cfg)
    frames = load_frames_text(args.frames)
    jac = jacobian(mesh, layout, cfg.cache_path)
    images = reconstruct_frames(cfg, jac, frames)
    written, _ = write_images(cfg, mesh, images, Path(cfg.out) / "images")
    print(f"{len(images)} images, {len(written)} files in {Path(cfg.out) / 'images'}")


def cmd_pipeline(args):
    cfg = _config(args)
    t = time.perf_counter()
    manifest = run_pipeline(cfg)
    print(f"{len(manifest['outputs'])} files + manifest in {cfg.out} ({time.perf_counter() - t:.1f} s)")


def cmd_render(args):
    from .mesh import load_mesh

    mesh = load_mesh(args.mesh)
    values, _ = load_image_csv(args.image)
    render_image(values, mesh, args.out, args.vrange)
    print(args.out)


COMMANDS = {
    "mesh-gen": cmd_mesh_gen,
    "jacobian": cmd_jacobian,
    "phantom": cmd_phantom,
    "recon": cmd_recon,
    "pipeline": cmd_pipeline,
    "render": cmd_render,
}


def _exit_code(exc):
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, CacheError)):
        return EXIT_IO
    return EXIT_COMPUTE


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        COMMANDS[args.cmd](args)
    except ConfigError as exc:
        print(f"fereit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, OSError, MeshError, LayoutError, ValueError, RuntimeError,
            ArithmeticError, IndexError) as exc:
        stage = exc.stage if isinstance(exc, StageError) else args.cmd
        msg = exc.cause if isinstance(exc, StageError) else exc
        print(f"fereit: {stage} failed: {msg}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
