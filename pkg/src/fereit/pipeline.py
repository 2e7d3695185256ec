"""End-to-end orchestration used by the command line and the demos."""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .forward import solve_all
from .io import (CacheError, load_sensitivity, save_frames_text, save_image_csv,
                 save_sensitivity, sensitivity_key)
from .mesh import (ElectrodeLayout, Mesh, assign_electrodes, boundary_elements,
                   generate_disk_mesh, load_mesh_and_layout, save_mesh)
from .phantom import MotionSpec, Waveform, breathing_scenario, simulate_frames
from .recon import (ConductivityImage, FERReconstructor, MotionFilter, StandardReconstructor,
                    time_difference)
from .render import pixel_element_map, render_image
from .sensitivity import assemble_sensitivity, boundary_submatrix, build_fidelity_regularizer

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """Wraps a failure with the name of the pipeline stage it came from."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.cause = exc


@dataclass
class Jacobian:
    mesh: Mesh
    layout: ElectrodeLayout
    S: np.ndarray
    key: bytes
    cache_file: Path
    cache_hit: bool
    seconds: float


def build_mesh(cfg: PipelineConfig):
    if cfg.mesh_path:
        mesh, layout = load_mesh_and_layout(cfg.mesh_path)
    else:
        mesh = generate_disk_mesh(cfg.mesh_radius, cfg.mesh_edge_length, cfg.mesh_symmetry)
        layout = None
    if layout is None:
        layout = assign_electrodes(mesh, 16, cfg.coverage)
    return mesh, layout


def mesh_file_bytes(mesh, layout):
    """Canonical text bytes of mesh + layout, used as the cache key input."""
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "mesh.txt"
        save_mesh(mesh, p, layout)
        return p.read_bytes()


def jacobian(mesh, layout, cache_dir, sigma_ref=1.0):
    """Sensitivity matrix, served from a content-addressed cache when possible."""
    key = sensitivity_key(mesh_file_bytes(mesh, layout), layout, sigma_ref)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"sensitivity-{key.hex()[:16]}.eits"
    t0 = time.perf_counter()
    if path.exists():
        try:
            S = load_sensitivity(path, key)
            log.info("sensitivity cache hit: %s", path)
            return Jacobian(mesh, layout, S, key, path, True, time.perf_counter() - t0)
        except CacheError as exc:
            log.warning("rebuilding sensitivity matrix: %s", exc)
    ps = solve_all(mesh, layout, sigma_ref)
    S = assemble_sensitivity(mesh, ps)
    save_sensitivity(S, path, key)
    log.info("sensitivity built and cached: %s", path)
    return Jacobian(mesh, layout, S, key, path, False, time.perf_counter() - t0)


def scenario_from(cfg: PipelineConfig):
    return breathing_scenario(cfg.contrast, cfg.breathing_hz, cfg.frames, cfg.frame_rate)


def motion_from(cfg: PipelineConfig):
    if cfg.motion_amplitude <= 0:
        return None
    return MotionSpec(cfg.motion_amplitude, cfg.motion_mode, Waveform(cfg.breathing_hz))


def simulate(cfg: PipelineConfig, mesh, layout):
    return simulate_frames(mesh, layout, scenario_from(cfg), cfg.noise_level, cfg.seed,
                           motion_from(cfg), cfg.n_threads)


def reconstruct_frames(cfg: PipelineConfig, jac: Jacobian, frames):
    """Images for every frame of ``frames`` (time-differenced against the reference)."""
    vdot = time_difference(frames, cfg.reference_frame)
    meta = {"lambda_b": "off"}
    if cfg.motion_filter:
        filt = MotionFilter(boundary_submatrix(jac.S, boundary_elements(jac.mesh)), cfg.lambda_b)
        vdot, _ = filt(vdot)
        meta["lambda_b"] = repr(filt.lam_b)
    if cfg.method == "fer":
        reg = build_fidelity_regularizer(jac.S)
        values = FERReconstructor(jac.S, reg)(vdot, cfg.lam)
    else:
        values = StandardReconstructor(jac.S)(vdot, cfg.lam)
    return [ConductivityImage(v, cfg.method, cfg.lam, float(t), dict(meta, frame=m))
            for m, (t, v) in enumerate(zip(frames.times, values))]


def write_images(cfg: PipelineConfig, mesh, images, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    vrange = max(float(np.abs(im.values).max()) for im in images)
    pmap = pixel_element_map(mesh) if "ppm" in cfg.formats else None
    written = []

    def one(m_im):
        m, im = m_im
        paths = []
        if "csv" in cfg.formats:
            p = out / f"frame_{m:03d}.csv"
            save_image_csv(im, p)
            paths.append(p)
        if "ppm" in cfg.formats:
            p = out / f"frame_{m:03d}.ppm"
            render_image(im, mesh, p, vrange, pmap)
            paths.append(p)
        return paths

    with ThreadPoolExecutor(cfg.n_threads) as pool:
        for paths in pool.map(one, enumerate(images)):
            written += paths
    return written, vrange


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except (OSError, ValueError, RuntimeError, ArithmeticError, IndexError) as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg: PipelineConfig):
    """Mesh -> Jacobian -> phantom -> filter -> reconstruct -> render; returns the manifest."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}

    t = time.perf_counter()
    mesh, layout = _stage("mesh", build_mesh, cfg)
    _stage("mesh", save_mesh, mesh, out / "mesh.txt", layout)
    timings["mesh"] = time.perf_counter() - t

    t = time.perf_counter()
    jac = _stage("jacobian", jacobian, mesh, layout, cfg.cache_path)
    timings["jacobian"] = time.perf_counter() - t

    t = time.perf_counter()
    frames = _stage("phantom", simulate, cfg, mesh, layout)
    _stage("phantom", save_frames_text, frames, out / "frames.txt")
    timings["phantom"] = time.perf_counter() - t

    t = time.perf_counter()
    images = _stage("recon", reconstruct_frames, cfg, jac, frames)
    timings["recon"] = time.perf_counter() - t

    t = time.perf_counter()
    written, vrange = _stage("render", write_images, cfg, mesh, images, out / "images")
    timings["render"] = time.perf_counter() - t

    manifest = {
        "version": __version__,
        "config": cfg.as_dict(),
        "mesh": {"nodes": mesh.n_nodes, "elements": mesh.n_elem,
                 "electrode_nodes": [len(g) for g in layout.groups]},
        "sensitivity": {"shape": list(jac.S.shape), "key": jac.key.hex(),
                        "cache_file": str(jac.cache_file), "cache_hit": jac.cache_hit},
        "frames": {"count": len(frames), "seed": frames.seed,
                   "scenario_hash": frames.scenario_hash, "mesh_hash": frames.mesh_hash},
        "render_range": vrange,
        "outputs": [str(p.relative_to(out)) for p in written],
        "timings_s": timings,
    }
    _stage("manifest", (out / "manifest.json").write_text, json.dumps(manifest, indent=2) + "\n")
    return manifest
