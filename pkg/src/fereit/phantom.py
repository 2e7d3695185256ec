"""Synthetic breathing and boundary-motion phantoms.

Measurement frames are produced by full nonlinear forward solves on a once
refined copy of the reconstruction mesh, so the coarse sensitivity matrix
never touches the data.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .forward import forward_data
from .mesh import ElectrodeLayout, Mesh, refine, refine_layout, signed_areas


@dataclass(frozen=True)
class Waveform:
    """``(1 - cos(2 pi f t + phase)) / 2``: 0 at t=0 (expiration), 1 at peak."""

    frequency: float = 0.25
    phase: float = 0.0

    def __call__(self, t):
        return 0.5 * (1.0 - np.cos(2 * np.pi * self.frequency * np.asarray(t) + self.phase))


@dataclass(frozen=True)
class Inclusion:
    center: tuple
    semi_axes: tuple
    angle: float = 0.0
    contrast: float = -0.3
    waveform: Waveform = field(default_factory=Waveform)

    def contains(self, points):
        p = np.asarray(points) - np.asarray(self.center)
        c, s = math.cos(self.angle), math.sin(self.angle)
        x = c * p[:, 0] + s * p[:, 1]
        y = -s * p[:, 0] + c * p[:, 1]
        a, b = self.semi_axes
        return (x / a) ** 2 + (y / b) ** 2 <= 1.0

    def max_radius(self):
        c = np.hypot(*self.center)
        return c + max(self.semi_axes)


@dataclass(frozen=True)
class Scenario:
    inclusions: tuple = ()
    frame_count: int = 40
    frame_period: float = 1.0 / 9.0

    def __post_init__(self):
        if self.frame_count < 1 or self.frame_period <= 0:
            raise ValueError("need frame_count >= 1 and frame_period > 0")
        worst = 1.0 + sum(min(inc.contrast, 0.0) for inc in self.inclusions)
        if worst <= 0:
            raise ValueError("scenario can drive conductivity non-positive")

    @property
    def times(self):
        return np.arange(self.frame_count) * self.frame_period

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def breathing_scenario(contrast=-0.3, frequency=0.25, frame_count=40, frame_rate=9.0):
    """Two elliptical 'lungs' whose conductivity drops on inhalation."""
    wf = Waveform(frequency)
    lungs = (
        Inclusion((-0.45, 0.05), (0.22, 0.38), 0.0, contrast, wf),
        Inclusion((0.45, 0.05), (0.22, 0.38), 0.0, contrast, wf),
    )
    return Scenario(lungs, frame_count, 1.0 / frame_rate)


def peak_frame(scenario: Scenario):
    """Index of the frame with the largest summed waveform (full inhale)."""
    w = sum(abs(inc.contrast) * inc.waveform(scenario.times) for inc in scenario.inclusions)
    return int(np.argmax(w)) if np.ndim(w) else 0


def rasterize_scenario(scenario: Scenario, mesh: Mesh, t, points=None):
    """Conductivity per element, evaluated at element centroids (or ``points``)."""
    pts = mesh.centroids if points is None else points
    sigma = np.ones(len(pts))
    for inc in scenario.inclusions:
        if inc.max_radius() > np.abs(mesh.nodes).max() * 1.5:
            raise ValueError("inclusion lies outside the domain")
        sigma[inc.contains(pts)] += inc.contrast * float(inc.waveform(t))
    if np.any(sigma <= 0):
        raise ValueError("rasterized conductivity is not strictly positive")
    return sigma


@dataclass(frozen=True)
class MotionSpec:
    """Radial boundary displacement ``amplitude * R * cos(mode * theta) * w(t)``."""

    amplitude: float = 0.01
    mode: int = 2
    waveform: Waveform = field(default_factory=Waveform)

    def __post_init__(self):
        if not 0 <= self.amplitude < 0.05:
            raise ValueError("motion amplitude must lie in [0, 0.05)")


def deform(mesh: Mesh, motion: MotionSpec, t, blend_width=0.2):
    """Radially displaced copy of ``mesh``; motion fades out inside ``1 - blend_width``."""
    xy = mesh.nodes
    R = float(np.linalg.norm(xy[mesh.boundary_loop], axis=1).max())
    r = np.linalg.norm(xy, axis=1)
    theta = np.arctan2(xy[:, 1], xy[:, 0])
    s = np.clip((r / R - (1.0 - blend_width)) / blend_width, 0.0, 1.0)
    blend = s * s * (3.0 - 2.0 * s)
    dr = motion.amplitude * R * np.cos(motion.mode * theta) * float(motion.waveform(t)) * blend
    scale = np.where(r > 0, (r + dr) / np.where(r > 0, r, 1.0), 1.0)
    new = xy * scale[:, None]
    if np.any(signed_areas(new, mesh.triangles) <= 0):
        raise ValueError("deformation inverts an element")
    return Mesh(new, mesh.triangles, parent=mesh.parent, midpoint_of=mesh.midpoint_of)


@dataclass(frozen=True, eq=False)
class FrameSequence:
    times: np.ndarray
    data: np.ndarray
    seed: int = 0
    scenario_hash: str = "-"
    mesh_hash: str = "-"
    noise_level: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if len(times) != len(data):
            raise ValueError("one timestamp per frame required")
        if np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if data.shape[1] != 208:
            raise ValueError(f"frames must have 208 entries, got {data.shape[1]}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "data", data)

    def __len__(self):
        return len(self.times)


def mesh_digest(mesh: Mesh):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.nodes).tobytes())
    h.update(np.ascontiguousarray(mesh.triangles).tobytes())
    return h.hexdigest()[:16]


def add_noise(clean, noise_level, seed, reference=0):
    """Gaussian noise with per-frame std ``noise_level * RMS(V_m - V_ref)``.

    One child stream per frame is spawned from ``seed`` so the result does
    not depend on evaluation order.
    """
    clean = np.atleast_2d(np.asarray(clean, dtype=np.float64))
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    if noise_level == 0:
        return clean.copy()
    diff = clean - clean[reference]
    rms = np.sqrt(np.mean(diff ** 2, axis=1))
    streams = np.random.SeedSequence(seed).spawn(len(clean))
    noise = np.stack([np.random.default_rng(s).standard_normal(clean.shape[1]) for s in streams])
    return clean + noise_level * rms[:, None] * noise


def _run(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def simulate_frames(coarse_mesh: Mesh, layout: ElectrodeLayout, scenario: Scenario,
                    noise_level=0.0, seed=0, motion: MotionSpec | None = None,
                    threads=None):
    """Frames from nonlinear forward solves on ``refine(coarse_mesh)``.

    With ``motion`` the fine mesh is also deformed per frame; material moves
    with the mesh, so conductivity is rasterized on the undeformed centroids.
    """
    fine = refine(coarse_mesh)
    fine_layout = refine_layout(layout, fine)
    times = scenario.times

    def frame(t):
        sigma = rasterize_scenario(scenario, fine, t)
        m = fine if motion is None else deform(fine, motion, t)
        return forward_data(m, fine_layout, sigma)

    clean = np.stack(_run(frame, times, threads))
    data = add_noise(clean, noise_level, seed)
    tag = scenario.digest()
    if motion is not None:
        blob = json.dumps(asdict(motion), sort_keys=True).encode()
        tag = hashlib.sha256(tag.encode() + blob).hexdigest()[:16]
    return FrameSequence(times, data, seed, tag, mesh_digest(coarse_mesh), noise_level)


def simulate_motion_frames(coarse_mesh: Mesh, layout: ElectrodeLayout, motion: MotionSpec,
                           frames=40, seed=0, frame_period=1.0 / 9.0, noise_level=0.0,
                           threads=None):
    """Pure boundary-motion frames at homogeneous conductivity."""
    scenario = Scenario((), frames, frame_period)
    return simulate_frames(coarse_mesh, layout, scenario, noise_level, seed, motion, threads)
