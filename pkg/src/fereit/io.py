"""On-disk formats: data-vector and sensitivity caches, frame files, image CSVs."""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .phantom import FrameSequence

DATA_MAGIC = b"EITV1"
SENS_MAGIC = b"EITS1"
FRAME_MAGIC = "EITF1"


class CacheError(IOError):
    pass


# --- single data vector ----------------------------------------------------

def save_data_vector(v, path):
    v = np.asarray(v, dtype="<f8").ravel()
    Path(path).write_bytes(DATA_MAGIC + struct.pack("<I", len(v)) + v.tobytes())


def load_data_vector(path):
    raw = Path(path).read_bytes()
    if raw[:5] != DATA_MAGIC:
        raise CacheError(f"{path}: bad magic")
    (n,) = struct.unpack_from("<I", raw, 5)
    body = raw[9:]
    if len(body) != 8 * n:
        raise CacheError(f"{path}: truncated data vector")
    return np.frombuffer(body, dtype="<f8").astype(np.float64)


# --- sensitivity cache -----------------------------------------------------

def sensitivity_key(mesh_bytes: bytes, layout, sigma_ref=1.0):
    """Content key over the mesh file bytes, the electrode groups and sigma_ref."""
    h = hashlib.sha256()
    h.update(mesh_bytes)
    for g in layout.groups:
        h.update(np.asarray(g, dtype="<i8").tobytes())
        h.update(b"|")
    h.update(struct.pack("<d", float(sigma_ref)))
    return h.digest()


def _payload_hash(key, payload):
    return hashlib.sha256(key + payload).digest()


def save_sensitivity(S, path, key: bytes):
    """Stored hash covers key and payload, so corruption is caught on load."""
    S = np.ascontiguousarray(S, dtype="<f8")
    payload = S.tobytes()
    head = SENS_MAGIC + struct.pack("<II", *S.shape) + _payload_hash(key, payload)
    Path(path).write_bytes(head + payload)


def load_sensitivity(path, key: bytes):
    """Return S, or raise CacheError if the file is stale, foreign or corrupt."""
    raw = Path(path).read_bytes()
    if raw[:5] != SENS_MAGIC or len(raw) < 45:
        raise CacheError(f"{path}: not a sensitivity cache")
    rows, cols = struct.unpack_from("<II", raw, 5)
    digest, payload = raw[13:45], raw[45:]
    if len(payload) != 8 * rows * cols:
        raise CacheError(f"{path}: truncated payload")
    if digest != _payload_hash(key, payload):
        raise CacheError(f"{path}: hash mismatch")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


# --- frame sequences -------------------------------------------------------

def save_frames_text(fs: FrameSequence, path):
    lines = [f"{FRAME_MAGIC} {len(fs)} {fs.seed} {fs.scenario_hash}"]
    for t, row in zip(fs.times, fs.data):
        lines.append(f"t={t:.17g}")
        lines.append(" ".join(f"{x:.17g}" for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_frames_text(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 4 or head[0] != FRAME_MAGIC:
        raise CacheError(f"{path}: bad frame-file header")
    n, seed = int(head[1]), int(head[2])
    if len(lines) != 1 + 2 * n:
        raise CacheError(f"{path}: expected {n} frames")
    times, data = [], []
    for m in range(n):
        tl, dl = lines[1 + 2 * m], lines[2 + 2 * m]
        if not tl.startswith("t="):
            raise CacheError(f"{path}: frame {m} lacks a 't=' line")
        times.append(float(tl[2:]))
        data.append([float(x) for x in dl.split()])
    return FrameSequence(np.array(times), np.array(data), seed, head[3])


def save_frames_binary(fs: FrameSequence, path):
    """``EITV1``, u32 frame count, u32 entries per frame, then per frame f64 t + entries."""
    n, m = fs.data.shape
    block = np.column_stack([fs.times, fs.data]).astype("<f8")
    Path(path).write_bytes(DATA_MAGIC + struct.pack("<II", n, m) + block.tobytes())


def load_frames_binary(path):
    raw = Path(path).read_bytes()
    if raw[:5] != DATA_MAGIC:
        raise CacheError(f"{path}: bad magic")
    n, m = struct.unpack_from("<II", raw, 5)
    body = raw[13:]
    if len(body) != 8 * n * (m + 1):
        raise CacheError(f"{path}: truncated frame file")
    block = np.frombuffer(body, dtype="<f8").reshape(n, m + 1)
    return FrameSequence(block[:, 0].copy(), block[:, 1:].copy())


# --- images ----------------------------------------------------------------

def save_image_csv(image, path):
    lines = [f"# method={image.method}", f"# lambda={image.lam!r}"]
    for k, v in sorted(image.meta.items()):
        lines.append(f"# {k}={v}")
    if image.frame_time is not None:
        lines.append(f"# frame_time={image.frame_time!r}")
    lines.append("element_index,value")
    lines += [f"{k},{v:.17g}" for k, v in enumerate(image.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_image_csv(path):
    """Returns ``(values, header)`` where header holds the comment key/values."""
    header, idx, vals = {}, [], []
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("#"):
            k, _, v = ln[1:].strip().partition("=")
            header[k] = v
        elif ln and not ln.startswith("element_index"):
            i, v = ln.split(",")
            idx.append(int(i))
            vals.append(float(v))
    out = np.empty(len(vals))
    out[np.array(idx, dtype=int)] = vals
    return out, header
