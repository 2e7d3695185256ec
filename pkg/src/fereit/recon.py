"""Time-difference reconstruction: FER, standard Tikhonov and the motion filter."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .sensitivity import BoundarySubmatrix, FidelityRegularizer

INF = math.inf


@dataclass(frozen=True, eq=False)
class ConductivityImage:
    values: np.ndarray
    method: str
    lam: float
    frame_time: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("reconstructed image contains non-finite values")

    def __len__(self):
        return len(self.values)


def parse_lambda(value):
    """Accept floats or the literal ``inf``."""
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ("inf", "infinity", "∞"):
            return INF
    return float(value)


def _check_data(S, vdot):
    vdot = np.asarray(vdot, dtype=np.float64)
    if vdot.shape[-1] != S.shape[0]:
        raise ValueError(f"data length {vdot.shape[-1]} does not match {S.shape[0]} rows of S")
    return vdot


class FERReconstructor:
    """Fidelity-embedded regularization for a fixed S.

    Finite ``lam`` solves ``(S^T S + lam R^T R) x = S^T v`` and returns
    ``sqrt(1 + lam^2) x``; ``lam = inf`` is the inversion-free limit
    ``(R^T R)^{-1} S^T v``.  Cholesky factors are cached per ``lam``.
    """

    def __init__(self, S, reg: FidelityRegularizer):
        self.S = np.asarray(S, dtype=np.float64)
        if len(reg) != self.S.shape[1]:
            raise ValueError("regularizer does not match S")
        self.reg = reg
        self._gram = None
        self._factors = {}

    def _factor(self, lam):
        if lam not in self._factors:
            if self._gram is None:
                self._gram = self.S.T @ self.S
            A = self._gram.copy()
            A[np.diag_indices_from(A)] += lam * self.reg.weights
            self._factors[lam] = cho_factor(A, lower=False, check_finite=False)
        return self._factors[lam]

    def __call__(self, vdot, lam=INF):
        lam = parse_lambda(lam)
        if not lam > 0:
            raise ValueError("FER requires lambda > 0 (or inf)")
        vdot = _check_data(self.S, vdot)
        b = vdot @ self.S  # S^T v, works for a stack of frames too
        if math.isinf(lam):
            return b / self.reg.weights
        x = cho_solve(self._factor(lam), b.T, check_finite=False).T
        return math.sqrt(1.0 + lam * lam) * x


def fer_reconstruct(S, reg: FidelityRegularizer, vdot, lam=INF, frame_time=None):
    lam = parse_lambda(lam)
    values = FERReconstructor(S, reg)(vdot, lam)
    return ConductivityImage(values, "fer", lam, frame_time)


class StandardReconstructor:
    """Tikhonov with identity regularizer; ``lam`` is relative to max diag(S^T S)."""

    def __init__(self, S):
        self.S = np.asarray(S, dtype=np.float64)
        self.gram = self.S.T @ self.S
        self.scale = float(np.max(np.diag(self.gram)))
        self._factors = {}

    def __call__(self, vdot, lam):
        lam = parse_lambda(lam)
        if not (lam > 0 and math.isfinite(lam)):
            raise ValueError("standard method requires a finite lambda > 0")
        vdot = _check_data(self.S, vdot)
        if lam not in self._factors:
            A = self.gram.copy()
            A[np.diag_indices_from(A)] += lam * self.scale
            self._factors[lam] = cho_factor(A, check_finite=False)
        b = vdot @ self.S
        return cho_solve(self._factors[lam], b.T, check_finite=False).T


def standard_reconstruct(S, vdot, lam, frame_time=None):
    lam = parse_lambda(lam)
    return ConductivityImage(StandardReconstructor(S)(vdot, lam), "standard", lam, frame_time)


def default_lambda_b(S_bdry):
    M = S_bdry.matrix if isinstance(S_bdry, BoundarySubmatrix) else np.asarray(S_bdry)
    return 0.01 * float(np.max(np.sum(M * M, axis=0)))


class MotionFilter:
    """Removes the component of the data explained by boundary-element columns.

    ``err = B (B^T B + lam_b I)^{-1} B^T v`` and ``filtered = v - err``.
    """

    def __init__(self, S_bdry, lam_b=None):
        B = S_bdry.matrix if isinstance(S_bdry, BoundarySubmatrix) else np.asarray(S_bdry, dtype=np.float64)
        if B.ndim != 2 or B.shape[1] == 0:
            raise ValueError("boundary submatrix is empty")
        self.B = B
        self.lam_b = default_lambda_b(B) if lam_b is None else float(lam_b)
        if not self.lam_b > 0:
            raise ValueError("lambda_b must be positive")
        A = B.T @ B
        A[np.diag_indices_from(A)] += self.lam_b
        self._factor = cho_factor(A, check_finite=False)

    def __call__(self, vdot):
        vdot = np.asarray(vdot, dtype=np.float64)
        coef = cho_solve(self._factor, (vdot @ self.B).T, check_finite=False).T
        err = coef @ self.B.T
        return vdot - err, err


def motion_filter(S_bdry, vdot, lam_b=None):
    """Returns ``(filtered, err)`` with ``filtered + err == vdot`` up to rounding."""
    return MotionFilter(S_bdry, lam_b)(vdot)


def time_difference(frames, reference=0):
    """``V(t_m) - V(t_ref)`` for every frame; accepts a FrameSequence or an array."""
    data = getattr(frames, "data", frames)
    data = np.asarray(data, dtype=np.float64)
    if not -len(data) <= reference < len(data):
        raise IndexError(f"reference frame {reference} out of range for {len(data)} frames")
    return data - data[reference]


def cosine_similarity(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
