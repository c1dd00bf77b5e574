"""Masked incremental principal component pursuit.

The background subspace is tracked as a thin SVD ``U diag(s) V^T`` of a
sliding window of background columns (one column per frame, rows are canvas
pixels). The window is maintained with rank-one updates (``inc_svd``),
downdates (``dwn_svd``) and replacements (``rep_svd``). Because frames move
on the canvas, the rows a new frame covers and the rows the subspace knows
about differ; ``fill_frame`` and ``fill_subspace`` complete each side from
the other on the shared rows before the frame is split into a low-rank
background and a sparse foreground.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

PINV_RCOND = 1e-10


class LostTrackError(ValueError):
    """The current frame shares no pixels with the tracked subspace."""


def soft_threshold(x, lam):
    """Elementwise ``sign(x) * max(|x| - lam, 0)``."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def default_lambda(frame_pixels, window_size):
    return 1.0 / math.sqrt(max(frame_pixels, window_size))


@dataclass
class SubspaceModel:
    U: np.ndarray  # (n, q), orthonormal columns
    s: np.ndarray  # (q,), nonincreasing
    V: np.ndarray  # (k, q), one row per retained column, oldest first
    rank: int  # maximum retained rank
    window_size: int = 30
    covered: np.ndarray | None = None  # rows of U holding information; None means all

    @property
    def occupancy(self):
        return self.V.shape[0]

    @property
    def n_rows(self):
        return self.U.shape[0]

    def covered_rows(self):
        if self.covered is None:
            return np.ones(self.n_rows, dtype=bool)
        return self.covered

    def reconstruct(self):
        return (self.U * self.s) @ self.V.T


def _truncate(U, s, V, rank):
    keep = min(rank, s.size)
    # drop numerically zero directions, but always keep one
    tiny = s[0] * 1e-13 if s.size and s[0] > 0 else 0.0
    while keep > 1 and s[keep - 1] <= tiny:
        keep -= 1
    return U[:, :keep], s[:keep], V[:, :keep]


def partial_svd(matrix, r, window_size=30, max_rank=None) -> SubspaceModel:
    """Top-``r`` thin SVD of an ``n x k`` matrix as a fresh model.

    ``max_rank`` (default ``r``) caps the rank later updates may grow to.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    n, k = matrix.shape
    if not 1 <= r <= min(n, k):
        raise ValueError(f"rank {r} exceeds matrix dimensions {matrix.shape}")
    U, s, Vt = np.linalg.svd(matrix, full_matrices=False)
    return SubspaceModel(U[:, :r].copy(), s[:r].copy(), Vt[:r].T.copy(), max_rank or r, window_size)


def inc_svd(model: SubspaceModel, column) -> SubspaceModel:
    """Append ``column`` to the represented matrix (rank-one update)."""
    c = np.asarray(column, dtype=np.float64).ravel()
    if c.size != model.n_rows:
        raise ValueError(f"column length {c.size} does not match model rows {model.n_rows}")
    U, s, V = model.U, model.s, model.V
    q, k = s.size, V.shape[0]
    p = U.T @ c
    e = c - U @ p
    # second Gram-Schmidt pass keeps U orthonormal to working precision
    p2 = U.T @ e
    e -= U @ p2
    p += p2
    rho = float(np.linalg.norm(e))
    scale = max(float(np.linalg.norm(c)), float(s[0]) if q else 0.0)
    if rho <= 1e-13 * scale:
        rho, P = 0.0, np.zeros(c.size)
    else:
        P = e / rho
    K = np.zeros((q + 1, q + 1))
    K[:q, :q] = np.diag(s)
    K[:q, q] = p
    K[q, q] = rho
    Uk, sk, Vkt = np.linalg.svd(K)
    Vext = np.zeros((k + 1, q + 1))
    Vext[:k, :q] = V
    Vext[k, q] = 1.0
    U_new = np.column_stack([U, P]) @ Uk
    V_new = Vext @ Vkt.T
    U_new, sk, V_new = _truncate(U_new, sk, V_new, model.rank)
    return replace(model, U=U_new, s=sk, V=V_new)


def dwn_svd(model: SubspaceModel, index=0) -> SubspaceModel:
    """Remove the represented column at ``index`` (default: the oldest)."""
    k = model.occupancy
    if k <= 1:
        raise ValueError("cannot remove the only retained column")
    if not -k <= index < k:
        raise IndexError(f"column index {index} out of range for occupancy {k}")
    V_rest = np.delete(model.V, index, axis=0)
    Q, R = np.linalg.qr(V_rest)
    Um, sm, Vmt = np.linalg.svd(model.s[:, None] * R.T, full_matrices=False)
    U_new, sm, V_new = _truncate(model.U @ Um, sm, Q @ Vmt.T, model.rank)
    return replace(model, U=U_new, s=sm, V=V_new)


def rep_svd(model: SubspaceModel, index, column) -> SubspaceModel:
    """Replace the represented column at ``index`` by ``column``, keeping its position."""
    k = model.occupancy
    if not -k <= index < k:
        raise IndexError(f"column index {index} out of range for occupancy {k}")
    index %= k
    if k == 1:
        fresh = partial_svd(column, 1, model.window_size, model.rank)
        return replace(fresh, covered=model.covered)
    updated = inc_svd(dwn_svd(model, index), column)
    order = list(range(k - 1))
    order.insert(index, k - 1)
    return replace(updated, V=updated.V[order])


def slide(model: SubspaceModel, column) -> SubspaceModel:
    """Append ``column`` and drop the oldest column once the window is full."""
    model = inc_svd(model, column)
    while model.occupancy > model.window_size:
        model = dwn_svd(model, 0)
    return model


def fill_frame(y, model: SubspaceModel, known):
    """Complete the rows of ``y`` that the subspace covers but the frame does not.

    ``known`` flags the rows of ``y`` that hold observations. Missing rows are
    predicted from the subspace coefficients fitted on the shared rows.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    known = np.asarray(known, dtype=bool).ravel()
    covered = model.covered_rows()
    shared = known & covered
    missing = covered & ~known
    if not missing.any():
        return y.copy()
    if not shared.any():
        raise LostTrackError("lost track: frame shares no pixels with the background model")
    US = model.U * model.s
    coef = np.linalg.pinv(US[shared], rcond=PINV_RCOND) @ y[shared]
    out = y.copy()
    out[missing] = US[missing] @ coef
    return out


def fill_subspace(model: SubspaceModel, y, known) -> SubspaceModel:
    """Extend ``U`` onto rows the frame observes but the subspace has not seen.

    Afterwards ``U`` is re-orthonormalized; ``s`` and ``V`` are rotated so the
    represented matrix is unchanged on the previously covered rows.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    known = np.asarray(known, dtype=bool).ravel()
    covered = model.covered_rows()
    shared = known & covered
    unknown = known & ~covered
    if not unknown.any():
        return model
    if not shared.any():
        raise LostTrackError("lost track: frame shares no pixels with the background model")
    US = model.U * model.s
    row_coef = np.linalg.pinv(y[shared][:, None], rcond=PINV_RCOND) @ US[shared]
    s_pinv = np.linalg.pinv(np.diag(model.s), rcond=PINV_RCOND)
    U = model.U.copy()
    U[unknown] = y[unknown][:, None] @ row_coef @ s_pinv
    Q, R = np.linalg.qr(U)
    Ur, sr, Vrt = np.linalg.svd(R * model.s)
    return replace(model, U=Q @ Ur, s=sr, V=model.V @ Vrt.T, covered=covered | known)


@dataclass
class Decomposition:
    L: np.ndarray
    S: np.ndarray
    support_mask: np.ndarray
    iterations: int = 0


def robust_sigma(values):
    """Noise scale from the median absolute deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    return 1.4826 * float(np.median(np.abs(values - np.median(values))))


def decompose_frame(model: SubspaceModel | None, y, lam, max_iters=5, tol=1e-6, known=None, fresh=None,
                    rank=1, window_size=30, outlier_scale=3.0):
    """Split ``y`` into background ``L`` and sparse foreground ``S``, then update the model.

    ``S`` is the fixed point of ``S = soft(y - P_U(y - S), lam)`` (capped at
    ``max_iters`` sweeps) restricted to ``known`` rows and zero on ``fresh``
    rows; ``L = y - S``.

    The window receives ``y`` with outlier pixels (residual beyond
    ``outlier_scale`` robust standard deviations, and beyond ``lam``)
    clipped to that threshold around the projection. Appending ``y - S`` instead would feed the
    model little but its own projection whenever ``lam`` is below the noise
    level, and the subspace would stop adapting.

    With ``model=None`` the frame bootstraps a new model and ``S = 0``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite values in frame")
    n = y.size
    known = np.ones(n, bool) if known is None else np.asarray(known, bool).ravel()
    if model is None:
        model = partial_svd(y, 1, window_size, rank)
        model.covered = known.copy()
        S = np.zeros(n)
        return Decomposition(y.copy(), S, np.zeros(n, bool), 0), model

    blocked = ~known if fresh is None else (~known | np.asarray(fresh, bool).ravel())
    U = model.U
    S = np.zeros(n)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        background = U @ (U.T @ (y - S))
        S_new = soft_threshold(y - background, lam)
        S_new[blocked] = 0.0
        delta = float(np.max(np.abs(S_new - S)))
        S = S_new
        if delta <= tol:
            break
    L = y - S

    residual = y - U @ (U.T @ L)
    active = ~blocked
    tau = max(lam, outlier_scale * robust_sigma(residual[active]))
    outliers = active & (np.abs(residual) > tau)
    column = np.where(outliers, y - residual + np.sign(residual) * tau, y)
    model = slide(model, column)
    model.covered = model.covered_rows() | known
    return Decomposition(L, S, S != 0, iterations), model


@dataclass
class FrameDecomposition:
    """Per-frame output of :class:`MaskedIncPCP`, in frame (region) coordinates."""

    L: np.ndarray
    S: np.ndarray
    support_mask: np.ndarray
    fresh: np.ndarray  # frame-shaped rows excluded from the sparse part
    filled: np.ndarray  # canvas-sized filled observation


class MaskedIncPCP:
    """Streaming decomposition of canvas-placed frames (single writer, in order)."""

    def __init__(self, canvas_shape, frame_shape, rank=1, window=30, lam=None, max_iters=5, tol=1e-6):
        self.canvas_shape = tuple(canvas_shape)
        self.rank = rank
        self.window = window
        self.lam = default_lambda(frame_shape[0] * frame_shape[1], window) if lam is None else lam
        self.max_iters = max_iters
        self.tol = tol
        self.model: SubspaceModel | None = None

    def step(self, placed) -> FrameDecomposition:
        known = placed.region.mask(self.canvas_shape).ravel()
        y = placed.canvas.ravel()
        sl = placed.region.slices
        if self.model is None:
            dec, self.model = decompose_frame(None, y, self.lam, known=known, rank=self.rank,
                                              window_size=self.window)
            fresh = np.zeros(self.canvas_shape, bool)
            filled = y
        else:
            newly_seen = known & ~self.model.covered_rows()
            filled = fill_frame(y, self.model, known)
            self.model = fill_subspace(self.model, filled, known)
            fresh = np.zeros(self.canvas_shape, bool)
            fresh[sl] = placed.masks.fresh
            fresh |= newly_seen.reshape(self.canvas_shape)
            dec, self.model = decompose_frame(self.model, filled, self.lam, self.max_iters, self.tol,
                                              known=known, fresh=fresh.ravel())
        shape = self.canvas_shape
        return FrameDecomposition(
            L=dec.L.reshape(shape)[sl].copy(),
            S=dec.S.reshape(shape)[sl].copy(),
            support_mask=dec.support_mask.reshape(shape)[sl].copy(),
            fresh=fresh[sl].copy(),
            filled=np.asarray(filled).reshape(shape),
        )
