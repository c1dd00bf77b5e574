"""Flow-guided bilateral averaging of foregrounds and final recomposition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import FlowField, warp


@dataclass(frozen=True)
class FusionConfig:
    K: int = 2  # temporal radius
    rho: float = 0.02

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("temporal radius must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


def bilateral_weights(warped_stack, reference, rho):
    """Per-pixel weights ``exp(-|warped_k - reference| / rho)`` normalized over ``k``.

    Non-finite warped samples get weight 0; the stack must contain the
    reference frame (or a finite sample at every pixel).
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    stack = np.asarray(warped_stack, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if stack.ndim != reference.ndim + 1 or stack.shape[1:] != reference.shape:
        raise ValueError(f"stack {stack.shape} does not match reference {reference.shape}")
    valid = np.isfinite(stack)
    dist = np.where(valid, np.abs(stack - reference), np.inf)
    # shift by the per-pixel minimum distance; the ratios are unchanged
    dmin = dist.min(axis=0)
    raw = np.where(valid, np.exp(-(dist - dmin) / rho), 0.0)
    return raw / raw.sum(axis=0)


def fuse_foreground(foregrounds, flows, cfg: FusionConfig | None = None, center=None):
    """Bilateral average of the foregrounds warped onto the center frame.

    ``foregrounds`` holds the window frames in temporal order and ``flows``
    the matching fields (``None`` for the center frame) such that
    ``warp(foregrounds[k], flows[k])`` is aligned with the center frame.
    ``center`` indexes the reference within a window that may be truncated
    at sequence boundaries (default: the middle).
    """
    cfg = cfg or FusionConfig()
    frames = [np.asarray(f, dtype=np.float64) for f in foregrounds]
    if len(frames) != len(flows):
        raise ValueError(f"{len(frames)} foregrounds but {len(flows)} flows")
    if not frames:
        raise ValueError("empty fusion window")
    if center is None:
        if len(frames) % 2 != 1:
            raise ValueError("a full window has 2K+1 frames; pass center for truncated windows")
        center = len(frames) // 2
    if len(frames) > 2 * cfg.K + 1:
        raise ValueError(f"window of {len(frames)} frames exceeds 2K+1 = {2 * cfg.K + 1}")
    reference = frames[center]
    warped = []
    for k, (frame, flow) in enumerate(zip(frames, flows)):
        if k == center or flow is None:
            warped.append(frame)
        else:
            warped.append(warp(frame, flow))
    stack = np.stack(warped)
    weights = bilateral_weights(stack, reference, cfg.rho)
    # averaging deviations from the reference keeps identical stacks exact
    dev = np.where(np.isfinite(stack), stack - reference, 0.0)
    return reference + np.sum(weights * dev, axis=0)


def window_indices(t, T, K):
    """Indices of the (possibly truncated) temporal window around ``t`` and the position of ``t`` in it."""
    lo, hi = max(0, t - K), min(T - 1, t + K)
    return list(range(lo, hi + 1)), t - lo


def recompose(background, foreground, region=None):
    """``clamp(background + foreground, 0, 1)``, cropped to ``region`` when inputs are canvas-sized."""
    background = np.asarray(background, dtype=np.float64)
    foreground = np.asarray(foreground, dtype=np.float64)
    if background.shape != foreground.shape:
        raise ValueError(f"region mismatch: {background.shape} vs {foreground.shape}")
    out = np.clip(background + foreground, 0.0, 1.0)
    if region is not None:
        out = out[region.slices]
    return out


def zero_flow(shape):
    return FlowField.uniform(shape, 0.0, 0.0)
