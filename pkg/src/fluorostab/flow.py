"""Dense optical flow and flow-based warping.

Flow convention: ``estimate_flow(prev, cur)`` returns a field on ``cur``'s
pixel grid such that ``cur(p) ~= prev(p + flow(p))``; that is, each pixel of
the current frame is mapped to its location in the previous frame. Hence
``warp(prev, estimate_flow(prev, cur))`` approximates ``cur``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class FlowConfig:
    pyramid_levels: int = 3
    window_radius: int = 7
    iterations_per_level: int = 3
    # on the window-averaged structure tensor
    min_eigen_threshold: float = 1e-6
    presmooth_sigma: float = 1.0
    max_step: float = 2.0
    robust_scale: float = 0.02

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")


@dataclass
class FlowField:
    u: np.ndarray  # horizontal, + rightward
    v: np.ndarray  # vertical, + downward
    confidence: np.ndarray  # boolean, structure tensor well conditioned

    @property
    def shape(self):
        return self.u.shape

    @property
    def low_confidence(self):
        """True when fewer than a quarter of the pixels carry usable texture."""
        return float(self.confidence.mean()) < 0.25

    @classmethod
    def uniform(cls, shape, u, v):
        return cls(np.full(shape, float(u)), np.full(shape, float(v)), np.ones(shape, bool))


def bilinear_sample(image, rows, cols):
    """Sample ``image`` at fractional coordinates; coordinates are clamped (replicate border)."""
    h, w = image.shape
    rows = np.clip(rows, 0.0, h - 1)
    cols = np.clip(cols, 0.0, w - 1)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rows - r0
    fc = cols - c0
    top = image[r0, c0] * (1.0 - fc) + image[r0, c1] * fc
    bottom = image[r1, c0] * (1.0 - fc) + image[r1, c1] * fc
    out = top * (1.0 - fr) + bottom * fr
    # keep exact values where the sample lands on the grid (avoids 0 * nan)
    exact = (fr == 0) & (fc == 0)
    if np.any(exact):
        out = np.where(exact, image[r0, c0], out)
    return out


def warp(frame, flow: FlowField):
    """``out(p) = frame(p + flow(p))`` with bilinear interpolation and replicate padding."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != flow.shape:
        raise ValueError(f"frame {frame.shape} and flow {flow.shape} dimensions differ")
    rows, cols = np.indices(frame.shape, dtype=np.float64)
    return bilinear_sample(frame, rows + flow.v, cols + flow.u)


def _downsample(image):
    return ndimage.gaussian_filter(image, 1.0, mode="nearest")[::2, ::2]


def _upsample_flow(d, shape):
    rows, cols = np.indices(shape, dtype=np.float64)
    return 2.0 * bilinear_sample(d, rows / 2.0, cols / 2.0)


def _gradients(image):
    gy, gx = np.gradient(image)
    return gx, gy


def _lk_level(prev, cur, du, dv, cfg):
    size = 2 * cfg.window_radius + 1
    box = lambda a: ndimage.uniform_filter(a, size=size, mode="nearest")  # noqa: E731
    rows, cols = np.indices(cur.shape, dtype=np.float64)
    pgx, pgy = _gradients(prev)
    cgx, cgy = _gradients(cur)
    for _ in range(cfg.iterations_per_level):
        r, c = rows + dv, cols + du
        pw = bilinear_sample(prev, r, c)
        gx = 0.5 * (bilinear_sample(pgx, r, c) + cgx)
        gy = 0.5 * (bilinear_sample(pgy, r, c) + cgy)
        it = cur - pw
        # residuals from independently moving structure get little say
        wgt = 1.0 / (1.0 + (it / cfg.robust_scale) ** 2)
        wxx, wxy, wyy = wgt * gx * gx, wgt * gx * gy, wgt * gy * gy
        sxx, sxy, syy = box(wxx), box(wxy), box(wyy)
        # window residuals re-linearized about the center pixel's own flow
        bx = box(wgt * gx * it + wxx * du + wxy * dv)
        by = box(wgt * gy * it + wxy * du + wyy * dv)
        det = sxx * syy - sxy * sxy
        ok = det > 1e-18
        safe = np.where(ok, det, 1.0)
        new_u = np.where(ok, (syy * bx - sxy * by) / safe, du)
        new_v = np.where(ok, (sxx * by - sxy * bx) / safe, dv)
        du = du + np.clip(new_u - du, -cfg.max_step, cfg.max_step)
        dv = dv + np.clip(new_v - dv, -cfg.max_step, cfg.max_step)
    return du, dv


def min_eigenvalue(image, window_radius):
    """Smallest eigenvalue of the window-averaged gradient structure tensor."""
    size = 2 * window_radius + 1
    gx, gy = _gradients(image)
    sxx = ndimage.uniform_filter(gx * gx, size=size, mode="nearest")
    sxy = ndimage.uniform_filter(gx * gy, size=size, mode="nearest")
    syy = ndimage.uniform_filter(gy * gy, size=size, mode="nearest")
    half_trace = 0.5 * (sxx + syy)
    disc = np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy * sxy, 0.0))
    return half_trace - disc


def estimate_flow(prev, cur, cfg: FlowConfig | None = None) -> FlowField:
    """Coarse-to-fine local least-squares flow with ``cur(p) ~= prev(p + flow(p))``.

    Pixels whose structure tensor is too weak are given zero flow and marked
    not confident. Identical inputs give exactly zero flow.
    """
    cfg = cfg or FlowConfig()
    prev = np.asarray(prev, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    if prev.shape != cur.shape:
        raise ValueError(f"frame dimensions differ: {prev.shape} vs {cur.shape}")
    min_size = 2 ** (cfg.pyramid_levels - 1) * 8
    if min(cur.shape) < min_size:
        raise ValueError(f"frames must be at least {min_size} px for {cfg.pyramid_levels} pyramid levels")
    if cfg.presmooth_sigma > 0:
        prev_s = ndimage.gaussian_filter(prev, cfg.presmooth_sigma, mode="nearest")
        cur_s = ndimage.gaussian_filter(cur, cfg.presmooth_sigma, mode="nearest")
    else:
        prev_s, cur_s = prev, cur

    pyramid = [(prev_s, cur_s)]
    for _ in range(cfg.pyramid_levels - 1):
        p, c = pyramid[-1]
        pyramid.append((_downsample(p), _downsample(c)))

    du = np.zeros(pyramid[-1][1].shape)
    dv = np.zeros_like(du)
    for level in range(cfg.pyramid_levels - 1, -1, -1):
        p, c = pyramid[level]
        if du.shape != c.shape:
            du = _upsample_flow(du, c.shape)
            dv = _upsample_flow(dv, c.shape)
        du, dv = _lk_level(p, c, du, dv, cfg)

    confidence = min_eigenvalue(cur_s, cfg.window_radius) >= cfg.min_eigen_threshold
    du = np.where(confidence, du, 0.0)
    dv = np.where(confidence, dv, 0.0)
    return FlowField(du, dv, confidence)


def quantize_flow(flow: FlowField, max_abs=None):
    """Map u and v to [0, 1] images around 0.5 for debug dumps."""
    scale = max_abs or max(float(np.abs(flow.u).max()), float(np.abs(flow.v).max()), 1e-12)
    enc = lambda a: np.clip(0.5 + 0.5 * a / scale, 0.0, 1.0)  # noqa: E731
    return enc(flow.u), enc(flow.v), scale
