"""Background offset estimation and world-view canvas placement.

Each frame's background motion relative to its predecessor is taken as the
mode of a kernel density estimate over the dense flow vectors. Offsets are
integers and accumulate; frame ``m`` is placed on the canvas at the anchor
of frame 0 shifted by the cumulative offset, so static scene content lands
on the same canvas pixels in every frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .flow import FlowConfig, FlowField, estimate_flow


class DegenerateFlowError(ValueError):
    pass


class CanvasOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class Offset:
    u: int = 0  # horizontal
    v: int = 0  # vertical

    def __add__(self, other):
        return Offset(self.u + other.u, self.v + other.v)

    def as_tuple(self):
        return (self.u, self.v)


@dataclass(frozen=True)
class KDEConfig:
    bandwidth: float = 1.0
    min_confident_fraction: float = 0.25


@dataclass(frozen=True)
class Region:
    top: int
    left: int
    height: int
    width: int

    @property
    def slices(self):
        return (slice(self.top, self.top + self.height), slice(self.left, self.left + self.width))

    def shifted(self, offset: Offset):
        return replace(self, top=self.top + offset.v, left=self.left + offset.u)

    def inside(self, canvas_shape):
        return (self.top >= 0 and self.left >= 0 and self.top + self.height <= canvas_shape[0]
                and self.left + self.width <= canvas_shape[1])

    def mask(self, canvas_shape):
        m = np.zeros(canvas_shape, dtype=bool)
        m[self.slices] = True
        return m


@dataclass
class OverlapMasks:
    overlap: np.ndarray  # frame-shaped: pixels also covered by the previous placement
    fresh: np.ndarray  # complement of ``overlap``


@dataclass
class CanvasState:
    canvas_height: int
    canvas_width: int
    frame_height: int
    frame_width: int
    anchor: tuple  # (top, left) of frame 0
    cumulative_offset: Offset
    current_region: Region | None = None

    @classmethod
    def create(cls, frame_shape, scale=2.0):
        h, w = frame_shape
        ch, cw = int(math.ceil(scale * h)), int(math.ceil(scale * w))
        if ch < h or cw < w:
            raise ValueError("canvas smaller than frame")
        return cls(ch, cw, h, w, ((ch - h) // 2, (cw - w) // 2), Offset(0, 0))

    @property
    def canvas_shape(self):
        return (self.canvas_height, self.canvas_width)


@dataclass
class PlacedFrame:
    canvas: np.ndarray  # canvas-sized, zero outside ``region``
    region: Region
    offset: Offset
    masks: OverlapMasks
    flow: FlowField | None = None  # field the offset was estimated from, if any

    def crop(self):
        return self.canvas[self.region.slices]


def estimate_offset(flow: FlowField, confidence_mask=None, kde_cfg: KDEConfig | None = None) -> Offset:
    """Integer mode of a Gaussian-smoothed 2-D histogram of the confident flow vectors.

    Ties go to the smallest offset norm, then smallest ``u``, then smallest ``v``.
    """
    kde_cfg = kde_cfg or KDEConfig()
    if kde_cfg.bandwidth <= 0:
        raise ValueError("KDE bandwidth must be positive")
    mask = flow.confidence if confidence_mask is None else np.asarray(confidence_mask, bool)
    mask = mask & np.isfinite(flow.u) & np.isfinite(flow.v)
    if mask.mean() < kde_cfg.min_confident_fraction:
        raise DegenerateFlowError(
            f"degenerate flow field: {mask.mean():.1%} confident pixels "
            f"(need {kde_cfg.min_confident_fraction:.0%})"
        )
    us = np.rint(flow.u[mask]).astype(np.int64)
    vs = np.rint(flow.v[mask]).astype(np.int64)
    pad = int(math.ceil(4 * kde_cfg.bandwidth)) + 1
    u0, v0 = us.min() - pad, vs.min() - pad
    hist = np.zeros((vs.max() - v0 + pad + 1, us.max() - u0 + pad + 1))
    np.add.at(hist, (vs - v0, us - u0), 1.0)
    density = ndimage.gaussian_filter(hist, kde_cfg.bandwidth, mode="constant", truncate=4.0)
    best = density.max()
    rows, cols = np.nonzero(density >= best * (1.0 - 1e-12))
    candidates = sorted(
        (abs(int(c) + u0) ** 2 + abs(int(r) + v0) ** 2, int(c) + u0, int(r) + v0) for r, c in zip(rows, cols)
    )
    _, u, v = candidates[0]
    return Offset(int(u), int(v))


def overlap_masks(region: Region, previous: Region | None):
    """Frame-shaped masks of the pixels of ``region`` shared with / new relative to ``previous``."""
    overlap = np.zeros((region.height, region.width), dtype=bool)
    if previous is None:
        overlap[:] = True
    else:
        top = max(region.top, previous.top)
        left = max(region.left, previous.left)
        bottom = min(region.top + region.height, previous.top + previous.height)
        right = min(region.left + region.width, previous.left + previous.width)
        if bottom > top and right > left:
            overlap[top - region.top : bottom - region.top, left - region.left : right - region.left] = True
    return OverlapMasks(overlap=overlap, fresh=~overlap)


def place_frame(state: CanvasState, frame, offset: Offset):
    """Place ``frame`` shifted by ``offset`` relative to the previous placement.

    Returns ``(placed, new_state)``; ``state`` is not modified.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (state.frame_height, state.frame_width):
        raise ValueError(f"frame {frame.shape} does not match canvas frame size "
                         f"{(state.frame_height, state.frame_width)}")
    cumulative = state.cumulative_offset + offset
    region = Region(state.anchor[0] + cumulative.v, state.anchor[1] + cumulative.u,
                    state.frame_height, state.frame_width)
    if not region.inside(state.canvas_shape):
        need_h = state.frame_height + 2 * abs(cumulative.v)
        need_w = state.frame_width + 2 * abs(cumulative.u)
        raise CanvasOverflowError(
            f"canvas overflow: cumulative offset {cumulative.as_tuple()} needs a canvas of at least "
            f"{need_h}x{need_w}, have {state.canvas_height}x{state.canvas_width}"
        )
    masks = overlap_masks(region, state.current_region)
    canvas = np.zeros(state.canvas_shape)
    canvas[region.slices] = frame
    new_state = replace(state, cumulative_offset=cumulative, current_region=region)
    return PlacedFrame(canvas, region, offset, masks), new_state


def stabilize_sequence(seq, flow_cfg: FlowConfig | None = None, kde_cfg: KDEConfig | None = None,
                       canvas_scale=2.0, estimate=True):
    """Yield a :class:`PlacedFrame` per input frame, in order.

    With ``estimate=False`` every offset is (0, 0) (no stabilization).
    """
    seq = np.asarray(seq, dtype=np.float64)
    state = CanvasState.create(seq.shape[1:], canvas_scale)
    prev = None
    for frame in seq:
        flow = None
        if prev is None or not estimate:
            offset = Offset(0, 0)
        else:
            flow = estimate_flow(prev, frame, flow_cfg)
            offset = estimate_offset(flow, kde_cfg=kde_cfg)
        placed, state = place_frame(state, frame, offset)
        placed.flow = flow
        prev = frame
        yield placed
