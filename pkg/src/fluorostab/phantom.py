"""Synthetic translating-background videos with known ground truth.

The background is a seeded smooth random texture; each frame is a crop of it
at an integer offset (the simulated detector motion). Disk-shaped blobs move
along piecewise-linear paths in frame coordinates and are composited on top.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .config import ConfigError, format_kv, load_kv, parse_kv


@dataclass
class Blob:
    radius: int
    intensity: float
    # (t, row, col) keypoints; the center is linearly interpolated in t
    waypoints: list = field(default_factory=list)

    def center(self, t):
        pts = sorted(self.waypoints)
        ts = [p[0] for p in pts]
        row = np.interp(t, ts, [p[1] for p in pts])
        col = np.interp(t, ts, [p[2] for p in pts])
        return int(np.floor(row + 0.5)), int(np.floor(col + 0.5))


@dataclass
class PhantomSpec:
    height: int = 128
    width: int = 128
    frames: int = 16
    # per-frame (u, v) integer crop offsets: u horizontal, v vertical
    offsets: list = field(default_factory=list)
    blobs: list = field(default_factory=list)
    background_level: float = 0.5
    texture_contrast: float = 0.3
    texture_sigma: float = 4.0
    texture_seed: int = 0
    texture_size: tuple | None = None

    def offset_list(self):
        if not self.offsets:
            return [(0, 0)] * self.frames
        if len(self.offsets) != self.frames:
            raise ValueError(f"{len(self.offsets)} offsets given for {self.frames} frames")
        return [(int(u), int(v)) for u, v in self.offsets]


@dataclass
class PhantomTruth:
    offsets: np.ndarray  # (T, 2) integer (u, v)
    masks: np.ndarray  # (T, H, W) boolean foreground masks
    background: np.ndarray  # (T, H, W) blob-free renders


def make_texture(shape, sigma, contrast, level, seed):
    if contrast == 0:
        return np.full(shape, float(level))
    rng = np.random.default_rng(seed)
    field_ = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    field_ -= field_.mean()
    field_ /= np.abs(field_).max()
    return np.clip(level + contrast * field_, 0.0, 1.0)


def disk_mask(shape, center, radius):
    rows, cols = np.ogrid[: shape[0], : shape[1]]
    return (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius * radius


def generate_phantom(spec: PhantomSpec, seed=None):
    """Render ``spec`` into a clean (T, H, W) sequence plus ground truth.

    ``seed`` overrides ``spec.texture_seed`` when given.
    """
    offsets = np.array(spec.offset_list(), dtype=np.int64).reshape(-1, 2)
    h, w = spec.height, spec.width
    umin, vmin = offsets.min(axis=0)
    umax, vmax = offsets.max(axis=0)
    need = (h + vmax - vmin, w + umax - umin)
    if spec.texture_size is None:
        tex_shape = need
    else:
        tex_shape = tuple(spec.texture_size)
        if tex_shape[0] < need[0] or tex_shape[1] < need[1]:
            raise ValueError(f"offsets out of texture bounds: need texture {need}, have {tex_shape}")
    for blob in spec.blobs:
        if not 0.0 <= blob.intensity <= 1.0:
            raise ValueError(f"blob intensity {blob.intensity} outside [0, 1]")
    texture = make_texture(
        tex_shape,
        spec.texture_sigma,
        spec.texture_contrast,
        spec.background_level,
        spec.texture_seed if seed is None else seed,
    )
    frames, masks, backgrounds = [], [], []
    for t in range(spec.frames):
        u, v = offsets[t]
        r0, c0 = v - vmin, u - umin
        bg = texture[r0 : r0 + h, c0 : c0 + w].copy()
        frame = bg.copy()
        for blob in spec.blobs:
            disk = disk_mask((h, w), blob.center(t), blob.radius)
            frame[disk] = blob.intensity
        backgrounds.append(bg)
        frames.append(frame)
        masks.append(frame != bg)
    truth = PhantomTruth(offsets=offsets, masks=np.stack(masks), background=np.stack(backgrounds))
    return np.stack(frames), truth


def random_phantom_spec(seed, height=128, width=128, frames=16, max_step=3, n_blobs=3,
                        radius_range=(4, 8), moving=True, **kwargs):
    """Random integer camera path (each step at most ``max_step`` px) and moving blobs."""
    rng = np.random.default_rng(seed)
    offsets = [(0, 0)]
    if moving:
        for _ in range(frames - 1):
            du, dv = rng.integers(-max_step, max_step + 1, size=2)
            u, v = offsets[-1]
            offsets.append((int(u + du), int(v + dv)))
    else:
        offsets = [(0, 0)] * frames
    blobs = []
    for _ in range(n_blobs):
        radius = int(rng.integers(radius_range[0], radius_range[1] + 1))
        lo, hi = radius + 2, min(height, width) - radius - 3
        start = rng.integers(lo, hi, size=2)
        end = rng.integers(lo, hi, size=2)
        mid_t = int(rng.integers(1, max(frames - 1, 2)))
        mid = rng.integers(lo, hi, size=2)
        waypoints = [(0, *start.tolist()), (mid_t, *mid.tolist()), (frames - 1, *end.tolist())]
        blobs.append(Blob(radius=radius, intensity=float(rng.uniform(0.85, 1.0)), waypoints=waypoints))
    return PhantomSpec(height=height, width=width, frames=frames, offsets=offsets, blobs=blobs,
                       texture_seed=int(seed), **kwargs)


# -- flat key/value serialization ---------------------------------------------

def spec_to_kv(spec: PhantomSpec):
    values = {
        "height": spec.height,
        "width": spec.width,
        "frames": spec.frames,
        "background_level": spec.background_level,
        "texture_contrast": spec.texture_contrast,
        "texture_sigma": spec.texture_sigma,
        "texture_seed": spec.texture_seed,
    }
    if spec.offsets:
        values["offsets"] = " ".join(f"{u},{v}" for u, v in spec.offsets)
    for i, blob in enumerate(spec.blobs):
        pts = " ".join(f"{t}:{r}:{c}" for t, r, c in blob.waypoints)
        values[f"blob{i}"] = f"{blob.radius} {blob.intensity} {pts}"
    return values


def spec_from_kv(values):
    """Inverse of :func:`spec_to_kv`. ``velocity = u,v`` is accepted in place of ``offsets``."""
    values = dict(values)
    try:
        spec = PhantomSpec(
            height=int(values.pop("height", 128)),
            width=int(values.pop("width", 128)),
            frames=int(values.pop("frames", 16)),
            background_level=float(values.pop("background_level", 0.5)),
            texture_contrast=float(values.pop("texture_contrast", 0.3)),
            texture_sigma=float(values.pop("texture_sigma", 4.0)),
            texture_seed=int(values.pop("texture_seed", values.pop("seed", 0))),
        )
        if "offsets" in values:
            pairs = values.pop("offsets").split()
            spec.offsets = [tuple(int(x) for x in p.split(",")) for p in pairs]
        if "velocity" in values:
            du, dv = (int(x) for x in values.pop("velocity").split(","))
            spec.offsets = [(t * du, t * dv) for t in range(spec.frames)]
        for key in sorted(k for k in values if k.startswith("blob")):
            parts = values.pop(key).split()
            waypoints = [tuple(int(x) for x in p.split(":")) for p in parts[2:]]
            spec.blobs.append(Blob(radius=int(parts[0]), intensity=float(parts[1]), waypoints=waypoints))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed phantom spec: {exc}") from exc
    if values:
        raise ConfigError(f"unknown phantom keys: {sorted(values)}")
    return spec


def load_spec(path):
    return spec_from_kv(load_kv(path))


def dumps_spec(spec):
    return format_kv(spec_to_kv(spec))


def loads_spec(text):
    return spec_from_kv(parse_kv(text))
