"""Frame sequence I/O and noise synthesis.

Frames are 2-D float64 arrays with intensities in [0, 1]; a sequence is a
3-D array of shape (T, H, W). On disk a sequence is a directory of binary
PGM (P5) files named ``frame_%05d.pgm``.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

FRAME_NAME = "frame_{:05d}.pgm"
MIN_FRAME_SIZE = 8


def as_frame(data, check_range=True):
    """Validate and return a frame as a float64 array."""
    frame = np.asarray(data, dtype=np.float64)
    if frame.ndim != 2:
        raise ValueError(f"frame must be 2-D, got shape {frame.shape}")
    if frame.shape[0] < MIN_FRAME_SIZE or frame.shape[1] < MIN_FRAME_SIZE:
        raise ValueError(f"frame must be at least {MIN_FRAME_SIZE}x{MIN_FRAME_SIZE}, got {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame contains non-finite values")
    if check_range and (frame.min() < 0.0 or frame.max() > 1.0):
        raise ValueError("frame intensities must lie in [0, 1]")
    return frame


def as_sequence(frames, check_range=True):
    """Stack frames into a (T, H, W) array, checking uniform dimensions."""
    if isinstance(frames, np.ndarray) and frames.ndim == 3:
        seq = np.asarray(frames, dtype=np.float64)
    else:
        frames = [np.asarray(f, dtype=np.float64) for f in frames]
        if not frames:
            raise ValueError("sequence needs at least one frame")
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise ValueError(f"mixed frame dimensions: {sorted(shapes)}")
        seq = np.stack(frames)
    if seq.shape[0] < 1:
        raise ValueError("sequence needs at least one frame")
    for frame in seq:
        as_frame(frame, check_range=check_range)
    return seq


def _read_header_tokens(buf, count):
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path):
    """Read a binary PGM file; returns (integer array, maxval)."""
    buf = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(buf, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval <= 65535:
        raise ValueError(f"{path}: unsupported bit depth (maxval {maxval})")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height
    raster = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    return raster.reshape(height, width).astype(np.uint16), maxval


def write_pgm(path, values, maxval):
    values = np.asarray(values)
    height, width = values.shape
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype(dtype).tobytes())


def quantize(frame, bit_depth):
    maxval = _maxval(bit_depth)
    return np.floor(np.clip(frame, 0.0, 1.0) * maxval + 0.5).astype(np.int64)


def _maxval(bit_depth):
    if bit_depth not in (8, 16):
        raise ValueError(f"unsupported bit depth {bit_depth}; use 8 or 16")
    return (1 << bit_depth) - 1


def read_sequence(path):
    """Load every ``*.pgm`` in ``path`` (lexicographic order) as a (T, H, W) sequence.

    Intensities are divided by each file's maxval.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise FileNotFoundError(f"input directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".pgm", ".pnm"))
    if not files:
        raise ValueError(f"no frames found in {directory}")
    frames = []
    for f in files:
        raster, maxval = read_pgm(f)
        frames.append(raster.astype(np.float64) / maxval)
    shapes = {fr.shape for fr in frames}
    if len(shapes) != 1:
        raise ValueError(f"mixed frame dimensions in {directory}: {sorted(shapes)}")
    return as_sequence(frames)


def write_sequence(seq, path, bit_depth=8, name=FRAME_NAME):
    """Write frames as ``frame_%05d.pgm``; values are rounded half-up to the bit depth."""
    maxval = _maxval(bit_depth)
    seq = as_sequence(seq)
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise PermissionError(f"output directory not writable: {directory}")
    for t, frame in enumerate(seq):
        write_pgm(directory / name.format(t), quantize(frame, bit_depth), maxval)


def add_gaussian_noise(seq, variance, seed):
    """Return ``clip(x + n, 0, 1)`` with ``n ~ N(0, variance)`` i.i.d. per pixel."""
    if not variance > 0:
        raise ValueError(f"noise variance must be positive, got {variance}")
    seq = np.asarray(seq, dtype=np.float64)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, np.sqrt(variance), size=seq.shape)
    return np.clip(seq + noise, 0.0, 1.0)
