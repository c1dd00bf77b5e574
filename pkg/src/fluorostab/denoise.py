"""Self-supervised single-frame denoising with linear shift-invariant filters.

The teacher is a blind-spot filter (center tap fixed at zero) fitted by least
squares to predict Bernoulli-dropped pixels from the surviving neighbors.
The student is an unconstrained filter distilled from the teacher's outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

RIDGE = 1e-8


@dataclass
class FilterModel:
    kernel: np.ndarray  # (2w+1, 2w+1), applied as a true convolution
    bias: float = 0.0
    center_tap_zero: bool = False

    @property
    def radius(self):
        return self.kernel.shape[0] // 2

    @classmethod
    def identity(cls, radius=2):
        k = np.zeros((2 * radius + 1, 2 * radius + 1))
        k[radius, radius] = 1.0
        return cls(k, 0.0, False)

    def to_text(self):
        lines = [f"radius = {self.radius}", f"center_tap_zero = {int(self.center_tap_zero)}",
                 f"bias = {self.bias!r}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.kernel]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        header, rows = {}, []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if "=" in line:
                key, value = line.split("=", 1)
                header[key.strip()] = value.strip()
            else:
                rows.append([float(v) for v in line.split()])
        kernel = np.array(rows)
        w = int(header["radius"])
        if kernel.shape != (2 * w + 1, 2 * w + 1):
            raise ValueError(f"kernel shape {kernel.shape} does not match radius {w}")
        return cls(kernel, float(header.get("bias", 0.0)), bool(int(header.get("center_tap_zero", 0))))

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


@dataclass
class BernoulliMask:
    keep: np.ndarray  # True where the pixel survives
    p: float
    seed: int | None = None

    @property
    def dropped(self):
        return ~self.keep


@dataclass
class DenoiseConfig:
    p: float = 0.3
    replicas: int = 20
    kernel_radius: int = 2
    use_student: bool = True
    seed: int = 0
    clamp: bool = True


def _check_p(p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"drop probability must lie in (0, 1), got {p}")


def bernoulli_sample(frame, p, seed):
    """Split ``frame`` into (masked input, held-out pixels, mask); each pixel drops with probability ``p``."""
    _check_p(p)
    frame = np.asarray(frame, dtype=np.float64)
    rng = np.random.default_rng(seed)
    keep = rng.random(frame.shape) >= p
    masked = np.where(keep, frame, 0.0)
    held_out = np.where(keep, 0.0, frame)
    return masked, held_out, BernoulliMask(keep, p, seed)


def _patches(frame, radius):
    # periodic border: a tap never folds back onto its own centre pixel, unlike edge or mirror padding
    padded = np.pad(frame, radius, mode="wrap")
    size = 2 * radius + 1
    return sliding_window_view(padded, (size, size)).reshape(frame.shape[0], frame.shape[1], size * size)


def _solve(design, target):
    """Least squares via normal equations, with a ridge term if they are singular."""
    gram = design.T @ design
    rhs = design.T @ target
    try:
        c = np.linalg.cholesky(gram)
        if np.min(np.abs(np.diag(c))) ** 2 < 1e-12 * max(np.trace(gram), 1e-300):
            raise np.linalg.LinAlgError
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.solve(gram + RIDGE * np.eye(gram.shape[0]), rhs)


def _replica_rng(seed):
    return np.random.default_rng(seed)


def _teacher_samples(frame, p, replicas, radius, seed):
    """Rows of normalized blind-spot neighborhoods at dropped pixels, with their targets."""
    size = 2 * radius + 1
    center = (size * size) // 2
    taps = np.arange(size * size) != center
    rng = _replica_rng(seed)
    feats, targets = [], []
    for _ in range(replicas):
        keep = rng.random(frame.shape) >= p
        masked = np.where(keep, frame, 0.0)
        neigh = _patches(masked, radius)[..., taps]
        density = _patches(keep.astype(np.float64), radius)[..., taps].mean(axis=-1)
        density = np.maximum(density, 1.0 / taps.sum())
        sel = ~keep
        feats.append(neigh[sel] / density[sel, None])
        targets.append(frame[sel])
    return np.concatenate(feats), np.concatenate(targets), taps


def _to_model(weights, taps, radius, center_tap_zero):
    size = 2 * radius + 1
    corr = np.zeros(size * size)
    corr[taps] = weights[:-1]
    # patch weights are correlation taps; flip to a convolution kernel
    kernel = corr.reshape(size, size)[::-1, ::-1].copy()
    return FilterModel(kernel, float(weights[-1]), center_tap_zero)


def fit_teacher(frame, p=0.3, replicas=20, kernel_radius=2, seed=0) -> FilterModel:
    """Blind-spot kernel minimizing squared error on the dropped pixels of ``replicas`` Bernoulli masks.

    Surviving neighbors are divided by the local kept fraction so that the
    fitted kernel applies unchanged to unmasked frames.
    """
    _check_p(p)
    if replicas < 1:
        raise ValueError("need at least one replica")
    frame = np.asarray(frame, dtype=np.float64)
    if min(frame.shape) < 2 * kernel_radius + 1:
        raise ValueError("frame smaller than the kernel")
    X, t, taps = _teacher_samples(frame, p, replicas, kernel_radius, seed)
    design = np.column_stack([X, np.ones(len(t))])
    return _to_model(_solve(design, t), taps, kernel_radius, True)


def blind_spot_loss(model: FilterModel, frame, p, replicas, seed):
    """Summed squared error of ``model`` on dropped pixels over the seeded replicas."""
    frame = np.asarray(frame, dtype=np.float64)
    X, t, taps = _teacher_samples(frame, p, replicas, model.radius, seed)
    corr = model.kernel[::-1, ::-1].ravel()[taps]
    return float(np.sum((X @ corr + model.bias - t) ** 2))


def predict(model: FilterModel, frame, clamp=True):
    """Convolve with periodic border and add the bias; optionally clamp to [0, 1].

    Replicate or mirror borders fold taps back onto pixels near the edge, so the
    centre pixel would leak into its own prediction there. Wrapping keeps the
    blind spot exact everywhere as long as the frame is wider than the kernel.
    """
    frame = np.asarray(frame, dtype=np.float64)
    out = ndimage.convolve(frame, model.kernel, mode="wrap") + model.bias
    return np.clip(out, 0.0, 1.0) if clamp else out


def fit_student(frames, teacher_outputs, kernel_radius=2) -> FilterModel:
    """Unconstrained kernel (plus bias) minimizing squared deviation from the teacher outputs."""
    frames = list(frames)
    teacher_outputs = list(teacher_outputs)
    if not frames:
        raise ValueError("need at least one frame to distill from")
    if len(frames) != len(teacher_outputs):
        raise ValueError("frames and teacher outputs differ in length")
    size = 2 * kernel_radius + 1
    X = np.concatenate([_patches(np.asarray(f, float), kernel_radius).reshape(-1, size * size) for f in frames])
    t = np.concatenate([np.asarray(o, float).ravel() for o in teacher_outputs])
    design = np.column_stack([X, np.ones(len(t))])
    return _to_model(_solve(design, t), np.ones(size * size, bool), kernel_radius, False)


@dataclass
class ComponentDenoiser:
    """Teacher (and optional student) fitted once, then applied per frame.

    The fit uses the first frame passed to :meth:`fit` or :meth:`__call__`.
    """

    cfg: DenoiseConfig = field(default_factory=DenoiseConfig)
    teacher: FilterModel | None = None
    student: FilterModel | None = None

    def fit(self, frame):
        cfg = self.cfg
        self.teacher = fit_teacher(frame, cfg.p, cfg.replicas, cfg.kernel_radius, cfg.seed)
        if cfg.use_student:
            target = predict(self.teacher, frame, clamp=cfg.clamp)
            self.student = fit_student([frame], [target], cfg.kernel_radius)
        return self

    @property
    def model(self):
        return self.student if self.cfg.use_student else self.teacher

    def __call__(self, frame):
        if self.teacher is None:
            self.fit(frame)
        return predict(self.model, frame, clamp=self.cfg.clamp)


def denoise_component(frame, cfg: DenoiseConfig | None = None):
    """Fit on ``frame`` itself and return its denoised version."""
    return ComponentDenoiser(cfg or DenoiseConfig())(frame)
