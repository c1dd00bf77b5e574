"""PSNR, SSIM and image entropy for frames normalized to [0, 1]."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give ``inf``."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(a, b, window=8, C1=0.01 ** 2, C2=0.03 ** 2):
    """Mean SSIM over all ``window x window`` positions (uniform weights, population moments)."""
    a, b = _pair(a, b)
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than SSIM window {window}")
    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    var_a = (wa * wa).mean(axis=(-1, -2)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-1, -2)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return float(np.mean(num / den))


def image_entropy(a, bins=256):
    """Shannon entropy (bits) of the intensity histogram after quantizing to ``bins`` levels."""
    a = np.asarray(a, dtype=np.float64)
    levels = np.rint(np.clip(a, 0.0, 1.0) * (bins - 1)).astype(np.int64)
    counts = np.bincount(levels.ravel(), minlength=bins).astype(np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0


@dataclass
class MetricReport:
    psnr: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    ie: list = field(default_factory=list)

    @classmethod
    def compute(cls, outputs, references, backgrounds=None):
        report = cls()
        for t, (out, ref) in enumerate(zip(outputs, references)):
            report.psnr.append(psnr(out, ref))
            report.ssim.append(ssim(out, ref))
            report.ie.append(image_entropy(backgrounds[t] if backgrounds is not None else out))
        return report

    @staticmethod
    def _mean(values):
        finite = [v for v in values if math.isfinite(v)]
        if not values:
            return math.nan
        return math.inf if not finite else float(np.mean(finite))

    @property
    def mean_psnr(self):
        return self._mean(self.psnr)

    @property
    def mean_ssim(self):
        return self._mean(self.ssim)

    @property
    def mean_ie(self):
        return self._mean(self.ie)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "psnr", "ssim", "ie"])
            for t, row in enumerate(zip(self.psnr, self.ssim, self.ie)):
                writer.writerow([t, *(f"{v:.6f}" for v in row)])

    def summary(self):
        return (f"frames={len(self.psnr)} psnr={self.mean_psnr:.3f}dB "
                f"ssim={self.mean_ssim:.4f} ie={self.mean_ie:.3f}bits")
