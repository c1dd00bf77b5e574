"""Stabilize, decompose and denoise noisy fluoroscopy-like video."""
from .config import ConfigError, PipelineConfig
from .metrics import MetricReport, image_entropy, psnr, ssim
from .pipeline import PipelineResult, StageError, run_ablation_suite, run_pipeline
from .video_io import add_gaussian_noise, read_sequence, write_sequence

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "MetricReport",
    "PipelineConfig",
    "PipelineResult",
    "StageError",
    "add_gaussian_noise",
    "image_entropy",
    "psnr",
    "read_sequence",
    "run_ablation_suite",
    "run_pipeline",
    "ssim",
    "write_sequence",
]
