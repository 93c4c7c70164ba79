"""Noise schedules, preconditioning, the joint loss and reverse-diffusion steps."""

from .precondition import coefficients, combine, loss_weight, precondition
from .sampler import denoise_step, run_sampler
from .schedule import NoiseSchedule, SamplerConfig, sample_sigmas, sigma_grid
from .training import PyramidBatch, StepResult, joint_loss, make_batch, training_step

__all__ = [
    "NoiseSchedule",
    "PyramidBatch",
    "SamplerConfig",
    "StepResult",
    "coefficients",
    "combine",
    "denoise_step",
    "joint_loss",
    "loss_weight",
    "make_batch",
    "precondition",
    "run_sampler",
    "sample_sigmas",
    "sigma_grid",
    "training_step",
]
