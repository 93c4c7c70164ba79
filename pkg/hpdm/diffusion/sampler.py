"""Reverse-diffusion steppers along a decreasing sigma grid."""

import logging
import math
from typing import Callable, Optional

import torch

from ..errors import NumericError
from ..numerics.kernels import check_finite

logger = logging.getLogger(__name__)

# x at noise level sigma -> denoised prediction D(x; sigma)
DenoiseFn = Callable[[torch.Tensor, float], torch.Tensor]


def to_d(x: torch.Tensor, sigma: float, denoised: torch.Tensor) -> torch.Tensor:
    """Probability-flow direction (x - D) / sigma."""
    return (x - denoised) / sigma


def churn_gamma(churn: float, steps: int, sigma: float, s_tmin: float, s_tmax: float) -> float:
    if churn <= 0 or not s_tmin <= sigma <= s_tmax:
        return 0.0
    return min(churn / steps, math.sqrt(2.0) - 1.0)


def denoise_step(
    x: torch.Tensor,
    sigma: float,
    sigma_next: float,
    denoise_fn: DenoiseFn,
    heun: bool = False,
    gamma: float = 0.0,
    s_noise: float = 1.0,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Advance ``x`` from ``sigma`` to ``sigma_next``.

    Euler step on the probability-flow ODE, with an optional Heun
    correction (skipped on the final step to zero) and optional churn
    ``gamma`` that first raises the noise level to ``sigma * (1 + gamma)``.
    """
    sigma, sigma_next = float(sigma), float(sigma_next)
    if not sigma > sigma_next >= 0:
        raise NumericError(f"sigma must decrease: {sigma} -> {sigma_next}")

    sigma_hat = sigma * (1.0 + gamma)
    if gamma > 0:
        eps = torch.randn(x.shape, generator=generator, dtype=x.dtype) * s_noise
        x = x + eps * math.sqrt(sigma_hat**2 - sigma**2)

    d = to_d(x, sigma_hat, denoise_fn(x, sigma_hat))
    dt = sigma_next - sigma_hat
    if not heun or sigma_next == 0:
        return check_finite("denoise_step", x + d * dt)
    x_2 = x + d * dt
    d_2 = to_d(x_2, sigma_next, denoise_fn(x_2, sigma_next))
    return check_finite("denoise_step", x + 0.5 * (d + d_2) * dt)


def run_sampler(
    x: torch.Tensor,
    sigmas: torch.Tensor,
    denoise_fn: DenoiseFn,
    heun: bool = False,
    churn: float = 0.0,
    s_tmin: float = 0.0,
    s_tmax: float = math.inf,
    s_noise: float = 1.0,
    generator: Optional[torch.Generator] = None,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> torch.Tensor:
    """Integrate ``x`` (already at ``sigmas[0]``) down the whole grid."""
    steps = len(sigmas) - 1
    for i in range(steps):
        sigma, sigma_next = float(sigmas[i]), float(sigmas[i + 1])
        gamma = churn_gamma(churn, steps, sigma, s_tmin, s_tmax)
        x = denoise_step(x, sigma, sigma_next, denoise_fn, heun, gamma, s_noise, generator)
        if on_step is not None:
            on_step(i, sigma)
    return x
