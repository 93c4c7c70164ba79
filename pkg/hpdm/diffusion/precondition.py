"""Sigma-dependent input/output scaling around the raw network."""

from typing import NamedTuple, Union

import torch

from ..errors import NumericError

Sigma = Union[float, torch.Tensor]


class Preconditioning(NamedTuple):
    c_in: torch.Tensor
    c_skip: torch.Tensor
    c_out: torch.Tensor
    c_noise: torch.Tensor


def coefficients(sigma: Sigma, sigma_data: float) -> Preconditioning:
    """Scalars (or [B] tensors) c_in, c_skip, c_out and c_noise for ``sigma``."""
    sigma = torch.as_tensor(sigma, dtype=torch.float64)
    if bool((sigma <= 0).any()):
        raise NumericError(f"preconditioning needs sigma > 0, got {sigma.min().item()}")
    total = sigma**2 + sigma_data**2
    return Preconditioning(
        c_in=1.0 / total.sqrt(),
        c_skip=sigma_data**2 / total,
        c_out=sigma * sigma_data / total.sqrt(),
        c_noise=sigma.log() / 4.0,
    )


def _broadcast(c: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    c = c.to(like.dtype)
    if c.dim() == 0:
        return c
    return c.reshape(-1, *([1] * (like.dim() - 1)))


def precondition(
    x_noisy: torch.Tensor, sigma: Sigma, sigma_data: float
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """(network input, c_skip, c_out, c_noise), each broadcastable against ``x_noisy``.

    ``sigma`` is a scalar or one value per leading batch element.
    """
    c = coefficients(sigma, sigma_data)
    return (
        x_noisy * _broadcast(c.c_in, x_noisy),
        _broadcast(c.c_skip, x_noisy),
        _broadcast(c.c_out, x_noisy),
        c.c_noise.to(x_noisy.dtype),
    )


def combine(
    x_noisy: torch.Tensor, raw: torch.Tensor, c_skip: torch.Tensor, c_out: torch.Tensor
) -> torch.Tensor:
    """D(x; sigma) = c_skip x + c_out F."""
    return c_skip * x_noisy + c_out * raw


def loss_weight(sigma: Sigma, sigma_data: float) -> torch.Tensor:
    """(sigma^2 + sigma_data^2) / (sigma sigma_data)^2."""
    sigma = torch.as_tensor(sigma, dtype=torch.float64)
    return (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2
