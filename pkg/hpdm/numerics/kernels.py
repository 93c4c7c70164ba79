"""Differentiable tensor kernels used by the denoiser.

Each kernel is a thin, shape-checked wrapper over torch. Outputs are
checked for NaN/Inf so that a numeric blow-up surfaces at the op that
produced it instead of several blocks later. Kernels register themselves
in a catalog together with a sampler of small random inputs, which the
gradient property tests iterate over.
"""

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import torch
import torch.nn.functional as F

from ..errors import NonFiniteError, ShapeError

LAYER_NORM_EPS = 1e-5

SampleFn = Callable[[torch.Generator, torch.dtype], list[Any]]


@dataclass(frozen=True)
class Kernel:
    """A registered differentiable op."""

    name: str
    fn: Callable[..., Any]
    sample: SampleFn
    grad_args: tuple[int, ...] = (0,)
    description: str = ""


_CATALOG: dict[str, Kernel] = {}


def register(
    name: str,
    sample: SampleFn,
    grad_args: tuple[int, ...] = (0,),
    description: str = "",
) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    """Decorator adding a kernel to the catalog."""

    def wrap(fn: Callable[..., Any]) -> Callable[..., Any]:
        _CATALOG[name] = Kernel(
            name=name, fn=fn, sample=sample, grad_args=grad_args, description=description
        )
        return fn

    return wrap


def kernel_set() -> dict[str, Kernel]:
    """Catalog of every differentiable op, keyed by name."""
    from . import grid  # noqa: F401  (registers grid_sample_3d)

    return dict(_CATALOG)


def check_finite(op: str, out: torch.Tensor) -> torch.Tensor:
    if not bool(torch.isfinite(out).all()):
        bad = int((~torch.isfinite(out)).sum())
        raise NonFiniteError(op, f"{bad} of {out.numel()} values")
    return out


def _randn(gen: torch.Generator, dtype: torch.dtype, *shape: int) -> torch.Tensor:
    return torch.randn(*shape, generator=gen, dtype=dtype)


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------


@register(
    "add",
    lambda g, dt: [_randn(g, dt, 3, 4), _randn(g, dt, 3, 4)],
    grad_args=(0, 1),
)
def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError("add", a.shape, b.shape) from None
    return check_finite("add", a + b)


@register("scale", lambda g, dt: [_randn(g, dt, 5), 0.7])
def scale(x: torch.Tensor, factor: float) -> torch.Tensor:
    return check_finite("scale", x * factor)


@register(
    "mul",
    lambda g, dt: [_randn(g, dt, 2, 5), _randn(g, dt, 2, 5)],
    grad_args=(0, 1),
)
def mul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError("mul", a.shape, b.shape) from None
    return check_finite("mul", a * b)


@register("gelu", lambda g, dt: [_randn(g, dt, 4, 6)])
def gelu(x: torch.Tensor) -> torch.Tensor:
    return check_finite("gelu", F.gelu(x))


@register("softmax", lambda g, dt: [_randn(g, dt, 3, 5)])
def softmax(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    return check_finite("softmax", torch.softmax(x, dim=axis))


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


@register(
    "matmul",
    lambda g, dt: [_randn(g, dt, 3, 4), _randn(g, dt, 4, 2)],
    grad_args=(0, 1),
)
def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() < 2 or b.dim() < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    return check_finite("matmul", a @ b)


@register(
    "linear",
    lambda g, dt: [_randn(g, dt, 2, 3), _randn(g, dt, 3, 4), _randn(g, dt, 4)],
    grad_args=(0, 1, 2),
)
def linear(
    x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Affine map ``x @ weight + bias`` with weight laid out [in, out]."""
    if weight.dim() != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear", x.shape, weight.shape)
    if bias is not None and tuple(bias.shape) != (weight.shape[1],):
        raise ShapeError("linear", weight.shape, bias.shape, detail="bias")
    out = x @ weight
    if bias is not None:
        out = out + bias
    return check_finite("linear", out)


@register(
    "layer_norm",
    lambda g, dt: [_randn(g, dt, 3, 6), 1.0 + 0.1 * _randn(g, dt, 6), _randn(g, dt, 6)],
    grad_args=(0, 1, 2),
)
def layer_norm(
    x: torch.Tensor,
    weight: Optional[torch.Tensor] = None,
    bias: Optional[torch.Tensor] = None,
    eps: float = LAYER_NORM_EPS,
) -> torch.Tensor:
    """Normalize over the last axis; variance floor ``eps``."""
    dim = x.shape[-1]
    for name, p in (("weight", weight), ("bias", bias)):
        if p is not None and tuple(p.shape) != (dim,):
            raise ShapeError("layer_norm", x.shape, p.shape, detail=name)
    return check_finite("layer_norm", F.layer_norm(x, (dim,), weight, bias, eps))


# ---------------------------------------------------------------------------
# Structural
# ---------------------------------------------------------------------------


@register(
    "concat",
    lambda g, dt: [[_randn(g, dt, 2, 3, 4), _randn(g, dt, 2, 1, 4)], 1],
    grad_args=(0,),
)
def concat(tensors: Sequence[torch.Tensor], axis: int = 1) -> torch.Tensor:
    """Concatenate along the channel axis (axis 1 for batched [B, C, ...])."""
    first = tensors[0]
    for t in tensors[1:]:
        if t.dim() != first.dim():
            raise ShapeError("concat", first.shape, t.shape)
        ax = axis % first.dim()
        if any(t.shape[i] != first.shape[i] for i in range(first.dim()) if i != ax):
            raise ShapeError("concat", first.shape, t.shape, detail=f"axis {axis}")
    return check_finite("concat", torch.cat(list(tensors), dim=axis))


@register("split", lambda g, dt: [_randn(g, dt, 2, 5, 3), [2, 3], 1])
def split(x: torch.Tensor, sizes: Sequence[int], axis: int = 1) -> tuple[torch.Tensor, ...]:
    if sum(sizes) != x.shape[axis]:
        raise ShapeError("split", x.shape, tuple(sizes), detail=f"axis {axis}")
    return tuple(check_finite("split", t) for t in torch.split(x, list(sizes), dim=axis))


@register("mean", lambda g, dt: [_randn(g, dt, 4, 5), 0])
def mean(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    return check_finite("mean", x.mean(dim=axis))


@register(
    "mse_loss",
    lambda g, dt: [_randn(g, dt, 3, 4), _randn(g, dt, 3, 4)],
    grad_args=(0, 1),
)
def mse_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements."""
    if a.shape != b.shape:
        raise ShapeError("mse_loss", a.shape, b.shape)
    return check_finite("mse_loss", ((a - b) ** 2).mean())


# ---------------------------------------------------------------------------
# Attention
# ---------------------------------------------------------------------------


@register(
    "attention",
    lambda g, dt: [_randn(g, dt, 2, 3, 4), _randn(g, dt, 2, 5, 4), _randn(g, dt, 2, 5, 6)],
    grad_args=(0, 1, 2),
    description="scaled dot-product (cross-)attention",
)
def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """softmax(q k^T / sqrt(d)) v over the last two axes.

    q: [..., Nq, d], k: [..., Nk, d], v: [..., Nk, dv] -> [..., Nq, dv]
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError("attention", q.shape, k.shape, v.shape)
    scores = (q @ k.transpose(-2, -1)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = torch.softmax(scores, dim=-1)
    return check_finite("attention", weights @ v)
