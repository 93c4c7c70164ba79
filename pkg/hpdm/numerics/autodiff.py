"""Reverse-mode differentiation entry points and finite-difference checks.

The tape is torch's define-by-run autograd graph: it is rebuilt on every
forward pass and consumed by :func:`backward`. Gradient checks evaluate
in float64 so that central differences are accurate to well below the
1e-3 tolerance the kernels are held to.
"""

import copy
import logging
from typing import Callable, Iterable, Optional, Sequence, Union

import torch
from torch import nn

from ..errors import NondeterministicError, NonFiniteError, NotOnTapeError, ShapeError

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-8

ScalarFn = Callable[[torch.Tensor], torch.Tensor]


def backward(loss: torch.Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from ``loss``.

    The graph is freed afterwards, so calling this twice on the same loss
    is an error.
    """
    if loss.dim() != 0 and loss.numel() != 1:
        raise ShapeError("backward", loss.shape, (), detail="loss must be scalar")
    if loss.grad_fn is None and not loss.requires_grad:
        raise NotOnTapeError("loss was not produced by any recorded op")
    if not bool(torch.isfinite(loss).all()):
        raise NonFiniteError("backward", f"loss = {float(loss)}")
    loss.reshape(()).backward()


def _as_scalar(value: torch.Tensor) -> torch.Tensor:
    if value.numel() != 1:
        raise ShapeError("grad_check", value.shape, (), detail="function must be scalar")
    return value.reshape(())


def grad_check(
    f: ScalarFn,
    x: torch.Tensor,
    eps: float = 1e-6,
    indices: Optional[Sequence[int]] = None,
) -> float:
    """Max relative error between autograd and central differences.

    ``f`` maps a tensor shaped like ``x`` to a scalar. The check runs in
    float64 on a copy of ``x``. ``indices`` restricts the comparison to a
    subset of flattened coordinates.
    """
    base = x.detach().to(torch.float64).clone()

    probe = base.clone().requires_grad_(True)
    value = _as_scalar(f(probe))
    again = _as_scalar(f(base.clone()))
    if not torch.equal(value.detach(), again.detach()):
        raise NondeterministicError(
            f"function is not deterministic: {float(value)} vs {float(again)}"
        )
    (analytic,) = torch.autograd.grad(value, probe, allow_unused=True)
    if analytic is None:
        analytic = torch.zeros_like(base)
    analytic = analytic.reshape(-1)

    flat = base.reshape(-1)
    coords = range(flat.numel()) if indices is None else indices
    worst = 0.0
    with torch.no_grad():
        for i in coords:
            plus = flat.clone()
            plus[i] += eps
            minus = flat.clone()
            minus[i] -= eps
            f_plus = float(_as_scalar(f(plus.reshape(base.shape))))
            f_minus = float(_as_scalar(f(minus.reshape(base.shape))))
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[i])
            denom = max(abs(a), abs(numeric), RELATIVE_FLOOR)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def shadow64(module: nn.Module) -> nn.Module:
    """Float64 deep copy of a module, used for gradient checks."""
    return copy.deepcopy(module).double()


def grad_check_parameters(
    loss_fn: Callable[[nn.Module], torch.Tensor],
    module: nn.Module,
    count: int = 100,
    eps: float = 1e-6,
    generator: Optional[torch.Generator] = None,
) -> float:
    """Finite-difference check of ``loss_fn`` w.r.t. a random parameter subset.

    ``loss_fn`` receives the float64 shadow of ``module`` and must return a
    scalar. ``count`` scalar parameter entries are drawn uniformly over all
    trainable entries.
    """
    model = shadow64(module)
    params = [p for p in model.parameters() if p.requires_grad]
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    if total == 0:
        return 0.0
    picks = torch.randperm(total, generator=generator)[: min(count, total)].tolist()

    model.zero_grad(set_to_none=True)
    loss = _as_scalar(loss_fn(model))
    repeat = _as_scalar(loss_fn(model))
    if not torch.equal(loss.detach(), repeat.detach()):
        raise NondeterministicError("loss is not deterministic for fixed parameters")
    grads = torch.autograd.grad(loss, params, allow_unused=True)

    offsets = []
    acc = 0
    for n in sizes:
        offsets.append(acc)
        acc += n

    worst = 0.0
    with torch.no_grad():
        for flat_idx in picks:
            k = max(j for j, off in enumerate(offsets) if off <= flat_idx)
            local = flat_idx - offsets[k]
            view = params[k].view(-1)
            original = float(view[local])
            view[local] = original + eps
            f_plus = float(loss_fn(model))
            view[local] = original - eps
            f_minus = float(loss_fn(model))
            view[local] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            g = grads[k]
            a = 0.0 if g is None else float(g.reshape(-1)[local])
            denom = max(abs(a), abs(numeric), RELATIVE_FLOOR)
            worst = max(worst, abs(a - numeric) / denom)
    logger.debug("parameter grad check over %d entries: max rel err %.3e", len(picks), worst)
    return worst


def check_kernel(kernel, seed: int, eps: float = 1e-6) -> float:
    """Gradient-check a catalog kernel on its own random sample inputs.

    Non-scalar outputs are reduced with a fixed random projection so that
    every output entry contributes to the checked gradient. Arguments that
    are sequences of tensors (concat) are checked element by element.
    """
    gen = torch.Generator().manual_seed(seed)
    args = kernel.sample(gen, torch.float64)

    def reduce(out: Union[torch.Tensor, Iterable[torch.Tensor]]) -> torch.Tensor:
        parts = [out] if isinstance(out, torch.Tensor) else list(out)
        total = torch.zeros((), dtype=torch.float64)
        local = torch.Generator().manual_seed(seed + 7919)
        for part in parts:
            w = torch.randn(part.shape, generator=local, dtype=torch.float64)
            total = total + (part * w).sum()
        return total

    def with_value(position: int, element: Optional[int], value: torch.Tensor) -> list:
        call = list(args)
        if element is None:
            call[position] = value
        else:
            seq = list(call[position])
            seq[element] = value
            call[position] = seq
        return call

    worst = 0.0
    for position in kernel.grad_args:
        arg = args[position]
        elements = [None] if isinstance(arg, torch.Tensor) else list(range(len(arg)))
        for element in elements:
            start = arg if element is None else arg[element]

            def f(value: torch.Tensor, position=position, element=element) -> torch.Tensor:
                return reduce(kernel.fn(*with_value(position, element, value)))

            worst = max(worst, grad_check(f, start, eps=eps))
    return worst
