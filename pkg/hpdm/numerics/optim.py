"""AdamW with warmup + cosine learning rate and an EMA parameter copy."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from ..errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class Schedule:
    """Linear warmup from 0 to ``peak_lr``, then cosine decay to ``min_lr``."""

    peak_lr: float = 2e-3
    min_lr: float = 1e-5
    warmup_steps: int = 100
    total_steps: int = 2000

    def lr_at(self, step: int) -> float:
        if step < self.warmup_steps:
            return self.peak_lr * step / self.warmup_steps
        span = max(1, self.total_steps - self.warmup_steps)
        progress = min(1.0, (step - self.warmup_steps) / span)
        cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
        return self.min_lr + (self.peak_lr - self.min_lr) * cosine


class OptimizerState:
    """Owns the AdamW moments, the global step counter and the EMA copy.

    ``step`` applies one update using the gradients currently stored on the
    model's parameters. Gradients are checked for NaN/Inf before anything is
    touched so an aborted step leaves parameters and moments intact.
    """

    def __init__(
        self,
        model: nn.Module,
        schedule: Optional[Schedule] = None,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.99),
        eps: float = 1e-8,
        ema_decay: float = 0.999,
        grad_clip: float = 0.0,
    ):
        if not 0.0 < ema_decay < 1.0:
            raise ValueError(f"EMA decay must lie in (0, 1), got {ema_decay}")
        self.model = model
        self.schedule = schedule or Schedule()
        self.ema_decay = ema_decay
        self.grad_clip = grad_clip
        self.global_step = 0
        self.names = [name for name, p in model.named_parameters() if p.requires_grad]
        self.params = [p for p in model.parameters() if p.requires_grad]
        self.adamw = torch.optim.AdamW(
            self.params,
            lr=self.schedule.lr_at(0),
            betas=betas,
            eps=eps,
            weight_decay=weight_decay,
        )
        self.ema = {
            name: p.detach().clone() for name, p in zip(self.names, self.params)
        }

    @property
    def lr(self) -> float:
        return self.schedule.lr_at(self.global_step)

    def zero_grad(self) -> None:
        self.adamw.zero_grad(set_to_none=True)

    def _check_grads(self) -> None:
        for name, p in zip(self.names, self.params):
            if p.grad is not None and not bool(torch.isfinite(p.grad).all()):
                bad = int((~torch.isfinite(p.grad)).sum())
                raise NonFiniteError("optimizer_step", f"{bad} bad gradient entries in '{name}'")

    def step(self) -> float:
        """Apply one update; returns the learning rate that was used."""
        self._check_grads()
        lr = self.lr
        for group in self.adamw.param_groups:
            group["lr"] = lr
        if self.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.params, self.grad_clip)
        self.adamw.step()
        with torch.no_grad():
            for name, p in zip(self.names, self.params):
                self.ema[name].lerp_(p.detach(), 1.0 - self.ema_decay)
        self.global_step += 1
        return lr

    # -- persistence ---------------------------------------------------------

    def moments(self) -> list[tuple[int, Optional[torch.Tensor], Optional[torch.Tensor]]]:
        """Per-parameter (step, exp_avg, exp_avg_sq) in parameter order."""
        out = []
        for p in self.params:
            state = self.adamw.state.get(p, {})
            if not state:
                out.append((0, None, None))
                continue
            step = int(float(state["step"]))
            m = state["exp_avg"].detach().clone()
            v = state["exp_avg_sq"].detach().clone()
            out.append((step, m, v))
        return out

    def load_moments(
        self,
        global_step: int,
        moments: list[tuple[int, Optional[torch.Tensor], Optional[torch.Tensor]]],
        ema: Optional[dict[str, torch.Tensor]] = None,
    ) -> None:
        """Restore state written by :meth:`moments` (e.g. from a checkpoint)."""
        if len(moments) != len(self.params):
            raise ShapeError("load_moments", (len(self.params),), (len(moments),))
        state: dict[int, dict] = {}
        for idx, (p, (step, m, v)) in enumerate(zip(self.params, moments)):
            if step <= 0:
                continue
            if m is None or v is None or m.shape != p.shape or v.shape != p.shape:
                raise ShapeError("load_moments", p.shape, getattr(m, "shape", ()))
            state[idx] = {
                "step": torch.tensor(float(step), dtype=torch.float32),
                "exp_avg": m.to(p.dtype).clone(),
                "exp_avg_sq": v.to(p.dtype).clone(),
            }
        groups = self.adamw.state_dict()["param_groups"]
        self.adamw.load_state_dict({"state": state, "param_groups": groups})
        self.global_step = int(global_step)
        if ema is not None:
            for name in self.names:
                self.ema[name] = ema[name].to(self.params[0].dtype).clone()
        logger.debug("restored optimizer state at step %d", self.global_step)
