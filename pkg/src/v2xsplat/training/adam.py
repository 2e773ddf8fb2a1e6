"""Minimal Adam with per-parameter state that survives densification edits."""

from __future__ import annotations

import torch
from torch import Tensor

from ..errors import InvalidInputError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def adam_step(
    param: Tensor,
    grad: Tensor,
    state: dict,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPS,
) -> Tensor:
    """One Adam update. Mutates ``state`` (keys m, v, t) and returns the new
    parameter value; zero gradient still advances the bias-correction step but
    leaves the parameter unchanged."""
    if param.shape != grad.shape:
        raise InvalidInputError("adam_step: param/grad shape mismatch")
    if "m" not in state:
        state["m"] = torch.zeros_like(param)
        state["v"] = torch.zeros_like(param)
        state["t"] = 0
    state["t"] += 1
    state["m"] = beta1 * state["m"] + (1 - beta1) * grad
    state["v"] = beta2 * state["v"] + (1 - beta2) * grad * grad
    m_hat = state["m"] / (1 - beta1 ** state["t"])
    v_hat = state["v"] / (1 - beta2 ** state["t"])
    return param - lr * m_hat / (v_hat.sqrt() + eps)


class AdamOptimizer:
    """Named-parameter Adam over leaf tensors with requires_grad.

    Parameters are updated in place (under no_grad) so external references,
    e.g. the tensors inside a SceneGraph, keep pointing at live values.
    """

    def __init__(self, params: dict[str, Tensor], lrs: dict[str, float], default_lr: float = 1e-3):
        self.params = dict(params)
        self.lrs = dict(lrs)
        self.default_lr = default_lr
        self.state: dict[str, dict] = {name: {} for name in self.params}

    def lr_for(self, name: str) -> float:
        if name in self.lrs:
            return self.lrs[name]
        # Allow group lrs keyed by the last path component, e.g. "positions".
        leaf = name.rsplit(".", 1)[-1]
        return self.lrs.get(leaf, self.default_lr)

    def step(self) -> None:
        with torch.no_grad():
            for name, p in self.params.items():
                if p.grad is None:
                    continue
                new = adam_step(p, p.grad, self.state[name], self.lr_for(name))
                p.copy_(new)

    def zero_grad(self) -> None:
        for p in self.params.values():
            if p.grad is not None:
                p.grad = None

    # -- densification support -------------------------------------------

    def replace_param(self, name: str, new_tensor: Tensor, keep_rows=None, n_new: int = 0) -> None:
        """Swap a parameter for a resized tensor, carrying over moment rows
        for kept Gaussians and zero-initializing rows for new ones."""
        old_state = self.state.get(name, {})
        state: dict = {}
        if "m" in old_state and keep_rows is not None:
            pad = list(new_tensor.shape)
            pad[0] = n_new
            zeros = new_tensor.new_zeros(pad)
            state = {
                "m": torch.cat([old_state["m"][keep_rows], zeros]),
                "v": torch.cat([old_state["v"][keep_rows], zeros]),
                "t": old_state["t"],
            }
        self.params[name] = new_tensor
        self.state[name] = state
