"""The bidirectional block: norm, x/z projection, two conv+SSM branches, gate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .autodiff.tensor import ShapeError
from .rng import stream
from .ssm import SSMParams, init_ssm_params, selective_ssm


@dataclass
class Branch:
    conv_w: Tensor  # (E, k), conv_w[:, 0] taps the current step
    conv_b: Tensor  # (E,)
    ssm: SSMParams

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.conv_w": self.conv_w, f"{prefix}.conv_b": self.conv_b}
        out.update(self.ssm.named(prefix))
        return out


@dataclass
class BlockParams:
    norm_w: Tensor   # (D,)
    norm_b: Tensor   # (D,)
    W_in: Tensor     # (D, 2E): columns [:E] -> x, [E:] -> z
    fwd: Branch
    bwd: Branch | None
    W_out: Tensor    # (E, D)

    @property
    def d_inner(self) -> int:
        return self.W_out.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.norm_w": self.norm_w, f"{prefix}.norm_b": self.norm_b,
               f"{prefix}.W_in": self.W_in}
        out.update(self.fwd.named(f"{prefix}.fwd"))
        if self.bwd is not None:
            out.update(self.bwd.named(f"{prefix}.bwd"))
        out[f"{prefix}.W_out"] = self.W_out
        return out


def _init_branch(seed: int, prefix: str, d_inner: int, d_state: int, dt_rank: int,
                 conv_kernel: int) -> Branch:
    bound = conv_kernel ** -0.5
    rng = stream(seed, f"{prefix}.conv")
    return Branch(
        conv_w=Tensor(rng.uniform(-bound, bound, (d_inner, conv_kernel)), requires_grad=True),
        conv_b=Tensor(rng.uniform(-bound, bound, d_inner), requires_grad=True),
        ssm=init_ssm_params(seed, prefix, d_inner, d_state, dt_rank),
    )


def init_block(seed: int, prefix: str, d_model: int, d_inner: int, d_state: int, dt_rank: int,
               conv_kernel: int = 4, bidirectional: bool = True) -> BlockParams:
    def normal(name, shape):
        return Tensor(stream(seed, f"{prefix}.{name}").normal(0.0, 0.02, shape), requires_grad=True)

    return BlockParams(
        norm_w=Tensor(np.ones(d_model), requires_grad=True),
        norm_b=Tensor(np.zeros(d_model), requires_grad=True),
        W_in=normal("W_in", (d_model, 2 * d_inner)),
        fwd=_init_branch(seed, f"{prefix}.fwd", d_inner, d_state, dt_rank, conv_kernel),
        bwd=_init_branch(seed, f"{prefix}.bwd", d_inner, d_state, dt_rank, conv_kernel)
        if bidirectional else None,
        W_out=normal("W_out", (d_inner, d_model)),
    )


def _branch(x: Tensor, br: Branch, use_conv: bool, zoh: str) -> Tensor:
    if use_conv:
        x = ops.causal_conv1d(x, br.conv_w, br.conv_b)
    return selective_ssm(ops.silu(x), br.ssm, zoh)


def block_update(T_prev: Tensor, p: BlockParams, *, bidirectional: bool = True,
                 use_conv: bool = True, gate_silu: bool = True, zoh: str = "simplified") -> Tensor:
    """The pre-residual output ``Linear((y_fwd + y_bwd) * SiLU(z))``."""
    if T_prev.ndim != 3 or T_prev.shape[-1] != p.norm_w.shape[0]:
        raise ShapeError(f"block: expected (B, L, {p.norm_w.shape[0]}) tokens, got {T_prev.shape}")
    E = p.d_inner
    h = ops.layer_norm(T_prev, p.norm_w, p.norm_b)
    xz = ops.matmul(h, p.W_in)
    x = xz[:, :, :E]
    z = xz[:, :, E:]
    y = _branch(x, p.fwd, use_conv, zoh)
    if bidirectional:
        if p.bwd is None:
            raise ValueError("block: bidirectional forward requested but block has no backward branch")
        y_b = _branch(ops.flip(x, axis=1), p.bwd, use_conv, zoh)
        y = ops.add(y, ops.flip(y_b, axis=1))
    gate = ops.silu(z) if gate_silu else z
    return ops.matmul(ops.mul(y, gate), p.W_out)


def block_forward(T_prev: Tensor, p: BlockParams, *, bidirectional: bool = True,
                  use_conv: bool = True, residual: bool = True, gate_silu: bool = True,
                  zoh: str = "simplified") -> Tensor:
    upd = block_update(T_prev, p, bidirectional=bidirectional, use_conv=use_conv,
                       gate_silu=gate_silu, zoh=zoh)
    return ops.add(T_prev, upd) if residual else upd


def block_forward_unidirectional(T_prev: Tensor, p: BlockParams, **kw) -> Tensor:
    return block_forward(T_prev, p, bidirectional=False, **kw)


def block_forward_no_conv(T_prev: Tensor, p: BlockParams, **kw) -> Tensor:
    return block_forward(T_prev, p, use_conv=False, **kw)
