"""Parameter counts, analytic FLOPs and measured peak memory.

FLOP convention: a multiply-add is 2 FLOPs, so a (m, k) @ (k, n) product is
``2*m*k*n``.  The fused scan costs ``9*T*E*S`` per direction (discretize,
decay, input, state update, readout), a depthwise causal conv ``2*T*E*k``.
Norms, activations and gating are left out; they are linear in the token
count and small next to the projections.

The reference block is one single-head self-attention layer of width D with
no MLP: QKV projections, ``T x T`` scores, a softmax at 3 FLOPs per score,
the weighted sum of values and the output projection.
"""

from __future__ import annotations

import tracemalloc
from dataclasses import dataclass, replace

import numpy as np

from ..autodiff import backward, ops
from ..model import HARMamba, ModelConfig
from ..rng import stream

SCAN_FLOPS_PER_STATE = 9
SOFTMAX_FLOPS_PER_SCORE = 3


@dataclass
class CostReport:
    window: int
    n_tokens: int
    params: int
    flops: int
    attention_flops: int
    peak_bytes: int | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def block_flops(cfg: ModelConfig, T: int) -> int:
    D, E, S, R, k = cfg.d_model, cfg.d_inner, cfg.d_state, cfg.dt_rank, cfg.conv_kernel
    per_dir = 2 * T * E * 2 * S + 2 * T * E * R + 2 * T * R * E + SCAN_FLOPS_PER_STATE * T * E * S
    if cfg.use_conv:
        per_dir += 2 * T * E * k
    n_dir = 2 if cfg.bidirectional else 1
    return 2 * T * D * 2 * E + n_dir * per_dir + 2 * T * E * D


def model_flops(cfg: ModelConfig) -> int:
    """Forward FLOPs for one window."""
    in_dim = cfg.patch_len * (cfg.n_channels if cfg.channel_mode == "fusion" else 1)
    flops = 2 * cfg.n_patch_tokens * in_dim * cfg.d_model
    flops += cfg.n_layers * block_flops(cfg, cfg.n_tokens)
    dims = [cfg.d_model] * cfg.head_layers + [cfg.n_classes]
    flops += sum(2 * dims[i] * dims[i + 1] for i in range(cfg.head_layers))
    return int(flops)


def attention_flops(T: int, D: int) -> int:
    qkv = 2 * T * D * 3 * D
    scores = 2 * T * T * D
    softmax = SOFTMAX_FLOPS_PER_SCORE * T * T
    mix = 2 * T * T * D
    proj = 2 * T * D * D
    return int(qkv + scores + softmax + mix + proj)


def attention_params(D: int) -> int:
    return 4 * D * D + 4 * D


def param_count(cfg: ModelConfig, seed: int = 0) -> int:
    return HARMamba(cfg, seed=seed).n_params()


def block_param_count(model: HARMamba) -> int:
    return int(sum(p.data.size for blk in model.blocks for p in blk.named("b").values()))


def peak_memory(cfg: ModelConfig, batch: int = 1, seed: int = 0) -> int:
    """Peak bytes traced by tracemalloc over one forward and backward."""
    model = HARMamba(cfg, seed=seed)
    rng = stream(seed, "cost", "input")
    x = rng.standard_normal((batch, cfg.n_channels, cfg.window)).astype(np.float32)
    y = rng.integers(0, cfg.n_classes, batch)
    # one untraced pass so compiled kernels and caches are warm
    backward(ops.cross_entropy(model(x), y))
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        backward(ops.cross_entropy(model(x), y))
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return int(peak)


def cost_report(cfg: ModelConfig, windows, measure_memory: bool = True, batch: int = 1) -> list[CostReport]:
    out = []
    for L in windows:
        c = replace(cfg, window=int(L))
        c.validate()
        out.append(CostReport(
            window=int(L), n_tokens=c.n_tokens, params=param_count(c), flops=model_flops(c),
            attention_flops=attention_flops(c.n_tokens, c.d_model),
            peak_bytes=peak_memory(c, batch) if measure_memory else None))
    return out
