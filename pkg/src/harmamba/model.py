"""The full classifier: RevIN, patching, token embedding, block stack, head."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import Tensor, load_checkpoint, ops, save_checkpoint
from .autodiff.tensor import ShapeError
from .block import BlockParams, block_forward, init_block
from .rng import stream

CLASS_TOKEN_MODES = ("end", "none")
CHANNEL_MODES = ("independent", "fusion")
ZOH_MODES = ("simplified", "exact")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ModelConfig:
    n_channels: int
    window: int
    n_classes: int
    patch_len: int = 8
    patch_stride: int | None = None   # default: half the patch length
    d_model: int = 64
    d_inner: int | None = None        # default: 2 * d_model
    d_state: int = 16
    dt_rank: int | None = None        # default: ceil(d_model / 16)
    conv_kernel: int = 4
    n_layers: int = 12
    head_layers: int = 1
    bidirectional: bool = True
    use_conv: bool = True
    residual: bool = True
    gate_silu: bool = True
    class_token: str = "end"
    channel_mode: str = "independent"
    zoh: str = "simplified"

    def __post_init__(self):
        if self.patch_stride is None:
            self.patch_stride = max(1, self.patch_len // 2)
        if self.d_inner is None:
            self.d_inner = 2 * self.d_model
        if self.dt_rank is None:
            self.dt_rank = math.ceil(self.d_model / 16)
        self.validate()

    def validate(self) -> None:
        bad = []
        for name in ("n_channels", "window", "patch_len", "patch_stride", "d_model", "d_inner",
                     "d_state", "dt_rank", "conv_kernel", "n_layers", "head_layers"):
            if getattr(self, name) < 1:
                bad.append(f"{name} must be >= 1")
        if self.patch_len > self.window:
            bad.append(f"patch_len {self.patch_len} exceeds window {self.window}")
        if self.n_classes < 2:
            bad.append("n_classes must be >= 2")
        for name, allowed in (("class_token", CLASS_TOKEN_MODES), ("channel_mode", CHANNEL_MODES),
                              ("zoh", ZOH_MODES)):
            if getattr(self, name) not in allowed:
                bad.append(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if bad:
            raise ConfigError(bad)

    @property
    def patches_per_channel(self) -> int:
        return n_patches(self.window, self.patch_len, self.patch_stride)

    @property
    def n_patch_tokens(self) -> int:
        n = self.patches_per_channel
        return n * self.n_channels if self.channel_mode == "independent" else n

    @property
    def n_tokens(self) -> int:
        return self.n_patch_tokens + (1 if self.class_token == "end" else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError([f"unknown model key {k!r}" for k in unknown])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------------ stages

def revin_normalize(x, gamma: Tensor, beta: Tensor | None = None, eps: float = 1e-5):
    """Per-instance, per-channel standardization of ``x`` (B, D_c, L).

    Returns the normalized tensor and ``(mean, std)`` arrays of shape
    (B, D_c, 1) for :func:`revin_denormalize`.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 3 or x.shape[-1] < 2:
        raise ShapeError(f"revin: expected (B, D_c, L>=2), got {x.shape}")
    mu = ops.mean(x, axis=-1, keepdims=True)
    xc = ops.sub(x, mu)
    var = ops.mean(ops.mul(xc, xc), axis=-1, keepdims=True)
    std = ops.power(ops.add(var, eps), 0.5)
    out = ops.mul(ops.div(xc, std), ops.reshape(gamma, (-1, 1)))
    if beta is not None:
        out = ops.add(out, ops.reshape(beta, (-1, 1)))
    return out, (mu.data.copy(), std.data.copy())


def revin_denormalize(y: np.ndarray, stats, gamma: np.ndarray, beta: np.ndarray | None = None,
                      eps: float = 1e-5) -> np.ndarray:
    mu, std = stats
    gamma = np.asarray(gamma).reshape(-1, 1)
    y = np.asarray(y)
    if beta is not None:
        y = y - np.asarray(beta).reshape(-1, 1)
    return y / gamma * std + mu


def n_patches(length: int, patch_len: int, stride: int) -> int:
    if patch_len > length:
        raise ValueError(f"patch length {patch_len} exceeds sequence length {length}")
    if stride < 1:
        raise ValueError("patch stride must be >= 1")
    return (length - patch_len) // stride + 1


def patch_starts(length: int, patch_len: int, stride: int) -> np.ndarray:
    return np.arange(n_patches(length, patch_len, stride)) * stride


def patchify(x: Tensor, patch_len: int, stride: int) -> Tensor:
    """(B, D_c, L) -> (B, D_c, N, P); trailing samples short of a full patch are dropped."""
    starts = patch_starts(x.shape[-1], patch_len, stride)
    idx = starts[:, None] + np.arange(patch_len)[None, :]
    return ops.take(x, idx, axis=-1)


def embed_tokens(patches: Tensor, W: Tensor, b: Tensor, cls_token: Tensor | None,
                 pos: Tensor, channel_mode: str = "independent") -> Tensor:
    """Project patches to tokens, append the class token, add position embeddings.

    ``independent``: each length-P patch is projected by the shared ``W`` (P, D)
    and tokens are ordered channel-major.  ``fusion``: the D_c channels of one
    time patch are flattened together ((P*D_c), D).
    """
    Bn, Dc, N, P = patches.shape
    if channel_mode == "independent":
        flat = ops.reshape(patches, (Bn, Dc * N, P))
    else:
        flat = ops.reshape(ops.transpose(patches, (0, 2, 3, 1)), (Bn, N, P * Dc))
    tok = ops.linear(flat, W, b)
    if cls_token is not None:
        cls = ops.expand(ops.reshape(cls_token, (1, 1, -1)), (Bn, 1, tok.shape[-1]))
        tok = ops.concat([tok, cls], axis=1)
    if pos.shape != tok.shape[1:]:
        raise ShapeError(f"embed_tokens: {tok.shape[1]} tokens but position table has {pos.shape[0]} rows")
    return ops.add(tok, pos)


def classify(tokens: Tensor, norm_w: Tensor, norm_b: Tensor, head: list,
             class_token: str = "end") -> Tensor:
    """Raw logits from the last (class) token, or the token mean without one."""
    feat = tokens[:, -1, :] if class_token == "end" else ops.mean(tokens, axis=1)
    h = ops.layer_norm(feat, norm_w, norm_b)
    for i, (W, b) in enumerate(head):
        h = ops.linear(h, W, b)
        if i < len(head) - 1:
            h = ops.silu(h)
    return h


cross_entropy = ops.cross_entropy


# ------------------------------------------------------------------ model

class HARMamba:
    """Parameters plus forward pass; parameters are plain named tensors."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = cfg = config
        self.seed = seed

        def normal(name, shape, std=0.02):
            return Tensor(stream(seed, name).normal(0.0, std, shape), requires_grad=True)

        def param(value):
            return Tensor(value, requires_grad=True)

        in_dim = cfg.patch_len * (cfg.n_channels if cfg.channel_mode == "fusion" else 1)
        self.revin_gamma = param(np.ones(cfg.n_channels))
        self.revin_beta = param(np.zeros(cfg.n_channels))
        self.embed_W = normal("embed.W", (in_dim, cfg.d_model))
        self.embed_b = param(np.zeros(cfg.d_model))
        self.cls_token = param(np.zeros(cfg.d_model)) if cfg.class_token == "end" else None
        self.pos = normal("pos", (cfg.n_tokens, cfg.d_model))
        self.blocks: list[BlockParams] = [
            init_block(seed, f"blocks.{i}", cfg.d_model, cfg.d_inner, cfg.d_state, cfg.dt_rank,
                       cfg.conv_kernel, cfg.bidirectional)
            for i in range(cfg.n_layers)
        ]
        self.norm_w = param(np.ones(cfg.d_model))
        self.norm_b = param(np.zeros(cfg.d_model))
        dims = [cfg.d_model] * cfg.head_layers + [cfg.n_classes]
        self.head = [(normal(f"head.{i}.W", (dims[i], dims[i + 1])), param(np.zeros(dims[i + 1])))
                     for i in range(cfg.head_layers)]

    def parameters(self) -> dict[str, Tensor]:
        out = {"revin.gamma": self.revin_gamma, "revin.beta": self.revin_beta,
               "embed.W": self.embed_W, "embed.b": self.embed_b}
        if self.cls_token is not None:
            out["cls_token"] = self.cls_token
        out["pos"] = self.pos
        for i, blk in enumerate(self.blocks):
            out.update(blk.named(f"blocks.{i}"))
        out["norm.w"] = self.norm_w
        out["norm.b"] = self.norm_b
        for i, (W, b) in enumerate(self.head):
            out[f"head.{i}.W"] = W
            out[f"head.{i}.b"] = b
        return out

    def n_params(self) -> int:
        return int(sum(p.data.size for p in self.parameters().values()))

    def tokens(self, x) -> Tensor:
        """Token sequence entering the first block."""
        cfg = self.config
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 3 or x.shape[1:] != (cfg.n_channels, cfg.window):
            raise ShapeError(f"model: expected input (B, {cfg.n_channels}, {cfg.window}), got {x.shape}")
        xn, _ = revin_normalize(x, self.revin_gamma, self.revin_beta)
        patches = patchify(xn, cfg.patch_len, cfg.patch_stride)
        return embed_tokens(patches, self.embed_W, self.embed_b, self.cls_token, self.pos,
                            cfg.channel_mode)

    def forward(self, x) -> Tensor:
        cfg = self.config
        T = self.tokens(x)
        for blk in self.blocks:
            T = block_forward(T, blk, bidirectional=cfg.bidirectional, use_conv=cfg.use_conv,
                              residual=cfg.residual, gate_silu=cfg.gate_silu, zoh=cfg.zoh)
        return classify(T, self.norm_w, self.norm_b, self.head, cfg.class_token)

    __call__ = forward

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for k, p in params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data[...] = arr

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(directory / "model.ssmh", self.parameters())
        self.config.save(directory / "model.json")

    @classmethod
    def load(cls, directory) -> "HARMamba":
        directory = Path(directory)
        model = cls(ModelConfig.load(directory / "model.json"))
        model.load_state_dict(load_checkpoint(directory / "model.ssmh"))
        return model


def predict(model: HARMamba, x, batch_size: int = 256) -> np.ndarray:
    from .autodiff import no_grad

    out = []
    with no_grad():
        for i in range(0, len(x), batch_size):
            out.append(model(np.asarray(x[i:i + batch_size])).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.config.n_classes))
