"""Central finite-difference verification of the tape gradients (64-bit)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward, no_grad, ops, precision


@dataclass
class GradCheckResult:
    name: str
    n_probes: int
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name:<24} probes={self.n_probes:<3d} max_rel_err={self.max_rel_err:.3e}"


def relative_error(analytic: float, numeric: float, floor: float = 1e-7) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(loss_fn: Callable[[], Tensor], leaves: Mapping[str, Tensor], n_probes: int = 20,
              eps: float = 1e-4, tol: float = 1e-3, seed: int = 0, name: str = "") -> GradCheckResult:
    """Compare backprop against central differences on ``n_probes`` random entries.

    ``loss_fn`` must rebuild a scalar from the current ``leaves`` each call;
    probe entries are spread round-robin over the leaves.
    """
    leaves = dict(leaves)
    for t in leaves.values():
        t.zero_grad()
    backward(loss_fn())
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}
    rng = np.random.default_rng(seed)
    names = list(leaves)
    worst = 0.0
    for i in range(n_probes):
        key = names[i % len(names)]
        t = leaves[key]
        flat = t.data.reshape(-1)
        j = int(rng.integers(flat.size))
        orig = flat[j]
        with no_grad():
            flat[j] = orig + eps
            up = loss_fn().item()
            flat[j] = orig - eps
            down = loss_fn().item()
        flat[j] = orig
        numeric = (up - down) / (2 * eps)
        worst = max(worst, relative_error(float(analytic[key].reshape(-1)[j]), numeric))
    return GradCheckResult(name, n_probes, worst, tol)


def _leaf(rng, shape, scale=1.0, positive=False):
    v = rng.standard_normal(shape) * scale
    if positive:
        v = np.abs(v) + 0.1
    return Tensor(v, requires_grad=True)


def run_suite(n_probes: int = 20, seed: int = 0, tol: float = 1e-3) -> list[GradCheckResult]:
    """Gradient checks for conv, scan, block variants, RevIN, head and loss.

    Each scalar is ``sum(out * R)`` for a fixed random ``R`` so every output
    entry contributes.
    """
    from .block import block_forward, init_block
    from .model import HARMamba, ModelConfig, classify, revin_normalize
    from .ssm import init_ssm_params, selective_scan, selective_ssm

    results = []
    with precision("f64"):
        rng = np.random.default_rng(seed)

        def check(name, build_loss, leaves):
            results.append(gradcheck(build_loss, leaves, n_probes=n_probes, tol=tol,
                                     seed=int(rng.integers(2**31)), name=name))

        # elementwise / shape ops
        x = _leaf(rng, (3, 5))
        R = np.random.default_rng(1)
        r1 = R.standard_normal((3, 5))
        check("softmax", lambda: ops.sum(ops.mul(ops.softmax(x), Tensor(r1))), {"x": x})
        check("silu+softplus", lambda: ops.sum(ops.mul(ops.silu(ops.softplus(x)), Tensor(r1))), {"x": x})
        w, b = _leaf(rng, (5,)), _leaf(rng, (5,))
        check("layer_norm", lambda: ops.sum(ops.mul(ops.layer_norm(x, w, b), Tensor(r1))),
              {"x": x, "w": w, "b": b})

        # causal conv
        cx, ck, cb = _leaf(rng, (2, 9, 4)), _leaf(rng, (4, 4)), _leaf(rng, (4,))
        rc = rng.standard_normal((2, 9, 4))
        check("causal_conv1d", lambda: ops.sum(ops.mul(ops.causal_conv1d(cx, ck, cb), Tensor(rc))),
              {"x": cx, "kernel": ck, "bias": cb})

        # fused scan, both discretizations
        Bn, L, E, S = 2, 11, 3, 4
        u = _leaf(rng, (Bn, L, E))
        d = _leaf(rng, (Bn, L, E), 0.3, positive=True)
        A = Tensor(-(np.abs(rng.standard_normal((E, S))) + 0.3), requires_grad=True)
        Bm, Cm = _leaf(rng, (Bn, L, S)), _leaf(rng, (Bn, L, S))
        ry = rng.standard_normal((Bn, L, E))
        for mode in ("simplified", "exact"):
            check(f"selective_scan[{mode}]",
                  lambda mode=mode: ops.sum(ops.mul(selective_scan(u, d, A, Bm, Cm, mode), Tensor(ry))),
                  {"u": u, "delta": d, "A": A, "B": Bm, "C": Cm})

        # projection + scan as used in a block
        sp = init_ssm_params(seed, "gc.ssm", E, S, 2)
        sx = _leaf(rng, (Bn, L, E))
        check("selective_ssm", lambda: ops.sum(ops.mul(selective_ssm(sx, sp), Tensor(ry))),
              {"x": sx, **sp.named("ssm")})

        # full block in each ablation setting
        D, Lt = 6, 7
        tk = _leaf(rng, (2, Lt, D))
        rt = rng.standard_normal((2, Lt, D))
        for label, kw in (("block[bi+conv]", {}), ("block[bi]", {"use_conv": False}),
                          ("block[uni]", {"bidirectional": False})):
            bp = init_block(seed, f"gc.{label}", D, 8, 4, 2, 4, kw.get("bidirectional", True))
            # larger weights than init so every path carries signal
            for pname, p in bp.named("p").items():
                if p.data.ndim == 2 and not pname.endswith("A_log"):
                    p.data[...] = rng.standard_normal(p.shape) * 0.5
            check(label, lambda bp=bp, kw=kw: ops.sum(ops.mul(block_forward(tk, bp, **kw), Tensor(rt))),
                  {"T": tk, **bp.named("blk")})

        # RevIN
        rx = _leaf(rng, (2, 3, 10))
        g, bt = _leaf(rng, (3,)), _leaf(rng, (3,))
        rr = rng.standard_normal((2, 3, 10))
        check("revin", lambda: ops.sum(ops.mul(revin_normalize(rx, g, bt)[0], Tensor(rr))),
              {"x": rx, "gamma": g, "beta": bt})

        # classification head, both pooling modes
        ht = _leaf(rng, (4, 5, D))
        nw, nb = _leaf(rng, (D,)), _leaf(rng, (D,))
        head = [(_leaf(rng, (D, D)), _leaf(rng, (D,))), (_leaf(rng, (D, 3)), _leaf(rng, (3,)))]
        rh = rng.standard_normal((4, 3))
        head_leaves = {"tokens": ht, "norm_w": nw, "norm_b": nb,
                       **{f"head{i}.{n}": p for i, pair in enumerate(head) for n, p in zip("Wb", pair)}}
        for mode in ("end", "none"):
            check(f"head[{mode}]",
                  lambda mode=mode: ops.sum(ops.mul(classify(ht, nw, nb, head, mode), Tensor(rh))),
                  head_leaves)

        # loss
        logits = _leaf(rng, (6, 4))
        labels = rng.integers(0, 4, 6)
        check("cross_entropy", lambda: ops.cross_entropy(logits, labels), {"logits": logits})

        # end to end through a tiny model
        cfg = ModelConfig(n_channels=2, window=16, n_classes=3, patch_len=4, d_model=8,
                          d_state=4, n_layers=2)
        model = HARMamba(cfg, seed=seed)
        for p in model.parameters().values():
            if p.data.ndim == 2 and p.data.std() < 0.1:
                p.data[...] = rng.standard_normal(p.shape) * 0.3
        mx = rng.standard_normal((3, 2, 16))
        my = rng.integers(0, 3, 3)
        check("model+loss", lambda: ops.cross_entropy(model(mx), my), model.parameters())
    return results
