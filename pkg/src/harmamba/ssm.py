"""Selective state-space layer: discretization, selection and three scan routes.

The continuous system is ``h'(t) = A h(t) + B x(t)``, ``y = C h`` with a
diagonal, strictly negative ``A = -exp(A_log)`` of shape (E, S).  Every
channel ``e`` of the input drives its own S-dimensional state.

Numpy reference routes (no autodiff):

* :func:`scan_sequential` -- the recurrence, one step at a time.
* :func:`scan_conv_lti` -- time-invariant only; materializes the kernel
  ``(C B, C A B, ..., C A^{L-1} B)`` and convolves.
* :func:`scan_parallel` -- work-efficient (Blelloch) associative scan on the
  pairs ``(A_bar_t, B_bar_t x_t)``.

The training route is :func:`selective_scan`, a fused tape op backed by the
compiled kernels in ``_scan_kernels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _scan_kernels
from .autodiff import Tensor, no_grad, ops
from .autodiff.tensor import ShapeError, make_result
from .rng import stream

ZOH_MODES = ("simplified", "exact")


@dataclass
class SSMParams:
    A_log: Tensor      # (E, S)
    W_B: Tensor        # (E, S)
    W_C: Tensor        # (E, S)
    W_dt_down: Tensor  # (E, R)
    W_dt_up: Tensor    # (R, E)
    dt_bias: Tensor    # (E,)

    @property
    def A(self) -> Tensor:
        return ops.neg(ops.exp(self.A_log))

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": v for k, v in vars(self).items()}


@dataclass
class DiscretizedParams:
    A_bar: np.ndarray  # (B, L, E, S)
    B_bar: np.ndarray  # (B, L, E, S)
    C: np.ndarray      # (B, L, S)

    def bar_x(self, x: np.ndarray) -> np.ndarray:
        return self.B_bar * np.asarray(x)[..., None]


def inverse_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


def init_ssm_params(seed: int, prefix: str, d_inner: int, d_state: int, dt_rank: int,
                    dt_min: float = 1e-3, dt_max: float = 1e-1) -> SSMParams:
    E, S, R = d_inner, d_state, dt_rank

    def normal(name, shape, std):
        return Tensor(stream(seed, f"{prefix}.{name}").normal(0.0, std, shape),
                      requires_grad=True, name=f"{prefix}.{name}")

    # A = -(1..S) on every channel: a spread of decay rates, no HiPPO matrix
    a_log = np.log(np.tile(np.arange(1, S + 1, dtype=np.float64), (E, 1)))
    dt = np.exp(stream(seed, f"{prefix}.dt_bias").uniform(math.log(dt_min), math.log(dt_max), E))
    return SSMParams(
        A_log=Tensor(a_log, requires_grad=True, name=f"{prefix}.A_log"),
        W_B=normal("W_B", (E, S), 0.02),
        W_C=normal("W_C", (E, S), 0.02),
        W_dt_down=normal("W_dt_down", (E, R), 0.02),
        W_dt_up=normal("W_dt_up", (R, E), R ** -0.5),
        dt_bias=Tensor(inverse_softplus(dt), requires_grad=True, name=f"{prefix}.dt_bias"),
    )


def zoh_discretize(A, B, delta, mode: str = "simplified"):
    """Return ``(A_bar, B_bar)`` for elementwise (diagonal) ``A``.

    ``A_bar = exp(delta * A)``.  ``mode="simplified"`` gives ``B_bar = delta * B``;
    ``mode="exact"`` gives ``(delta A)^{-1} (exp(delta A) - 1) delta B``, whose
    ``A -> 0`` limit is again ``delta * B``.  Inputs must already broadcast.
    """
    if mode not in ZOH_MODES:
        raise ValueError(f"unknown zoh mode {mode!r}; expected one of {ZOH_MODES}")
    A = np.asarray(A, dtype=np.float64 if np.ndim(A) == 0 else None)
    delta = np.asarray(delta)
    if np.any(delta <= 0):
        raise ValueError("zoh_discretize: step size delta must be strictly positive")
    dA = delta * A
    A_bar = np.exp(dA)
    if mode == "simplified":
        return A_bar, delta * np.asarray(B)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dA == 0, 1.0, np.expm1(dA) / np.where(dA == 0, 1.0, dA))
    return A_bar, ratio * delta * np.asarray(B)


def project(x: Tensor, params: SSMParams):
    """Per-timestep selection: ``delta (B,L,E)``, ``B (B,L,S)``, ``C (B,L,S)``."""
    Bm = ops.matmul(x, params.W_B)
    Cm = ops.matmul(x, params.W_C)
    dt = ops.matmul(ops.matmul(x, params.W_dt_down), params.W_dt_up)
    delta = ops.softplus(ops.add(dt, params.dt_bias))
    return delta, Bm, Cm


def select_params(x, params: SSMParams, mode: str = "simplified") -> DiscretizedParams:
    x = x if isinstance(x, Tensor) else Tensor(x)
    with no_grad():
        delta, Bm, Cm = project(x, params)
        A = params.A.data
    A_bar, B_bar = zoh_discretize(A, Bm.data[:, :, None, :], delta.data[..., None], mode)
    return DiscretizedParams(A_bar=A_bar, B_bar=B_bar, C=Cm.data)


def _check_dp(dp: DiscretizedParams, x: np.ndarray) -> None:
    if dp.A_bar.shape != dp.B_bar.shape or dp.A_bar.ndim != 4:
        raise ShapeError(f"scan: A_bar {dp.A_bar.shape} and B_bar {dp.B_bar.shape} must both be (B,L,E,S)")
    if x.shape != dp.A_bar.shape[:3]:
        raise ShapeError(f"scan: input {x.shape} does not match params {dp.A_bar.shape[:3]}")


def scan_sequential(dp: DiscretizedParams, x) -> np.ndarray:
    x = np.asarray(x)
    _check_dp(dp, x)
    Bn, L, E, S = dp.A_bar.shape
    h = np.zeros((Bn, E, S), dtype=np.result_type(dp.A_bar, x))
    y = np.empty((Bn, L, E), dtype=h.dtype)
    for t in range(L):
        h = dp.A_bar[:, t] * h + dp.B_bar[:, t] * x[:, t, :, None]
        y[:, t] = np.einsum("bes,bs->be", h, dp.C[:, t])
    return y


def _time_invariant(arr: np.ndarray, name: str, axis: int = 1) -> np.ndarray:
    first = np.take(arr, [0], axis=axis)
    if not np.array_equal(np.broadcast_to(first, arr.shape), arr):
        raise ValueError(f"scan_conv_lti: {name} varies over time; convolution mode needs LTI parameters")
    return np.take(arr, 0, axis=axis)


def lti_kernel(A_bar: np.ndarray, B_bar: np.ndarray, C: np.ndarray, L: int) -> np.ndarray:
    """``K[b, k, e] = sum_s C[b,s] A_bar[b,e,s]^k B_bar[b,e,s]`` for ``k < L``."""
    Bn, E, S = A_bar.shape
    K = np.empty((Bn, L, E), dtype=np.result_type(A_bar, B_bar, C))
    power = np.ones_like(A_bar, dtype=K.dtype)
    for k in range(L):
        K[:, k] = np.einsum("bes,bs->be", power * B_bar, C)
        power = power * A_bar
    return K


def scan_conv_lti(A_bar, B_bar, C, x) -> np.ndarray:
    """Convolution-mode evaluation for time-invariant parameters.

    Accepts either per-step arrays (A_bar/B_bar ``(B,L,E,S)``, C ``(B,L,S)``),
    which must be constant along L, or already time-free ``(B,E,S)``/``(B,S)``.
    """
    x = np.asarray(x)
    A_bar, B_bar, C = np.asarray(A_bar), np.asarray(B_bar), np.asarray(C)
    if A_bar.ndim == 4:
        A_bar = _time_invariant(A_bar, "A_bar")
        B_bar = _time_invariant(B_bar, "B_bar")
        C = _time_invariant(C, "C")
    Bn, L, E = x.shape
    if A_bar.shape != (Bn, E, A_bar.shape[-1]) or B_bar.shape != A_bar.shape:
        raise ShapeError(f"scan_conv_lti: params {A_bar.shape} do not match input {x.shape}")
    K = lti_kernel(A_bar, B_bar, C, L)
    y = np.zeros((Bn, L, E), dtype=np.result_type(K, x))
    for k in range(L):
        y[:, k:] += K[:, k][:, None, :] * x[:, :L - k]
    return y


def scan_parallel(dp: DiscretizedParams, x) -> np.ndarray:
    """Blelloch scan over time with the combine ``(a2,b2)o(a1,b1) = (a1 a2, a2 b1 + b2)``.

    The time axis is padded to a power of two with the identity ``(1, 0)``;
    the tree shape depends only on L, so results are reproducible.
    """
    x = np.asarray(x)
    _check_dp(dp, x)
    Bn, L, E, S = dp.A_bar.shape
    n = 1 << max(0, (L - 1).bit_length())
    dtype = np.result_type(dp.A_bar, x)
    a = np.ones((n, Bn, E, S), dtype=dtype)
    b = np.zeros((n, Bn, E, S), dtype=dtype)
    elem_a = np.moveaxis(dp.A_bar, 1, 0)
    elem_b = np.moveaxis(dp.bar_x(x), 1, 0)
    a[:L] = elem_a
    b[:L] = elem_b

    levels = n.bit_length() - 1
    for d in range(levels):
        step = 1 << (d + 1)
        right = np.arange(step - 1, n, step)
        left = right - (1 << d)
        b[right] = a[right] * b[left] + b[right]
        a[right] = a[left] * a[right]
    a[n - 1] = 1.0
    b[n - 1] = 0.0
    for d in range(levels - 1, -1, -1):
        step = 1 << (d + 1)
        right = np.arange(step - 1, n, step)
        left = right - (1 << d)
        la, lb = a[left].copy(), b[left].copy()
        a[left], b[left] = a[right], b[right]
        b[right] = la * b[right] + lb
        a[right] = a[right] * la
    # exclusive prefix -> inclusive state (h_0 = 0 so only the b half matters)
    h = elem_a * b[:L] + elem_b
    return np.einsum("tbes,bts->bte", h, dp.C)


def selective_scan(u: Tensor, delta: Tensor, A: Tensor, Bm: Tensor, Cm: Tensor,
                   mode: str = "simplified") -> Tensor:
    """Fused differentiable scan: ``y[b,t,e] = sum_s C[b,t,s] h[b,t,e,s]``."""
    if mode not in ZOH_MODES:
        raise ValueError(f"unknown zoh mode {mode!r}; expected one of {ZOH_MODES}")
    if u.ndim != 3 or delta.shape != u.shape:
        raise ShapeError(f"selective_scan: u {u.shape} and delta {delta.shape} must match as (B,L,E)")
    Bn, L, E = u.shape
    if A.ndim != 2 or A.shape[0] != E:
        raise ShapeError(f"selective_scan: A {A.shape} must be (E={E}, S)")
    S = A.shape[1]
    if Bm.shape != (Bn, L, S) or Cm.shape != (Bn, L, S):
        raise ShapeError(f"selective_scan: B {Bm.shape} / C {Cm.shape} must be {(Bn, L, S)}")
    exact = mode == "exact"
    dtype = u.dtype
    uu, dd, AA, BB, CC = (np.ascontiguousarray(t.data, dtype=dtype) for t in (u, delta, A, Bm, Cm))

    dA = np.multiply(dd[..., None], AA)
    np.exp(dA, out=dA)
    y = _scan_kernels.scan_forward(uu, dd, dA, AA, BB, CC, exact)

    def bw(g):
        gu, gd, gA_b, gB, gC = _scan_kernels.scan_backward(
            uu, dd, dA, AA, BB, CC, np.ascontiguousarray(g, dtype=dtype), exact)
        return gu, gd, gA_b.sum(axis=0), gB, gC

    return make_result("selective_scan", y, (u, delta, A, Bm, Cm), bw)


def selective_ssm(x: Tensor, params: SSMParams, mode: str = "simplified") -> Tensor:
    delta, Bm, Cm = project(x, params)
    return selective_scan(x, delta, params.A, Bm, Cm, mode)
