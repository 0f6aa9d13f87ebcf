"""Dense tensor math for the navigation classifier.

All routines operate on plain numpy arrays and return explicit caches, so a
shared network can serve concurrent forward passes without locking. The
production dtype is float32; the same routines preserve float64 inputs, which
is how the test suite runs its reference-precision gradient checks.

Layer semantics:
  * conv2d is cross-correlation (no kernel flip), floor output extents.
  * maxpool breaks ties at the first maximal index in row-major window order,
    and the backward pass routes the gradient to that index.
  * every forward/backward raises NumericError on NaN/Inf output.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, NumericError, StateError

DTYPE = np.float32


class Tensor:
    """A parameter: dense real array plus an optional same-shape gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray, grad: Optional[np.ndarray] = None):
        self.data = np.ascontiguousarray(data)
        if grad is not None and grad.shape != self.data.shape:
            raise DimensionError(
                f"grad shape {grad.shape} != data shape {self.data.shape}"
            )
        self.grad = grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), None if self.grad is None else self.grad.copy())


def _ensure_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} produced non-finite values")


def _as_batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    """Promote a single sample to a batch of one; report whether we did."""
    if x.ndim == ndim:
        return x, False
    if x.ndim == ndim - 1:
        return x[None], True
    raise DimensionError(f"expected {ndim - 1}D or {ndim}D input, got shape {x.shape}")


def _conv_windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """View of all (kh, kw) windows: shape (N, C, Ho, Wo, kh, kw)."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    s0, s1, s2, s3 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )


def conv2d_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    stride: int = 1,
    pad: int = 0,
) -> tuple[np.ndarray, tuple]:
    """Cross-correlate ``x`` (C,H,W or N,C,H,W) with ``w`` (Cout,Cin,kh,kw)."""
    if stride < 1:
        raise DomainError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise DomainError(f"pad must be >= 0, got {pad}")
    x4, squeezed = _as_batched(x, 4)
    if w.ndim != 4:
        raise DimensionError(f"weights must be 4D, got shape {w.shape}")
    cout, cin, kh, kw = w.shape
    n, c, h, wd = x4.shape
    if c != cin:
        raise DimensionError(f"input has {c} channels, weights expect {cin}")
    if b.shape != (cout,):
        raise DimensionError(f"bias shape {b.shape} != ({cout},)")
    if h + 2 * pad < kh or wd + 2 * pad < kw:
        raise DimensionError(
            f"kernel {kh}x{kw} exceeds padded input {h + 2 * pad}x{wd + 2 * pad}"
        )
    if not np.all(np.isfinite(x4)):
        raise NumericError("conv2d input is non-finite")

    xp = np.pad(x4, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x4
    win = _conv_windows(xp, kh, kw, stride)
    _, _, ho, wo, _, _ = win.shape
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    y = cols @ w.reshape(cout, -1).T + b
    y = y.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    y = np.ascontiguousarray(y)
    _ensure_finite("conv2d_forward", y)
    cache = (xp, x4.shape, w, stride, pad, cols)
    return (y[0] if squeezed else y), cache


def conv2d_backward(
    out_grad: np.ndarray, cache: Optional[tuple]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. input, weights, and bias."""
    if cache is None:
        raise StateError("conv2d_backward called without a forward cache")
    xp, x_shape, w, stride, pad, cols = cache
    cout, cin, kh, kw = w.shape
    dy, squeezed = _as_batched(out_grad, 4)
    n, c, h, wd = x_shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if dy.shape != (n, cout, ho, wo):
        raise DimensionError(
            f"out_grad shape {dy.shape} != forward output {(n, cout, ho, wo)}"
        )

    dymat = dy.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
    dw = (dymat.T @ cols).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = (dymat @ w.reshape(cout, -1)).reshape(n, ho, wo, cin, kh, kw)

    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    dx = np.ascontiguousarray(dx)
    for name, g in (("input_grad", dx), ("weight_grad", dw), ("bias_grad", db)):
        _ensure_finite(f"conv2d_backward {name}", g)
    return (dx[0] if squeezed else dx), dw, db


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.maximum(x, 0)
    _ensure_finite("relu_forward", y)
    return y, x > 0


def relu_backward(out_grad: np.ndarray, cache: np.ndarray) -> np.ndarray:
    if cache is None:
        raise StateError("relu_backward called without a forward cache")
    if out_grad.shape != cache.shape:
        raise DimensionError(f"out_grad shape {out_grad.shape} != input {cache.shape}")
    dx = out_grad * cache
    _ensure_finite("relu_backward", dx)
    return dx


def maxpool2d_forward(
    x: np.ndarray, kernel: int, stride: int
) -> tuple[np.ndarray, tuple]:
    """Max pooling; ties go to the first (row-major) maximal window index."""
    if kernel < 1 or stride < 1:
        raise DomainError("kernel and stride must be >= 1")
    x4, squeezed = _as_batched(x, 4)
    n, c, h, w = x4.shape
    if h < kernel or w < kernel:
        raise DimensionError(f"pool kernel {kernel} exceeds input {h}x{w}")
    win = _conv_windows(x4, kernel, kernel, stride)
    _, _, ho, wo, _, _ = win.shape
    flat = win.reshape(n, c, ho, wo, kernel * kernel)
    argmax = flat.argmax(axis=-1)
    y = np.ascontiguousarray(np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0])
    _ensure_finite("maxpool2d_forward", y)
    cache = (x4.shape, kernel, stride, argmax, squeezed)
    return (y[0] if squeezed else y), cache


def maxpool2d_backward(out_grad: np.ndarray, cache: Optional[tuple]) -> np.ndarray:
    if cache is None:
        raise StateError("maxpool2d_backward called without a forward cache")
    x_shape, kernel, stride, argmax, squeezed = cache
    dy, _ = _as_batched(out_grad, 4)
    n, c, h, w = x_shape
    ho, wo = argmax.shape[2], argmax.shape[3]
    if dy.shape != (n, c, ho, wo):
        raise DimensionError(f"out_grad shape {dy.shape} != pooled {(n, c, ho, wo)}")
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for k in range(kernel * kernel):
        i, j = divmod(k, kernel)
        mask = argmax == k
        if not mask.any():
            continue
        dx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
            dy * mask
        )
    _ensure_finite("maxpool2d_backward", dx)
    return dx[0] if squeezed else dx


def flatten_forward(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    if x.ndim == 3:
        return x.reshape(-1), (x.shape,)
    if x.ndim == 4:
        return x.reshape(x.shape[0], -1), (x.shape,)
    raise DimensionError(f"flatten expects 3D or 4D input, got shape {x.shape}")


def flatten_backward(out_grad: np.ndarray, cache: tuple) -> np.ndarray:
    (shape,) = cache
    if out_grad.size != int(np.prod(shape)):
        raise DimensionError(f"out_grad size {out_grad.size} != input size of {shape}")
    return out_grad.reshape(shape)


def dense_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Affine map y = x @ w + b with w of shape (in_dim, out_dim)."""
    x2, squeezed = _as_batched(x, 2)
    if w.ndim != 2:
        raise DimensionError(f"dense weights must be 2D, got {w.shape}")
    din, dout = w.shape
    if x2.shape[1] != din:
        raise DimensionError(f"input dim {x2.shape[1]} != weight in_dim {din}")
    if b.shape != (dout,):
        raise DimensionError(f"bias shape {b.shape} != ({dout},)")
    y = x2 @ w + b
    _ensure_finite("dense_forward", y)
    cache = (x2, w, squeezed)
    return (y[0] if squeezed else y), cache


def dense_backward(
    out_grad: np.ndarray, cache: Optional[tuple]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if cache is None:
        raise StateError("dense_backward called without a forward cache")
    x2, w, squeezed = cache
    dy, _ = _as_batched(out_grad, 2)
    if dy.shape != (x2.shape[0], w.shape[1]):
        raise DimensionError(
            f"out_grad shape {dy.shape} != output {(x2.shape[0], w.shape[1])}"
        )
    dx = dy @ w.T
    dw = x2.T @ dy
    db = dy.sum(axis=0)
    for name, g in (("input_grad", dx), ("weight_grad", dw), ("bias_grad", db)):
        _ensure_finite(f"dense_backward {name}", g)
    return (dx[0] if squeezed else dx), dw, db


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, label: int | np.ndarray
) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against an integer label.

    Accepts a single (K,) logit vector with an int label, or an (N, K) batch
    with an (N,) label vector; the batched form returns the mean loss and the
    gradient already divided by N.
    """
    if logits.ndim == 1:
        k = logits.shape[0]
        if k < 2:
            raise DomainError(f"need at least 2 classes, got {k}")
        lab = int(label)
        if not 0 <= lab < k:
            raise DomainError(f"label {lab} out of range [0, {k})")
        if not np.all(np.isfinite(logits)):
            raise NumericError("logits are non-finite")
        z = logits - logits.max()
        logsumexp = np.log(np.exp(z).sum())
        loss = float(logsumexp - z[lab])
        grad = softmax(logits)
        grad[lab] -= 1
        _ensure_finite("softmax_cross_entropy grad", grad)
        return loss, grad

    if logits.ndim != 2:
        raise DimensionError(f"logits must be 1D or 2D, got shape {logits.shape}")
    n, k = logits.shape
    if k < 2:
        raise DomainError(f"need at least 2 classes, got {k}")
    labels = np.asarray(label)
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise DomainError("labels out of range")
    if not np.all(np.isfinite(logits)):
        raise NumericError("logits are non-finite")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float((logsumexp - z[np.arange(n), labels]).mean())
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1
    grad /= n
    _ensure_finite("softmax_cross_entropy grad", grad)
    return loss, grad


def glorot_uniform(
    rng: np.random.Generator, shape: Sequence[int], fan_in: int, fan_out: int
) -> np.ndarray:
    """Scaled uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=tuple(shape)).astype(DTYPE)


def sgd_update(
    param: Tensor,
    velocity: np.ndarray,
    base_lr: float,
    momentum: float,
    lr_mult: float,
) -> None:
    """One SGD-with-momentum step on a single parameter, in place.

    v <- momentum * v + grad;  p <- p - (base_lr * lr_mult) * v.
    lr_mult of 0 freezes the parameter bitwise (the update is skipped).
    """
    if not 0.0 <= momentum < 1.0:
        raise DomainError(f"momentum must be in [0, 1), got {momentum}")
    if param.grad is None:
        raise StateError("sgd_update requires a gradient")
    if param.grad.shape != param.data.shape:
        raise DimensionError(
            f"grad shape {param.grad.shape} != param shape {param.data.shape}"
        )
    if velocity.shape != param.data.shape:
        raise DimensionError(
            f"velocity shape {velocity.shape} != param shape {param.data.shape}"
        )
    velocity *= momentum
    velocity += param.grad
    lr = base_lr * lr_mult
    if lr != 0.0:
        param.data -= (lr * velocity).astype(param.data.dtype, copy=False)
        _ensure_finite("sgd_update", param.data)


def sgd_step(
    params: Iterable[Tensor],
    velocities: Iterable[np.ndarray],
    base_lr: float,
    momentum: float,
    lr_mults: Iterable[float],
) -> None:
    """Apply sgd_update across parallel lists of params/velocities/lr_mults."""
    for p, v, m in zip(params, velocities, lr_mults):
        sgd_update(p, v, base_lr, momentum, m)
