"""Forward and backward kernels for the network layers.

Layout conventions: image batches are (batch, height, width, channels);
convolution kernels are (k, k, in_channels, out_channels); fully connected
weights are (in_width, out_width).  Kernels accept float32 or float64
arrays; reductions (convolution sums, batch statistics, losses) always
accumulate in float64 and the result is cast back to the input dtype.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _f64(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float64, copy=False)


# ---------------------------------------------------------------------------
# convolution

def _im2col(x: np.ndarray, k: int):
    """Unfold k x k patches into rows of (batch*oh*ow, k*k*channels), float64."""
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    # (n, oh, ow, c, k, k) -> (n, oh, ow, k, k, c) to match kernel flattening
    windows = windows.transpose(0, 1, 2, 4, 5, 3)
    n, oh, ow = windows.shape[:3]
    cols = np.ascontiguousarray(windows, dtype=np.float64).reshape(n * oh * ow, -1)
    return cols, oh, ow


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 valid cross-correlation.

    Output spatial size is (h - k + 1, w - k + 1); no padding is applied.
    """
    n, h, w, cin = x.shape
    k, k2, kin, cout = kernel.shape
    if k != k2:
        raise ValueError("convolution kernel must be square")
    if kin != cin:
        raise ValueError(f"kernel expects {kin} input channels, input has {cin}")
    if k > h or k > w:
        raise ValueError(f"kernel size {k} exceeds input spatial size {h}x{w}")
    cols, oh, ow = _im2col(x, k)
    out = cols @ _f64(kernel).reshape(-1, cout) + _f64(bias)
    return out.astype(x.dtype, copy=False).reshape(n, oh, ow, cout)


def conv2d_backward(dout: np.ndarray, x: np.ndarray, kernel: np.ndarray):
    """Gradients of a valid stride-1 cross-correlation: (dx, dkernel, dbias)."""
    n, h, w, cin = x.shape
    k = kernel.shape[0]
    cout = kernel.shape[3]
    _, oh, ow, _ = dout.shape
    cols, _, _ = _im2col(x, k)
    dmat = _f64(dout).reshape(n * oh * ow, cout)
    dbias = dmat.sum(axis=0)
    dkernel = (cols.T @ dmat).reshape(kernel.shape)
    spread = (dmat @ _f64(kernel).reshape(-1, cout).T).reshape(n, oh, ow, k, k, cin)
    dx = np.zeros((n, h, w, cin), dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            dx[:, di:di + oh, dj:dj + ow, :] += spread[:, :, :, di, dj, :]
    return (
        dx.astype(x.dtype, copy=False),
        dkernel.astype(kernel.dtype, copy=False),
        dbias.astype(kernel.dtype, copy=False),
    )


# ---------------------------------------------------------------------------
# fully connected

def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map; batched input is flattened to (batch, in_width) first."""
    single = x.ndim == 1
    flat = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
    if flat.shape[1] != weight.shape[0]:
        raise ValueError(f"input width {flat.shape[1]} != weight rows {weight.shape[0]}")
    out = _f64(flat) @ _f64(weight) + _f64(bias)
    out = out.astype(x.dtype, copy=False)
    return out[0] if single else out


def fc_backward(dout: np.ndarray, x: np.ndarray, weight: np.ndarray):
    """Gradients of the affine map: (dx, dweight, dbias); dx keeps x's shape."""
    flat = x.reshape(x.shape[0], -1)
    d = _f64(dout)
    dweight = _f64(flat).T @ d
    dbias = d.sum(axis=0)
    dx = (d @ _f64(weight).T).reshape(x.shape)
    return (
        dx.astype(x.dtype, copy=False),
        dweight.astype(weight.dtype, copy=False),
        dbias.astype(weight.dtype, copy=False),
    )


# ---------------------------------------------------------------------------
# batch normalization (per-channel over all leading axes)

def batchnorm_forward(
    x: np.ndarray,
    scale: np.ndarray,
    shift: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
):
    """Per-channel standardization with learnable scale and shift.

    Train mode standardizes by batch statistics (biased variance) and blends
    them into the running statistics; infer mode uses the running statistics
    unchanged.  Returns (out, cache, running_mean, running_var); the cache is
    None in infer mode.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    axes = tuple(range(x.ndim - 1))
    x64 = _f64(x)
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batch normalization in train mode needs a batch of at least 2")
        mean = x64.mean(axis=axes)
        var = x64.var(axis=axes)
        new_mean = (1.0 - momentum) * running_mean + momentum * mean
        new_var = (1.0 - momentum) * running_var + momentum * var
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mean) * inv_std
    out = (xhat * _f64(scale) + _f64(shift)).astype(x.dtype, copy=False)
    cache = (xhat, inv_std) if mode == "train" else None
    return out, cache, new_mean, new_var


def batchnorm_backward(dout: np.ndarray, cache, scale: np.ndarray):
    """Gradients through train-mode batch normalization: (dx, dscale, dshift)."""
    xhat, inv_std = cache
    axes = tuple(range(dout.ndim - 1))
    count = float(np.prod([dout.shape[a] for a in axes]))
    d = _f64(dout)
    dshift = d.sum(axis=axes)
    dscale = (d * xhat).sum(axis=axes)
    dxhat = d * _f64(scale)
    dx = inv_std * (dxhat - dxhat.mean(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes) / count)
    return (
        dx.astype(dout.dtype, copy=False),
        dscale.astype(scale.dtype, copy=False),
        dshift.astype(scale.dtype, copy=False),
    )


# ---------------------------------------------------------------------------
# elementwise and head layers

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, dout, 0).astype(dout.dtype, copy=False)


def dropout(x: np.ndarray, p: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout: zero units with probability p, scale survivors by 1/(1-p).

    Identity in infer mode or at p = 0.  Returns (out, mask); the mask already
    includes the 1/(1-p) factor and is None when nothing was dropped.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if mode == "infer" or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / np.asarray(1.0 - p, dtype=x.dtype)
    return x * mask, mask


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-subtracted for overflow safety."""
    single = x.ndim == 1
    rows = x.reshape(1, -1) if single else x
    shifted = _f64(rows) - _f64(rows).max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = (e / e.sum(axis=1, keepdims=True)).astype(x.dtype, copy=False)
    return out[0] if single else out


def softmax_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    s = _f64(out)
    d = _f64(dout)
    inner = (d * s).sum(axis=-1, keepdims=True)
    return (s * (d - inner)).astype(dout.dtype, copy=False)


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over the output width, averaged over the batch.

    Returns (loss, dpred) where dpred already includes the 1/batch factor.
    """
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    single = pred.ndim == 1
    p = _f64(pred).reshape(1, -1) if single else _f64(pred)
    t = _f64(target).reshape(1, -1) if single else _f64(target)
    n, width = p.shape
    diff = p - t
    loss = float((diff * diff).sum() / (n * width))
    grad = (2.0 / (n * width)) * diff
    grad = grad.astype(pred.dtype, copy=False)
    return loss, (grad[0] if single else grad)
