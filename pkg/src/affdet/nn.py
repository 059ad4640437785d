"""Dense NCHW tensor layers with manual backward passes.

Feature maps are plain numpy arrays shaped batch x channel x height x
width; learnable state lives in Parameter objects that pair a value with
a same-shape gradient buffer. Each layer caches whatever its backward
needs during forward, so the usual cycle is

    zero_grad -> forward -> loss -> backward -> SGD.step

Float-32 is the training dtype; gradient-check builds pass
dtype=np.float64 at construction for finite-difference fidelity.
"""

from __future__ import annotations

import struct

import numpy as np

from .dsp import ConfigError


class DimensionError(ValueError):
    """Operand shapes are incompatible; the message names both shapes."""


class CheckpointError(ValueError):
    """Checkpoint file cannot be decoded or fails its digest check."""


class Parameter:
    """A learnable (or tracked) array plus its gradient buffer."""

    def __init__(self, value: np.ndarray, trainable: bool = True):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape


class Module:
    """Base class: children and parameters are discovered via attributes."""

    def named_parameters(self, prefix: str = ""):
        for name, attr in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(attr, Parameter):
                yield key, attr
            elif isinstance(attr, Module):
                yield from attr.named_parameters(f"{key}.")
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{key}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0

    def parameter_count(self, trainable_only: bool = True) -> int:
        params = self.trainable_parameters() if trainable_only else self.parameters()
        return sum(p.value.size for p in params)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All named parameters (including running stats) as plain arrays."""
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        named = dict(self.named_parameters())
        missing = sorted(set(named) - set(arrays))
        unexpected = sorted(set(arrays) - set(named))
        if missing or unexpected:
            raise CheckpointError(
                f"state mismatch: missing {missing or 'none'}, unexpected {unexpected or 'none'}"
            )
        for name, p in named.items():
            value = np.asarray(arrays[name])
            if value.shape != p.value.shape:
                raise DimensionError(
                    f"parameter {name}: checkpoint shape {value.shape} != model shape {p.value.shape}"
                )
            p.value[...] = value.astype(p.value.dtype)

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; never overflows for finite input."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def broadcast_mul_channel(x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Scale each channel map of x (N,C,H,W) by s (N,C) or (N,C,1,1)."""
    if s.ndim == 2:
        s = s[:, :, None, None]
    if s.shape[:2] != x.shape[:2] or s.shape[2:] != (1, 1):
        raise DimensionError(f"cannot broadcast scale {s.shape} over input {x.shape}")
    return x * s


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over H and W, keeping N x C x 1 x 1."""
    return x.mean(axis=(2, 3), keepdims=True)


def _pad_geometry(size: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """(pad_before, pad_after, out_size); 'same' puts the odd zero trailing."""
    if padding == "valid":
        if size < k:
            raise DimensionError(f"spatial size {size} smaller than kernel {k} under valid padding")
        return 0, 0, (size - k) // stride + 1
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2, out


class Conv2d(Module):
    """2-D convolution (cross-correlation) with valid or same zero padding.

    Implemented as im2col plus one GEMM per pass, which is where numpy
    spends its time well for the small channel counts used here.
    """

    def __init__(self, in_ch, out_ch, kh, kw, stride=1, padding="valid",
                 rng=None, dtype=np.float32):
        if padding not in ("valid", "same"):
            raise ConfigError(f"unknown padding {padding!r}")
        rng = rng or np.random.default_rng(0)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kh, self.kw = kh, kw
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * kh * kw
        self.weight = Parameter(he_uniform(rng, (out_ch, in_ch, kh, kw), fan_in, dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype))
        self._cache = None

    def forward(self, x, train: bool = False):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise DimensionError(
                f"conv expects (N,{self.in_ch},H,W), got input shape {x.shape}"
            )
        n, c, h, w = x.shape
        pt, pb, out_h = _pad_geometry(h, self.kh, self.stride, self.padding)
        pl, pr, out_w = _pad_geometry(w, self.kw, self.stride, self.padding)
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else x
        s = self.stride
        # (N, C, oh, ow, kh, kw) patch view -> (C*kh*kw, N*oh*ow) column matrix
        windows = np.lib.stride_tricks.sliding_window_view(xp, (self.kh, self.kw), axis=(2, 3))
        windows = windows[:, :, ::s, ::s]
        cols = windows.transpose(1, 4, 5, 0, 2, 3).reshape(c * self.kh * self.kw, -1)
        w2d = self.weight.value.reshape(self.out_ch, -1)
        out = (w2d @ cols).reshape(self.out_ch, n, out_h, out_w).transpose(1, 0, 2, 3)
        out = np.ascontiguousarray(out) + self.bias.value[None, :, None, None]
        self._cache = (cols, xp.shape, (pt, pl, h, w), (out_h, out_w))
        return out

    def backward(self, dout):
        cols, xp_shape, (pt, pl, h, w), (out_h, out_w) = self._cache
        n = dout.shape[0]
        s = self.stride
        self.bias.grad += dout.sum(axis=(0, 2, 3))
        dout2d = np.ascontiguousarray(dout.transpose(1, 0, 2, 3)).reshape(self.out_ch, -1)
        self.weight.grad += (dout2d @ cols.T).reshape(self.weight.value.shape)
        dcols = (self.weight.value.reshape(self.out_ch, -1).T @ dout2d)
        dcols = dcols.reshape(self.in_ch, self.kh, self.kw, n, out_h, out_w)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for u in range(self.kh):
            for v in range(self.kw):
                dxp[:, :, u : u + s * out_h : s, v : v + s * out_w : s] += \
                    dcols[:, u, v].transpose(1, 0, 2, 3)
        return dxp[:, :, pt : pt + h, pl : pl + w]


class BatchNorm2d(Module):
    """Per-channel batch normalization over N, H, W with running statistics."""

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = Parameter(np.zeros(channels, dtype=dtype), trainable=False)
        self.running_var = Parameter(np.ones(channels, dtype=dtype), trainable=False)
        self._cache = None

    def forward(self, x, train: bool = False):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise DimensionError(
                f"batchnorm expects (N,{self.channels},H,W), got input shape {x.shape}"
            )
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.momentum
            self.running_mean.value[...] = (1 - m) * self.running_mean.value + m * mean
            self.running_var.value[...] = (1 - m) * self.running_var.value + m * var
        else:
            mean = self.running_mean.value
            var = self.running_var.value
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (x_hat, inv_std, train)
        return self.gamma.value[None, :, None, None] * x_hat + self.beta.value[None, :, None, None]

    def backward(self, dout):
        x_hat, inv_std, train = self._cache
        self.gamma.grad += (dout * x_hat).sum(axis=(0, 2, 3))
        self.beta.grad += dout.sum(axis=(0, 2, 3))
        dx_hat = dout * self.gamma.value[None, :, None, None]
        if not train:
            return dx_hat * inv_std[None, :, None, None]
        n, _, h, w = dout.shape
        m = n * h * w
        sum_dxh = dx_hat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxh_xh = (dx_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
        return (inv_std[None, :, None, None] / m) * (m * dx_hat - sum_dxh - x_hat * sum_dxh_xh)


class ReLU(Module):
    def forward(self, x, train: bool = False):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._mask


class Sigmoid(Module):
    def forward(self, x, train: bool = False):
        self._out = sigmoid(x)
        return self._out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)


class GlobalAvgPool(Module):
    def forward(self, x, train: bool = False):
        self._hw = x.shape[2] * x.shape[3]
        self._shape = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, dout):
        return np.broadcast_to(dout / self._hw, self._shape).copy()


class Linear(Module):
    """Affine map on (N, in_features) rows."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        self.weight = Parameter(he_uniform(rng, (out_features, in_features), in_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype))
        self._x = None

    def forward(self, x, train: bool = False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise DimensionError(
                f"linear expects (N,{self.in_features}), got input shape {x.shape}"
            )
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, dout):
        self.weight.grad += dout.T @ self._x
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.value


class Sequential(Module):
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train: bool = False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient wrt the logits.

    labels are integer class indices; the gradient is (softmax - onehot)/N.
    """
    n = logits.shape[0]
    if labels.shape[0] != n:
        raise DimensionError(f"logits batch {logits.shape} != labels batch {labels.shape}")
    probs = softmax(logits)
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float((logits.argmax(axis=1) == labels).mean())


class SGD:
    """Stochastic gradient descent with classical momentum.

    v <- momentum * v + grad;  p <- p - lr * v
    """

    def __init__(self, params: list[Parameter], lr: float = 0.01, momentum: float = 0.9):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocities):
            v *= self.momentum
            v += p.grad
            p.value -= self.lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0


def gradient_check(fn, x: np.ndarray, analytic_grad: np.ndarray,
                   eps: float = 1e-5, coords=None) -> float:
    """Max relative error between central differences of fn and analytic_grad.

    fn must be a deterministic scalar function that reads x by reference;
    x is perturbed in place coordinate by coordinate. When coords is given
    (flat indices), only those coordinates are probed. The reported error
    is max over probed coordinates of |a - n| / max(|a|, |n|, 1e-8).
    """
    flat = x.reshape(-1)
    grad_flat = np.asarray(analytic_grad).reshape(-1)
    if flat.shape != grad_flat.shape:
        raise DimensionError(f"x shape {x.shape} != grad shape {np.asarray(analytic_grad).shape}")
    if coords is None:
        coords = range(flat.size)
    worst = 0.0
    for i in coords:
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn()
        flat[i] = orig - eps
        f_minus = fn()
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = grad_flat[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def sample_coords(size: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """k distinct flat indices into a tensor of the given size."""
    if k >= size:
        return np.arange(size)
    return rng.choice(size, size=k, replace=False)


# --- checkpoint file format ("AFFC") ------------------------------------

CHECKPOINT_MAGIC = b"AFFC"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, named_arrays: dict[str, np.ndarray],
                    config_digest: str, config_json: str) -> None:
    """Write named float-32 parameter arrays plus the model-config digest.

    Layout (little-endian): magic "AFFC", version u8, digest length u16 +
    ASCII digest, config length u32 + UTF-8 config JSON, parameter count
    u32, then per parameter: name length u16 + UTF-8 name, ndim u8,
    each dim u32, row-major float-32 payload.
    """
    digest_b = config_digest.encode("ascii")
    config_b = config_json.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<B", CHECKPOINT_VERSION))
        fh.write(struct.pack("<H", len(digest_b)))
        fh.write(digest_b)
        fh.write(struct.pack("<I", len(config_b)))
        fh.write(config_b)
        fh.write(struct.pack("<I", len(named_arrays)))
        for name, arr in named_arrays.items():
            name_b = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str, str]:
    """Read an AFFC checkpoint: (named arrays, config digest, config JSON)."""

    def need(fh, n, what):
        buf = fh.read(n)
        if len(buf) != n:
            raise CheckpointError(f"{path}: truncated while reading {what}")
        return buf

    with open(path, "rb") as fh:
        if need(fh, 4, "magic") != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: magic mismatch, not an AFFC checkpoint")
        (version,) = struct.unpack("<B", need(fh, 1, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (dlen,) = struct.unpack("<H", need(fh, 2, "digest length"))
        digest = need(fh, dlen, "digest").decode("ascii")
        (clen,) = struct.unpack("<I", need(fh, 4, "config length"))
        config_json = need(fh, clen, "config").decode("utf-8")
        (count,) = struct.unpack("<I", need(fh, 4, "parameter count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", need(fh, 2, "name length"))
            name = need(fh, nlen, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", need(fh, 1, "ndim"))
            shape = tuple(struct.unpack("<I", need(fh, 4, "dim"))[0] for _ in range(ndim))
            n_items = int(np.prod(shape)) if shape else 1
            payload = need(fh, n_items * 4, f"payload of {name}")
            arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return arrays, digest, config_json
