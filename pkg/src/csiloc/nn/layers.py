"""Layer vocabulary for the pipeline's networks.

Convolutions are im2col/col2im reductions over the kernel backend followed
by one GEMM, so the compiled and pure kernel paths share the numeric
results. Transposed convolution is the exact adjoint of convolution for
matching hyperparameters (same weight tensor, channels swapped), which the
test suite checks to 1e-10 at 64-bit.
"""

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ShapeMismatch
from .tensor import Tensor, leaky_relu, relu, tanh

INIT_STD = 0.02  # zero-mean Gaussian for conv/deconv/FC weights

LAYER_KINDS = (
    "conv2d",
    "conv2d_transpose",
    "fully_connected",
    "batch_norm",
    "relu",
    "leaky_relu",
    "tanh",
    "max_pool",
)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description; ``build_layer`` turns it into a layer."""

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    slope: float = 0.2
    in_features: int = 0
    out_features: int = 0
    channels: int = 0
    pool: int = 2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.stride < 1 or self.padding < 0 or self.pool < 1:
            raise ValueError("kernel/stride/pool must be >= 1 and padding >= 0")
        if self.kind == "leaky_relu" and not (0.0 < self.slope < 1.0):
            raise ValueError("leaky slope must lie in (0, 1)")


def build_layer(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32):
    if spec.kind == "conv2d":
        return Conv2d(spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding, rng=rng, dtype=dtype)
    if spec.kind == "conv2d_transpose":
        return ConvTranspose2d(
            spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding, rng=rng, dtype=dtype
        )
    if spec.kind == "fully_connected":
        return Linear(spec.in_features, spec.out_features, rng=rng, dtype=dtype)
    if spec.kind == "batch_norm":
        return BatchNorm2d(spec.channels, dtype=dtype)
    if spec.kind == "relu":
        return ReLU()
    if spec.kind == "leaky_relu":
        return LeakyReLU(spec.slope)
    if spec.kind == "tanh":
        return Tanh()
    if spec.kind == "max_pool":
        return MaxPool2d(spec.pool)
    raise ValueError(spec.kind)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


class Layer:
    training = True

    def parameters(self):
        return []

    def named_state(self, prefix=""):
        """Arrays to persist: parameters plus any running statistics."""
        return {}

    def __call__(self, x):
        return self.forward(_as_tensor(x))


class Conv2d(Layer):
    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0, *, rng, dtype=np.float32):
        self.stride, self.padding, self.kernel = stride, padding, kernel
        self.in_channels, self.out_channels = in_channels, out_channels
        self.weight = Tensor(
            rng.normal(0.0, INIT_STD, size=(out_channels, in_channels, kernel, kernel)).astype(dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def named_state(self, prefix=""):
        return {prefix + "weight": self.weight.data, prefix + "bias": self.bias.data}

    def forward(self, x: Tensor) -> Tensor:
        n, ci, h, w = x.data.shape
        if ci != self.in_channels:
            raise ShapeMismatch(f"conv2d expects {self.in_channels} input channels, got {ci}")
        k, s, p = self.kernel, self.stride, self.padding
        if h + 2 * p < k or w + 2 * p < k:
            raise ShapeMismatch(f"conv2d kernel {k} larger than padded input {h}x{w}")
        oh = kernels.conv_out_size(h, k, s, p)
        ow = kernels.conv_out_size(w, k, s, p)
        co = self.out_channels
        cols = kernels.im2col(x.data, k, k, s, s, p, p)
        wmat = self.weight.data.reshape(co, -1).T
        out_mat = cols @ wmat + self.bias.data
        out = np.ascontiguousarray(out_mat.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))

        x_shape = x.data.shape

        def backward(g):
            g_mat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, co)
            dw = (g_mat.T @ cols).reshape(self.weight.data.shape)
            db = g_mat.sum(axis=0)
            dcols = g_mat @ wmat.T
            dx = kernels.col2im(dcols, x_shape, k, k, s, s, p, p)
            return dx, dw, db

        return Tensor._op(out, (x, self.weight, self.bias), backward)


class ConvTranspose2d(Layer):
    """Stride-s transposed convolution; output side = s*(in-1) + kernel - 2*padding."""

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0, *, rng, dtype=np.float32):
        self.stride, self.padding, self.kernel = stride, padding, kernel
        self.in_channels, self.out_channels = in_channels, out_channels
        self.weight = Tensor(
            rng.normal(0.0, INIT_STD, size=(in_channels, out_channels, kernel, kernel)).astype(dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def named_state(self, prefix=""):
        return {prefix + "weight": self.weight.data, prefix + "bias": self.bias.data}

    def forward(self, x: Tensor) -> Tensor:
        n, ci, hi, wi = x.data.shape
        if ci != self.in_channels:
            raise ShapeMismatch(f"conv2d_transpose expects {self.in_channels} input channels, got {ci}")
        k, s, p = self.kernel, self.stride, self.padding
        co = self.out_channels
        ho = s * (hi - 1) + k - 2 * p
        wo = s * (wi - 1) + k - 2 * p
        if ho < 1 or wo < 1:
            raise ShapeMismatch("conv2d_transpose output collapses to nothing")
        x_mat = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(n * hi * wi, ci)
        wmat = self.weight.data.reshape(ci, -1)
        cols = x_mat @ wmat
        out = kernels.col2im(cols, (n, co, ho, wo), k, k, s, s, p, p)
        out += self.bias.data[None, :, None, None]

        def backward(g):
            gcols = kernels.im2col(g, k, k, s, s, p, p)
            dx = np.ascontiguousarray((gcols @ wmat.T).reshape(n, hi, wi, ci).transpose(0, 3, 1, 2))
            dw = (x_mat.T @ gcols).reshape(self.weight.data.shape)
            db = g.sum(axis=(0, 2, 3))
            return dx, dw, db

        return Tensor._op(out, (x, self.weight, self.bias), backward)


class Linear(Layer):
    def __init__(self, in_features, out_features, *, rng, dtype=np.float32):
        self.in_features, self.out_features = in_features, out_features
        self.weight = Tensor(
            rng.normal(0.0, INIT_STD, size=(in_features, out_features)).astype(dtype), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def named_state(self, prefix=""):
        return {prefix + "weight": self.weight.data, prefix + "bias": self.bias.data}

    def forward(self, x: Tensor) -> Tensor:
        a = x.data
        if a.ndim != 2 or a.shape[1] != self.in_features:
            raise ShapeMismatch(f"fully_connected expects (N, {self.in_features}), got {a.shape}")
        w, b = self.weight.data, self.bias.data
        out = a @ w + b

        def backward(g):
            return g @ w.T, a.T @ g, g.sum(axis=0)

        return Tensor._op(out, (x, self.weight, self.bias), backward)


class BatchNorm2d(Layer):
    """Per-channel normalization over (batch, height, width).

    Training mode uses the batch statistics; running statistics are kept
    with momentum 0.99 and used verbatim in inference mode.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.99, *, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def parameters(self):
        return [self.gamma, self.beta]

    def named_state(self, prefix=""):
        return {
            prefix + "gamma": self.gamma.data,
            prefix + "beta": self.beta.data,
            prefix + "running_mean": self.running_mean,
            prefix + "running_var": self.running_var,
        }

    def forward(self, x: Tensor) -> Tensor:
        a = x.data
        if a.ndim != 4 or a.shape[1] != self.channels:
            raise ShapeMismatch(f"batch_norm expects (N, {self.channels}, H, W), got {a.shape}")
        gamma, beta = self.gamma.data, self.beta.data
        axes = (0, 2, 3)
        if self.training:
            mu = a.mean(axis=axes, keepdims=True)
            var = a.var(axis=axes, keepdims=True)
            inv = 1.0 / np.sqrt(var + self.eps)
            x_hat = (a - mu) * inv
            out = gamma[None, :, None, None] * x_hat + beta[None, :, None, None]
            m = a.shape[0] * a.shape[2] * a.shape[3]
            self.running_mean = (self.momentum * self.running_mean + (1 - self.momentum) * mu.squeeze()).astype(
                self.running_mean.dtype
            )
            self.running_var = (self.momentum * self.running_var + (1 - self.momentum) * var.squeeze()).astype(
                self.running_var.dtype
            )

            def backward(g):
                dgamma = (g * x_hat).sum(axis=axes)
                dbeta = g.sum(axis=axes)
                dxhat = g * gamma[None, :, None, None]
                dx = (
                    inv
                    / m
                    * (
                        m * dxhat
                        - dxhat.sum(axis=axes, keepdims=True)
                        - x_hat * (dxhat * x_hat).sum(axis=axes, keepdims=True)
                    )
                )
                return dx, dgamma, dbeta

            return Tensor._op(out, (x, self.gamma, self.beta), backward)

        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        scale = (gamma * inv)[None, :, None, None]
        out = (a - self.running_mean[None, :, None, None]) * scale + beta[None, :, None, None]

        def backward_eval(g):
            x_hat = (a - self.running_mean[None, :, None, None]) * inv[None, :, None, None]
            return g * scale, (g * x_hat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

        return Tensor._op(out, (x, self.gamma, self.beta), backward_eval)


class MaxPool2d(Layer):
    """Non-overlapping max pooling; window and stride are the same size."""

    def __init__(self, pool=2):
        self.pool = pool

    def forward(self, x: Tensor) -> Tensor:
        a = x.data
        n, c, h, w = a.shape
        k = self.pool
        if h % k or w % k:
            raise ShapeMismatch(f"max_pool window {k} does not tile input {h}x{w}")
        oh, ow = h // k, w // k
        windows = a.reshape(n, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, k * k)
        idx = windows.argmax(axis=-1)  # first max wins on ties
        out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

        def backward(g):
            dwin = np.zeros_like(windows)
            np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
            dx = dwin.reshape(n, c, oh, ow, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
            return (np.ascontiguousarray(dx),)

        return Tensor._op(np.ascontiguousarray(out), (x,), backward)


class ReLU(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return relu(x)


class LeakyReLU(Layer):
    def __init__(self, slope=0.2):
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return leaky_relu(x, self.slope)


class Tanh(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return tanh(x)


class Reshape(Layer):
    """Fixed reshape of the non-batch dimensions (e.g. FC output to NCHW)."""

    def __init__(self, *shape):
        self.shape = shape

    def forward(self, x: Tensor) -> Tensor:
        return x.reshape((x.data.shape[0],) + tuple(self.shape))


class Flatten(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return x.reshape((x.data.shape[0], -1))


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x) -> Tensor:
        out = _as_tensor(x)
        for layer in self.layers:
            out = layer(out)
        return out

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def named_state(self, prefix=""):
        state = {}
        for i, layer in enumerate(self.layers):
            state.update(layer.named_state(f"{prefix}{i}."))
        return state

    def load_named_state(self, state, prefix=""):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.named_state(f"{prefix}{i}.").items():
                if name not in state:
                    raise KeyError(f"checkpoint missing tensor {name!r}")
                if state[name].shape != arr.shape:
                    raise ShapeMismatch(f"{name}: checkpoint {state[name].shape} vs model {arr.shape}")
                arr[...] = state[name].astype(arr.dtype, copy=False)

    def train(self, mode=True):
        for layer in self.layers:
            layer.training = mode
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(logits)."""
    a = logits.data
    n = a.shape[0]
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match batch {n}")
    m = a.max(axis=1, keepdims=True)
    z = a - m
    logsumexp = np.log(np.exp(z).sum(axis=1)) + m[:, 0]
    picked = a[np.arange(n), labels]
    loss = np.asarray((logsumexp - picked).mean(), dtype=a.dtype)

    def backward(g):
        p = softmax(a)
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return Tensor._op(loss, (logits,), backward)
