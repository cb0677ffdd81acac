"""Layer implementations with hand-derived backward rules.

Conventions: row vectors (y = xW + b), valid convolutions with stride 1,
pooling drops the trailing remainder window, ReLU subgradient at 0 is 0.
Each layer caches its last forward pass; backward consumes that cache and
writes parameter gradients without mutating parameters.
"""

from __future__ import annotations

import numpy as np

from ..errors import CalledBeforeForward, KernelTooWide, ShapeMismatch

_FINITE_CHECKS = False


def set_finite_checks(enabled: bool) -> None:
    """Debug mode: assert no NaN/Inf leaves any forward/backward pass."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = enabled


def _checked(t: np.ndarray) -> np.ndarray:
    if _FINITE_CHECKS and not np.isfinite(t).all():
        raise FloatingPointError("non-finite value in layer output")
    return t


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                   fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base: parameter-free identity. params and grads stay index-aligned."""

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise CalledBeforeForward(f"{type(self).__name__}.backward before forward")
        return self._cache


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        w = glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim, dtype)
        b = np.zeros(out_dim, dtype=dtype)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(
                f"Dense expects (n, {self.in_dim}), got {x.shape}")
        self._cache = x
        return _checked(x @ self.params[0] + self.params[1])

    def backward(self, grad):
        x = self._take_cache()
        self.grads[0] = x.T @ grad
        self.grads[1] = grad.sum(axis=0)
        return _checked(grad @ self.params[0].T)


class Relu(Layer):
    def forward(self, x, train=False):
        self._cache = x > 0
        return _checked(np.where(self._cache, x, 0))

    def backward(self, grad):
        mask = self._take_cache()
        return _checked(np.where(mask, grad, 0))


class Tanh(Layer):
    def forward(self, x, train=False):
        y = np.tanh(x)
        self._cache = y
        return _checked(y)

    def backward(self, grad):
        y = self._take_cache()
        return _checked(grad * (1.0 - y * y))


class Sigmoid(Layer):
    def forward(self, x, train=False):
        # 1/(1+e^-x) via tanh for symmetric overflow behaviour
        y = 0.5 * (np.tanh(0.5 * x) + 1.0)
        self._cache = y
        return _checked(y)

    def backward(self, grad):
        y = self._take_cache()
        return _checked(grad * y * (1.0 - y))


class Conv1D(Layer):
    """Valid 1-D convolution, stride 1: (n, L, c_in) -> (n, L-k+1, filters)."""

    def __init__(self, in_channels: int, filters: int, kernel: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.in_channels, self.filters, self.kernel = in_channels, filters, kernel
        fan_in, fan_out = kernel * in_channels, kernel * filters
        w = glorot_uniform(rng, (kernel, in_channels, filters), fan_in, fan_out, dtype)
        b = np.zeros(filters, dtype=dtype)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeMismatch(
                f"Conv1D expects (n, L, {self.in_channels}), got {x.shape}")
        n, length, _ = x.shape
        k = self.kernel
        if k > length:
            raise KernelTooWide(f"kernel width {k} exceeds input length {length}")
        p = length - k + 1
        # im2col: windows (n, p, k, c) -> matmul with (k*c, filters)
        windows = np.stack([x[:, j:j + p, :] for j in range(k)], axis=2)
        cols = windows.reshape(n * p, k * self.in_channels)
        w_mat = self.params[0].reshape(k * self.in_channels, self.filters)
        out = (cols @ w_mat).reshape(n, p, self.filters) + self.params[1]
        self._cache = (x.shape, cols)
        return _checked(out)

    def backward(self, grad):
        (n, length, c), cols = self._take_cache()
        k, p = self.kernel, length - self.kernel + 1
        g_mat = grad.reshape(n * p, self.filters)
        self.grads[0] = (cols.T @ g_mat).reshape(k, c, self.filters)
        self.grads[1] = g_mat.sum(axis=0)
        w_mat = self.params[0].reshape(k * c, self.filters)
        d_cols = (g_mat @ w_mat.T).reshape(n, p, k, c)
        dx = np.zeros((n, length, c), dtype=grad.dtype)
        for j in range(k):
            dx[:, j:j + p, :] += d_cols[:, :, j, :]
        return _checked(dx)


class MaxPool1D(Layer):
    """(n, L, c) -> (n, floor(L/window), c); remainder positions dropped."""

    def __init__(self, window: int):
        super().__init__()
        if window < 1:
            raise ValueError("pool window must be >= 1")
        self.window = window

    def forward(self, x, train=False):
        if x.ndim != 3:
            raise ShapeMismatch(f"MaxPool1D expects (n, L, c), got {x.shape}")
        n, length, c = x.shape
        p = length // self.window
        trimmed = x[:, :p * self.window, :].reshape(n, p, self.window, c)
        arg = trimmed.argmax(axis=2)
        self._cache = (x.shape, arg)
        return _checked(np.take_along_axis(trimmed, arg[:, :, None, :], axis=2)[:, :, 0, :])

    def backward(self, grad):
        (n, length, c), arg = self._take_cache()
        p = length // self.window
        dx = np.zeros((n, p, self.window, c), dtype=grad.dtype)
        np.put_along_axis(dx, arg[:, :, None, :], grad[:, :, None, :], axis=2)
        out = np.zeros((n, length, c), dtype=grad.dtype)
        out[:, :p * self.window, :] = dx.reshape(n, p * self.window, c)
        return _checked(out)


class Lstm(Layer):
    """Single LSTM layer over (n, T, d); returns the last hidden state (n, u).

    Gate layout in the fused weight matrices is [i | f | g | o] with sigmoid
    on i/f/o and tanh on the candidate g. Zero initial hidden/cell state;
    forget-gate bias starts at 1.0. Backward is full BPTT.
    """

    def __init__(self, input_dim: int, units: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.input_dim, self.units = input_dim, units
        wx = glorot_uniform(rng, (input_dim, 4 * units), input_dim, 4 * units, dtype)
        wh = glorot_uniform(rng, (units, 4 * units), units, 4 * units, dtype)
        b = np.zeros(4 * units, dtype=dtype)
        b[units:2 * units] = 1.0
        self.params = [wx, wh, b]
        self.grads = [np.zeros_like(wx), np.zeros_like(wh), np.zeros_like(b)]

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeMismatch(
                f"Lstm expects (n, T, {self.input_dim}), got {x.shape}")
        n, steps, _ = x.shape
        u = self.units
        wx, wh, b = self.params
        h = np.zeros((n, u), dtype=x.dtype)
        c = np.zeros((n, u), dtype=x.dtype)
        gates_f = np.empty((steps, n, 4 * u), dtype=x.dtype)  # post-activation
        cells = np.empty((steps, n, u), dtype=x.dtype)
        cells_t = np.empty((steps, n, u), dtype=x.dtype)      # tanh(c_t)
        hiddens = np.empty((steps, n, u), dtype=x.dtype)
        for t in range(steps):
            z = x[:, t, :] @ wx + h @ wh + b
            i = _sigmoid(z[:, :u])
            f = _sigmoid(z[:, u:2 * u])
            g = np.tanh(z[:, 2 * u:3 * u])
            o = _sigmoid(z[:, 3 * u:])
            c = f * c + i * g
            ct = np.tanh(c)
            h = o * ct
            gates_f[t, :, :u] = i
            gates_f[t, :, u:2 * u] = f
            gates_f[t, :, 2 * u:3 * u] = g
            gates_f[t, :, 3 * u:] = o
            cells[t] = c
            cells_t[t] = ct
            hiddens[t] = h
        self._cache = (x, gates_f, cells, cells_t, hiddens)
        return _checked(h.copy())

    def backward(self, grad):
        x, gates_f, cells, cells_t, hiddens = self._take_cache()
        n, steps, _ = x.shape
        u = self.units
        wx, wh, _ = self.params
        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros_like(self.params[2])
        dx = np.zeros_like(x)
        dh = grad.astype(x.dtype)  # gradient only enters at the last step
        dc = np.zeros((n, u), dtype=x.dtype)
        for t in range(steps - 1, -1, -1):
            i = gates_f[t, :, :u]
            f = gates_f[t, :, u:2 * u]
            g = gates_f[t, :, 2 * u:3 * u]
            o = gates_f[t, :, 3 * u:]
            ct = cells_t[t]
            c_prev = cells[t - 1] if t > 0 else np.zeros((n, u), dtype=x.dtype)
            h_prev = hiddens[t - 1] if t > 0 else np.zeros((n, u), dtype=x.dtype)

            do = dh * ct
            dc = dc + dh * o * (1.0 - ct * ct)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc = dc * f  # becomes dC_{t-1}

            dz = np.empty((n, 4 * u), dtype=x.dtype)
            dz[:, :u] = di * i * (1.0 - i)
            dz[:, u:2 * u] = df * f * (1.0 - f)
            dz[:, 2 * u:3 * u] = dg * (1.0 - g * g)
            dz[:, 3 * u:] = do * o * (1.0 - o)

            d_wx += x[:, t, :].T @ dz
            d_wh += h_prev.T @ dz
            d_b += dz.sum(axis=0)
            dx[:, t, :] = dz @ wx.T
            dh = dz @ wh.T
        self.grads = [d_wx, d_wh, d_b]
        return _checked(dx)


class Dropout(Layer):
    """Inverted dropout: zero with probability `rate`, scale survivors."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not (0.0 <= rate < 1.0):
            raise ValueError(f"dropout rate must be in [0,1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._cache = ()  # identity path
            return x
        keep = np.asarray(self.rng.random(x.shape) >= self.rate)
        scale = np.asarray(1.0 / (1.0 - self.rate), dtype=x.dtype)
        self._cache = (keep, scale)
        return _checked(x * keep * scale)

    def backward(self, grad):
        cache = self._take_cache()
        if cache == ():
            return grad
        keep, scale = cache
        return _checked(grad * keep * scale)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)
