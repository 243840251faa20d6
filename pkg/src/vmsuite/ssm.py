"""Diagonal state-space kernels.

Continuous system  h' = A h + B x,  y = C h  with diagonal A per channel,
discretized by zero-order hold:

    a_bar = exp(delta * a)
    b_bar = (exp(delta * a) - 1) / a * b        (-> delta * b as a -> 0)

The recurrent form is  h_t = a_bar_t * h_{t-1} + b_bar_t * x_t,
y_t = <c_t, h_t>. For time-invariant parameters it equals a causal
convolution with K[t] = <c, a_bar^t * b_bar>.

The selective scan makes delta, B and C functions of the current input
token (Mamba S6 style) and adds a learned per-channel skip.

Shapes: M sequence length, D channels (D_inner), N state size, R rank of
the delta projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import NonNegativeA, NonPositiveDelta, ShapeMismatch, TimeVaryingParams, ValidationError
from .numeric import check_shape, ensure_finite, sigmoid, softplus

SMALL_DA = 1e-8
_SERIES_DA = 0.05


@dataclass(frozen=True, eq=False)
class SsmParams:
    """Learnable parameters of one selective SSM over D channels.

    ``a_log``  [D, N]   A = -exp(a_log), so A < 0 always
    ``b_proj`` [D, N]   B_t = x_t @ b_proj
    ``c_proj`` [D, N]   C_t = x_t @ c_proj
    ``dt_down`` [D, R], ``dt_up`` [R, D], ``dt_bias`` [D]
                        delta_t = softplus(x_t @ dt_down @ dt_up + dt_bias)
    ``d_skip`` [D]      y_t += d_skip * x_t
    """

    a_log: np.ndarray
    b_proj: np.ndarray
    c_proj: np.ndarray
    dt_down: np.ndarray
    dt_up: np.ndarray
    dt_bias: np.ndarray
    d_skip: np.ndarray

    def __post_init__(self):
        d, n = self.a_log.shape
        r = self.dt_down.shape[1] if self.dt_down.ndim == 2 else -1
        if d < 1 or n < 1:
            raise ValidationError("SsmParams needs D >= 1 and N >= 1")
        for name, shape in (("b_proj", (d, n)), ("c_proj", (d, n)), ("dt_down", (d, r)),
                            ("dt_up", (r, d)), ("dt_bias", (d,)), ("d_skip", (d,))):
            check_shape(getattr(self, name), shape, name)

    @property
    def d_inner(self) -> int:
        return self.a_log.shape[0]

    @property
    def d_state(self) -> int:
        return self.a_log.shape[1]

    @property
    def dt_rank(self) -> int:
        return self.dt_down.shape[1]

    @property
    def a(self) -> np.ndarray:
        return -np.exp(self.a_log)

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def astype(self, dtype) -> "SsmParams":
        return SsmParams(**{k: v.astype(dtype) for k, v in self.arrays().items()})

    @classmethod
    def init(cls, d_inner: int, d_state: int, dt_rank: int, rng: np.random.Generator,
             dt_min: float = 1e-3, dt_max: float = 0.1) -> "SsmParams":
        """Mamba-style init: S4D-real A, log-uniform step size, unit skip."""
        a_log = np.tile(np.log(np.arange(1, d_state + 1, dtype=np.float64)), (d_inner, 1))
        scale = d_inner ** -0.5
        b_proj = rng.normal(0.0, scale, (d_inner, d_state))
        c_proj = rng.normal(0.0, scale, (d_inner, d_state))
        dt_down = rng.normal(0.0, scale, (d_inner, dt_rank))
        dt_up = rng.uniform(-dt_rank ** -0.5, dt_rank ** -0.5, (dt_rank, d_inner))
        dt = np.exp(rng.uniform(math.log(dt_min), math.log(dt_max), d_inner))
        dt_bias = dt + np.log(-np.expm1(-dt))  # inverse softplus
        return cls(a_log, b_proj, c_proj, dt_down, dt_up, dt_bias, np.ones(d_inner))


@dataclass(frozen=True, eq=False)
class DiscreteSsm:
    """Per-step discretized parameters, each [M, D, N]."""

    a_bar: np.ndarray
    b_bar: np.ndarray
    c: np.ndarray

    @property
    def length(self) -> int:
        return self.a_bar.shape[0]


# --------------------------------------------------------------------------
# Discretization

def _zoh(a: np.ndarray, delta: np.ndarray):
    """Return (a_bar, g) with g = (exp(delta*a) - 1)/a, so b_bar = g * b."""
    dl = delta[..., None]
    da = dl * a
    a_bar = np.exp(da)
    small = np.abs(da) < SMALL_DA
    safe_a = np.where(small, -1.0, a)
    g = np.where(small, dl * (1.0 + 0.5 * da), np.expm1(da) / safe_a)
    return a_bar, g


def _zoh_grad_a(a: np.ndarray, delta: np.ndarray, a_bar: np.ndarray) -> np.ndarray:
    """d g / d a for g = expm1(delta*a)/a, elementwise."""
    dl = delta[..., None]
    z = dl * a
    small = np.abs(z) < _SERIES_DA
    safe_z = np.where(small, 1.0, z)
    # phi'(z) for phi(z) = expm1(z)/z, closed form away from 0 and series near it
    closed = (z * a_bar - np.expm1(z)) / (safe_z * safe_z)
    series = np.zeros_like(z)
    zk = np.ones_like(z)
    fact = 1.0
    for k in range(1, 10):
        fact *= k + 1
        series = series + k * zk / fact
        zk = zk * z
    return dl * dl * np.where(small, series, closed)


def discretize_zoh(a: np.ndarray, b: np.ndarray, delta: np.ndarray,
                   c: np.ndarray | None = None) -> DiscreteSsm:
    """Zero-order-hold discretization of a diagonal SSM.

    ``a`` is [D, N] and strictly negative, ``delta`` is [M, D] and strictly
    positive. ``b`` and ``c`` are either [D, N] (time-invariant) or
    [M, D, N]. ``c`` defaults to ones, i.e. the output sums the state.
    """
    if a.ndim != 2 or delta.ndim != 2 or delta.shape[1] != a.shape[0]:
        raise ShapeMismatch(f"discretize_zoh: a {a.shape}, delta {delta.shape}")
    if np.any(delta <= 0):
        raise NonPositiveDelta("delta must be strictly positive")
    if np.any(a >= 0):
        raise NonNegativeA("a must be strictly negative")
    m = delta.shape[0]
    full = (m,) + a.shape

    def per_step(arr, what):
        if arr.shape == a.shape:
            return np.broadcast_to(arr, full)
        check_shape(arr, full, what)
        return arr

    b = per_step(b, "b")
    c = per_step(np.ones_like(a) if c is None else c, "c")
    a_bar, g = _zoh(a, delta)
    return DiscreteSsm(a_bar=a_bar, b_bar=g * b, c=c)


# --------------------------------------------------------------------------
# Recurrent and convolutional forms

def scan_recurrent(d: DiscreteSsm, x: np.ndarray, h0: np.ndarray | None = None):
    """Sequential scan. Returns (y [M, D], h_M [D, N])."""
    m, dim, n = d.a_bar.shape
    check_shape(x, (m, dim), "x")
    for name in ("b_bar", "c"):
        check_shape(getattr(d, name), (m, dim, n), name)
    h = np.zeros((dim, n), dtype=x.dtype) if h0 is None else np.array(h0, dtype=x.dtype)
    check_shape(h, (dim, n), "h0")
    y = np.empty((m, dim), dtype=x.dtype)
    for t in range(m):
        h = d.a_bar[t] * h + d.b_bar[t] * x[t, :, None]
        y[t] = (d.c[t] * h).sum(axis=-1)
    return y, h


def kernel_conv(d: DiscreteSsm, length: int) -> np.ndarray:
    """Convolution kernel K [length, D] of a time-invariant system."""
    if d.length < 1:
        raise ShapeMismatch("need at least one discretized step")
    a0, b0, c0 = d.a_bar[0], d.b_bar[0], d.c[0]
    for arr, first in ((d.a_bar, a0), (d.b_bar, b0), (d.c, c0)):
        if np.any(arr != first):
            raise TimeVaryingParams("kernel form requires time-invariant a_bar, b_bar, c")
    k = np.empty((length, a0.shape[0]), dtype=a0.dtype)
    p = np.array(b0)
    for t in range(length):
        k[t] = (c0 * p).sum(axis=-1)
        p = a0 * p
    return k


def conv_apply(kernel: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Causal per-channel convolution y[t] = sum_{s<=t} K[t-s] * x[s]."""
    m, dim = x.shape
    if kernel.ndim != 2 or kernel.shape[1] != dim or kernel.shape[0] < m:
        raise ShapeMismatch(f"kernel {kernel.shape} cannot cover x {x.shape}")
    y = np.empty_like(x)
    for ch in range(dim):
        y[:, ch] = np.convolve(x[:, ch], kernel[:m, ch])[:m]
    return y


# --------------------------------------------------------------------------
# Selective scan

def _project(p: SsmParams, x: np.ndarray):
    r = x @ p.dt_down
    z = r @ p.dt_up + p.dt_bias
    return r, z, softplus(z), x @ p.b_proj, x @ p.c_proj


def _check_input(p: SsmParams, x: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[1] != p.d_inner:
        raise ShapeMismatch(f"x must be [M, {p.d_inner}], got {x.shape}")


def selective_scan_with_state(p: SsmParams, x: np.ndarray, h0: np.ndarray | None = None):
    """Selective scan returning (y [M, D], final state [D, N])."""
    _check_input(p, x)
    m = x.shape[0]
    _, _, delta, bmat, cmat = _project(p, x)
    full = (m, p.d_inner, p.d_state)
    d = discretize_zoh(p.a, np.broadcast_to(bmat[:, None, :], full), delta,
                       np.broadcast_to(cmat[:, None, :], full))
    y, h = scan_recurrent(d, x, h0)
    return ensure_finite(y + p.d_skip * x, "selective_scan"), h


def selective_scan(p: SsmParams, x: np.ndarray, h0: np.ndarray | None = None) -> np.ndarray:
    return selective_scan_with_state(p, x, h0)[0]


def _assoc_scan(a: np.ndarray, b: np.ndarray, h0: np.ndarray) -> np.ndarray:
    """All prefix states of h_t = a_t h_{t-1} + b_t by log-step doubling.

    Element t holds the affine map (A, B) of steps 0..t; combining an earlier
    segment (A1, B1) with a later one (A2, B2) gives (A2 A1, A2 B1 + B2).
    """
    acc_a = a.copy()
    acc_b = b.copy()
    length = a.shape[0]
    off = 1
    while off < length:
        acc_b[off:] = acc_a[off:] * acc_b[:-off] + acc_b[off:]
        acc_a[off:] = acc_a[off:] * acc_a[:-off]
        off *= 2
    return acc_a * h0 + acc_b


def selective_scan_chunked(p: SsmParams, x: np.ndarray, chunk: int,
                           h0: np.ndarray | None = None) -> np.ndarray:
    """Selective scan in chunks with a carried state.

    Within a chunk the recurrence is evaluated as a vectorized associative
    scan; only the chunk loop is sequential. ``chunk >= M`` falls through to
    the plain scan.
    """
    if chunk < 1:
        raise ValidationError("chunk must be >= 1")
    _check_input(p, x)
    m = x.shape[0]
    if chunk >= m:
        return selective_scan(p, x, h0)
    h = np.zeros((p.d_inner, p.d_state), dtype=x.dtype) if h0 is None else np.asarray(h0, x.dtype)
    check_shape(h, (p.d_inner, p.d_state), "h0")
    a = p.a
    y = np.empty_like(x)
    for s in range(0, m, chunk):
        u = x[s:s + chunk]
        _, _, delta, bmat, cmat = _project(p, u)
        if np.any(delta <= 0):
            raise NonPositiveDelta("delta underflowed to zero")
        a_bar, g = _zoh(a, delta)
        b_bar = g * bmat[:, None, :]
        hs = _assoc_scan(a_bar, b_bar * u[:, :, None], h)
        y[s:s + len(u)] = np.einsum("ldn,ln->ld", hs, cmat) + p.d_skip * u
        h = hs[-1]
    return ensure_finite(y, "selective_scan_chunked")


def selective_scan_backward(p: SsmParams, x: np.ndarray, dy: np.ndarray,
                            h0: np.ndarray | None = None):
    """Reverse-mode gradients of <dy, selective_scan(p, x, h0)>.

    Returns ``(dx, grads)`` where ``grads`` is an :class:`SsmParams` holding
    the gradient of every parameter tensor.
    """
    _check_input(p, x)
    check_shape(dy, x.shape, "dy")
    m, dim, n = x.shape[0], p.d_inner, p.d_state
    r, z, delta, bmat, cmat = _project(p, x)
    a = p.a
    a_bar, g = _zoh(a, delta)
    b_bar = g * bmat[:, None, :]

    hs = np.empty((m + 1, dim, n))
    hs[0] = 0.0 if h0 is None else h0
    for t in range(m):
        hs[t + 1] = a_bar[t] * hs[t] + b_bar[t] * x[t, :, None]

    dx = dy * p.d_skip
    d_skip = (dy * x).sum(axis=0)
    dc = np.einsum("td,tdn->tn", dy, hs[1:])
    dh_out = dy[:, :, None] * cmat[:, None, :]

    dh = np.empty((m, dim, n))
    carry = np.zeros((dim, n))
    for t in range(m - 1, -1, -1):
        carry = dh_out[t] + carry
        dh[t] = carry
        carry = carry * a_bar[t]

    da_bar = dh * hs[:-1]
    db_bar = dh * x[:, :, None]
    dx += (dh * b_bar).sum(axis=-1)
    db = (db_bar * g).sum(axis=1)
    dg = db_bar * bmat[:, None, :]

    ddelta = (da_bar * a_bar * a).sum(axis=-1) + (dg * a_bar).sum(axis=-1)
    da = (da_bar * a_bar * delta[..., None]).sum(axis=0) \
        + (dg * _zoh_grad_a(a, delta, a_bar)).sum(axis=0)
    dz = ddelta * sigmoid(z)
    dr = dz @ p.dt_up.T

    dx += dr @ p.dt_down.T + db @ p.b_proj.T + dc @ p.c_proj.T
    grads = SsmParams(
        a_log=da * a,
        b_proj=x.T @ db,
        c_proj=x.T @ dc,
        dt_down=x.T @ dr,
        dt_up=r.T @ dz,
        dt_bias=dz.sum(axis=0),
        d_skip=d_skip,
    )
    return dx, grads
