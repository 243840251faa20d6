"""Token-mixing blocks built on the selective scan, and the temporal adapter.

All three blocks share the same outer skeleton: a dense input projection of
width 2*E*D produces a scan stream ``x_s`` and a gate stream ``x_g``; the
scan stream goes through a depthwise causal conv, silu and a selective SSM;
the result is multiplied by silu(x_g) and projected back to D.

mamba   one forward scan.
vim     the same ``x_s`` is scanned forward (conv_fwd, ssm_fwd) and, after a
        time reversal, backward (conv_bwd, ssm_bwd); both results are
        re-aligned, gated by the shared gate and averaged.
dbm     ``x_s`` and ``x_g`` are split by channel into forward and backward
        halves. The backward scan half is time-reversed and stacked next to
        the forward half so that ONE selective SSM of width E*D scans both
        directions in a single pass; the backward output is re-reversed and
        each half is gated by its own gate half before the halves are
        concatenated and projected.

With E*D = Di and w the conv width, the weight counts are

    static (in_proj + out_proj)          mamba 3*E*D^2   vim 3*E*D^2   dbm 3*E*D^2
    dynamic (conv + SSM internals)       mamba S         vim 2*S       dbm S

so the vim/dbm ratios against mamba are (100%, 200%) and (100%, 100%).

Divided space-time wiring of the adapter (``T`` temporal module, ``S``
spatial attention, ``g`` the tanh gate):

    vanilla:   z = x + tanh(g) * T(x)         frozen:   z = x + tanh(g) * T(x)
               out = z + S(z)                           out = x + S(z)

In both styles tanh(0) = 0 makes z == x, so the wrapped layer starts out as
the unmodified spatial layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Union

import numpy as np

from .config import BlockConfig
from .errors import OddInnerWidth, ShapeMismatch, ValidationError
from .numeric import concat, ensure_finite, make_rng, reverse_seq, silu, silu_grad
from .ssm import SsmParams, selective_scan, selective_scan_backward

DEFAULT_CONV_WIDTH = 4


def dt_rank_for(d_model: int) -> int:
    return math.ceil(d_model / 16)


# --------------------------------------------------------------------------
# Parameter containers

@dataclass(frozen=True, eq=False)
class MambaBlockParams:
    in_proj: np.ndarray    # [D, 2*Di]  columns: x_s | x_g
    in_bias: np.ndarray    # [2*Di]
    conv_w: np.ndarray     # [w, Di]
    conv_b: np.ndarray     # [Di]
    ssm: SsmParams         # width Di
    out_proj: np.ndarray   # [Di, D]
    out_bias: np.ndarray   # [D]
    kind = "mamba"


@dataclass(frozen=True, eq=False)
class ViMBlockParams:
    in_proj: np.ndarray
    in_bias: np.ndarray
    conv_fwd_w: np.ndarray
    conv_fwd_b: np.ndarray
    conv_bwd_w: np.ndarray
    conv_bwd_b: np.ndarray
    ssm_fwd: SsmParams
    ssm_bwd: SsmParams
    out_proj: np.ndarray
    out_bias: np.ndarray
    kind = "vim"


@dataclass(frozen=True, eq=False)
class DBMBlockParams:
    in_proj: np.ndarray    # [D, 2*Di]  columns: x_s_fwd | x_s_bwd | x_g_fwd | x_g_bwd
    in_bias: np.ndarray
    conv_w: np.ndarray     # [w, Di]  first half forward stream, second half backward
    conv_b: np.ndarray
    ssm: SsmParams         # width Di, shared by both directions
    out_proj: np.ndarray   # [Di, D]  rows: forward half | backward half
    out_bias: np.ndarray
    kind = "dbm"

    def __post_init__(self):
        if self.out_proj.shape[0] % 2:
            raise OddInnerWidth(f"DBM needs an even inner width, got {self.out_proj.shape[0]}")


BlockParams = Union[MambaBlockParams, ViMBlockParams, DBMBlockParams]


def block_dims(p: BlockParams) -> tuple[int, int]:
    """(D, D_inner)."""
    return p.in_proj.shape[0], p.out_proj.shape[0]


def named_arrays(p) -> dict[str, np.ndarray]:
    """Flat ``{"field" or "ssm.field": array}`` view of any params dataclass."""
    out = {}
    for f in fields(p):
        v = getattr(p, f.name)
        if isinstance(v, SsmParams):
            out.update({f"{f.name}.{k}": a for k, a in v.arrays().items()})
        else:
            out[f.name] = v
    return out


def with_arrays(p, arrays: dict[str, np.ndarray]):
    """Rebuild ``p`` with some arrays replaced (keys as in :func:`named_arrays`)."""
    top, nested = {}, {}
    for k, v in arrays.items():
        if "." in k:
            outer, inner = k.split(".", 1)
            nested.setdefault(outer, {})[inner] = v
        else:
            top[k] = v
    for outer, inner in nested.items():
        top[outer] = replace(getattr(p, outer), **inner)
    return replace(p, **top)


_CLASSES = {"mamba": MambaBlockParams, "vim": ViMBlockParams, "dbm": DBMBlockParams}


def block_from_arrays(kind: str, arrays: dict[str, np.ndarray]) -> BlockParams:
    """Inverse of :func:`named_arrays`."""
    if kind not in _CLASSES:
        raise ValidationError(f"unknown block type {kind!r}")
    top: dict = {}
    nested: dict[str, dict] = {}
    for k, v in arrays.items():
        if "." in k:
            outer, inner = k.split(".", 1)
            nested.setdefault(outer, {})[inner] = v
        else:
            top[k] = v
    top.update({outer: SsmParams(**inner) for outer, inner in nested.items()})
    try:
        return _CLASSES[kind](**top)
    except TypeError as exc:
        raise ValidationError(f"bad {kind} parameter set: {exc}") from None


def params_astype(p, dtype):
    return with_arrays(p, {k: v.astype(dtype) for k, v in named_arrays(p).items()})


def _init_dense(rng, d_in, d_out):
    return rng.normal(0.0, d_in ** -0.5, (d_in, d_out)), np.zeros(d_out)


def _init_conv(rng, width, channels):
    bound = width ** -0.5
    return rng.uniform(-bound, bound, (width, channels)), rng.uniform(-bound, bound, channels)


def init_block(kind: str, d_model: int, expand: int, d_state: int = 16,
               conv_width: int = DEFAULT_CONV_WIDTH, seed: int = 0) -> BlockParams:
    if d_model < 1 or expand < 1 or d_state < 1 or conv_width < 1:
        raise ValidationError("D, E, N and conv_width must all be >= 1")
    rng = make_rng(seed)
    di = expand * d_model
    r = dt_rank_for(d_model)
    if kind == "dbm" and di % 2:
        raise OddInnerWidth(f"DBM needs E*D even, got E={expand}, D={d_model}")
    in_proj, in_bias = _init_dense(rng, d_model, 2 * di)
    if kind == "mamba":
        conv_w, conv_b = _init_conv(rng, conv_width, di)
        ssm = SsmParams.init(di, d_state, r, rng)
        out_proj, out_bias = _init_dense(rng, di, d_model)
        return MambaBlockParams(in_proj, in_bias, conv_w, conv_b, ssm, out_proj, out_bias)
    if kind == "vim":
        cfw, cfb = _init_conv(rng, conv_width, di)
        cbw, cbb = _init_conv(rng, conv_width, di)
        ssm_f = SsmParams.init(di, d_state, r, rng)
        ssm_b = SsmParams.init(di, d_state, r, rng)
        out_proj, out_bias = _init_dense(rng, di, d_model)
        return ViMBlockParams(in_proj, in_bias, cfw, cfb, cbw, cbb, ssm_f, ssm_b, out_proj, out_bias)
    if kind == "dbm":
        conv_w, conv_b = _init_conv(rng, conv_width, di)
        ssm = SsmParams.init(di, d_state, r, rng)
        out_proj, out_bias = _init_dense(rng, di, d_model)
        return DBMBlockParams(in_proj, in_bias, conv_w, conv_b, ssm, out_proj, out_bias)
    raise ValidationError(f"unknown block type {kind!r}")


def build_block(cfg: BlockConfig) -> BlockParams:
    return init_block(cfg.type, cfg.D, cfg.E, cfg.N, cfg.conv_width, cfg.seed)


# --------------------------------------------------------------------------
# Shared pieces

def causal_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Depthwise causal conv: y[t] = b + sum_j w[j] * x[t - (width-1) + j]."""
    width = w.shape[0]
    m = x.shape[0]
    xp = np.concatenate([np.zeros((width - 1, x.shape[1]), dtype=x.dtype), x])
    y = np.broadcast_to(b, x.shape).copy()
    for j in range(width):
        y += w[j] * xp[j:j + m]
    return y


def causal_conv_backward(x, w, dy):
    width = w.shape[0]
    m = x.shape[0]
    xp = np.concatenate([np.zeros((width - 1, x.shape[1]), dtype=x.dtype), x])
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for j in range(width):
        dw[j] = (dy * xp[j:j + m]).sum(axis=0)
        dxp[j:j + m] += dy * w[j]
    return dxp[width - 1:], dw, dy.sum(axis=0)


def _branch_forward(xs, conv_w, conv_b, ssm):
    """conv -> silu -> selective scan. Returns (y, cache)."""
    cv = causal_conv(xs, conv_w, conv_b)
    u = silu(cv)
    return selective_scan(ssm, u), (xs, cv, u)


def _branch_backward(cache, conv_w, ssm, dy):
    xs, cv, u = cache
    du, dssm = selective_scan_backward(ssm, u, dy)
    dxs, dcw, dcb = causal_conv_backward(xs, conv_w, du * silu_grad(cv))
    return dxs, dcw, dcb, dssm


def _check_x(p: BlockParams, x: np.ndarray) -> None:
    d, _ = block_dims(p)
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeMismatch(f"{p.kind} block expects [M, {d}], got {x.shape}")


# --------------------------------------------------------------------------
# Mamba

def _mamba_forward(p: MambaBlockParams, x):
    di = p.out_proj.shape[0]
    xz = x @ p.in_proj + p.in_bias
    xs, xg = xz[:, :di], xz[:, di:]
    y, bcache = _branch_forward(xs, p.conv_w, p.conv_b, p.ssm)
    gate = silu(xg)
    o = y * gate
    return o @ p.out_proj + p.out_bias, (xg, y, gate, o, bcache)


def mamba_block_forward(p: MambaBlockParams, x: np.ndarray) -> np.ndarray:
    _check_x(p, x)
    return ensure_finite(_mamba_forward(p, x)[0], "mamba block")


def mamba_block_backward(p: MambaBlockParams, x, dout):
    _, (xg, y, gate, o, bcache) = _mamba_forward(p, x)
    do = dout @ p.out_proj.T
    dxg = do * y * silu_grad(xg)
    dxs, dcw, dcb, dssm = _branch_backward(bcache, p.conv_w, p.ssm, do * gate)
    dxz = concat([dxs, dxg], axis=1)
    grads = MambaBlockParams(
        in_proj=x.T @ dxz, in_bias=dxz.sum(axis=0), conv_w=dcw, conv_b=dcb, ssm=dssm,
        out_proj=o.T @ dout, out_bias=dout.sum(axis=0))
    return dxz @ p.in_proj.T, grads


# --------------------------------------------------------------------------
# ViM

def _vim_forward(p: ViMBlockParams, x):
    di = p.out_proj.shape[0]
    xz = x @ p.in_proj + p.in_bias
    xs, xg = xz[:, :di], xz[:, di:]
    y_f, cache_f = _branch_forward(xs, p.conv_fwd_w, p.conv_fwd_b, p.ssm_fwd)
    y_b_rev, cache_b = _branch_forward(reverse_seq(xs), p.conv_bwd_w, p.conv_bwd_b, p.ssm_bwd)
    y_b = reverse_seq(y_b_rev)
    gate = silu(xg)
    o = 0.5 * (y_f * gate + y_b * gate)
    return o @ p.out_proj + p.out_bias, (xg, y_f, y_b, gate, o, cache_f, cache_b)


def vim_block_forward(p: ViMBlockParams, x: np.ndarray) -> np.ndarray:
    _check_x(p, x)
    return ensure_finite(_vim_forward(p, x)[0], "vim block")


def vim_block_backward(p: ViMBlockParams, x, dout):
    _, (xg, y_f, y_b, gate, o, cache_f, cache_b) = _vim_forward(p, x)
    do = dout @ p.out_proj.T
    dxg = 0.5 * do * (y_f + y_b) * silu_grad(xg)
    dy = 0.5 * do * gate
    dxs_f, dcfw, dcfb, dssm_f = _branch_backward(cache_f, p.conv_fwd_w, p.ssm_fwd, dy)
    dxs_br, dcbw, dcbb, dssm_b = _branch_backward(cache_b, p.conv_bwd_w, p.ssm_bwd, reverse_seq(dy))
    dxz = concat([dxs_f + reverse_seq(dxs_br), dxg], axis=1)
    grads = ViMBlockParams(
        in_proj=x.T @ dxz, in_bias=dxz.sum(axis=0),
        conv_fwd_w=dcfw, conv_fwd_b=dcfb, conv_bwd_w=dcbw, conv_bwd_b=dcbb,
        ssm_fwd=dssm_f, ssm_bwd=dssm_b,
        out_proj=o.T @ dout, out_bias=dout.sum(axis=0))
    return dxz @ p.in_proj.T, grads


# --------------------------------------------------------------------------
# DBM

def _dbm_forward(p: DBMBlockParams, x):
    di = p.out_proj.shape[0]
    h = di // 2
    xz = x @ p.in_proj + p.in_bias
    xs_f, xs_b, xg_f, xg_b = xz[:, :h], xz[:, h:di], xz[:, di:di + h], xz[:, di + h:]
    stacked = concat([xs_f, reverse_seq(xs_b)], axis=1)
    y, bcache = _branch_forward(stacked, p.conv_w, p.conv_b, p.ssm)
    y_f, y_b = y[:, :h], reverse_seq(y[:, h:])
    gate_f, gate_b = silu(xg_f), silu(xg_b)
    o = concat([y_f * gate_f, y_b * gate_b], axis=1)
    cache = (xg_f, xg_b, y_f, y_b, gate_f, gate_b, o, bcache)
    return o @ p.out_proj + p.out_bias, cache


def dbm_block_forward(p: DBMBlockParams, x: np.ndarray) -> np.ndarray:
    _check_x(p, x)
    return ensure_finite(_dbm_forward(p, x)[0], "dbm block")


def dbm_block_backward(p: DBMBlockParams, x, dout):
    h = p.out_proj.shape[0] // 2
    _, (xg_f, xg_b, y_f, y_b, gate_f, gate_b, o, bcache) = _dbm_forward(p, x)
    do = dout @ p.out_proj.T
    do_f, do_b = do[:, :h], do[:, h:]
    dxg_f = do_f * y_f * silu_grad(xg_f)
    dxg_b = do_b * y_b * silu_grad(xg_b)
    dy = concat([do_f * gate_f, reverse_seq(do_b * gate_b)], axis=1)
    ds, dcw, dcb, dssm = _branch_backward(bcache, p.conv_w, p.ssm, dy)
    dxz = concat([ds[:, :h], reverse_seq(ds[:, h:]), dxg_f, dxg_b], axis=1)
    grads = DBMBlockParams(
        in_proj=x.T @ dxz, in_bias=dxz.sum(axis=0), conv_w=dcw, conv_b=dcb, ssm=dssm,
        out_proj=o.T @ dout, out_bias=dout.sum(axis=0))
    return dxz @ p.in_proj.T, grads


# --------------------------------------------------------------------------
# Dispatch

_FORWARD = {"mamba": mamba_block_forward, "vim": vim_block_forward, "dbm": dbm_block_forward}
_BACKWARD = {"mamba": mamba_block_backward, "vim": vim_block_backward, "dbm": dbm_block_backward}
BLOCK_KINDS = tuple(_FORWARD)


def block_forward(p: BlockParams, x: np.ndarray) -> np.ndarray:
    return _FORWARD[p.kind](p, x)


def block_backward(p: BlockParams, x: np.ndarray, dout: np.ndarray):
    """Gradients of <dout, block_forward(p, x)>: ``(dx, grads)`` with grads shaped like ``p``."""
    _check_x(p, x)
    if dout.shape != x.shape:
        raise ShapeMismatch(f"dout {dout.shape} vs x {x.shape}")
    return _BACKWARD[p.kind](p, x, dout)


def _swap_halves(a: np.ndarray, axis: int) -> np.ndarray:
    h = a.shape[axis] // 2
    lo, hi = np.split(a, [h], axis=axis)
    return np.concatenate([hi, lo], axis=axis)


def swap_directions(p: BlockParams) -> BlockParams:
    """Exchange the roles of the forward and backward branches.

    For vim and dbm, ``block_forward(swap_directions(p), reverse_seq(x))``
    equals ``reverse_seq(block_forward(p, x))``.
    """
    if p.kind == "vim":
        return replace(p, conv_fwd_w=p.conv_bwd_w, conv_fwd_b=p.conv_bwd_b,
                       conv_bwd_w=p.conv_fwd_w, conv_bwd_b=p.conv_fwd_b,
                       ssm_fwd=p.ssm_bwd, ssm_bwd=p.ssm_fwd)
    if p.kind == "dbm":
        di = p.out_proj.shape[0]
        s_cols, g_cols = p.in_proj[:, :di], p.in_proj[:, di:]
        s_bias, g_bias = p.in_bias[:di], p.in_bias[di:]
        s = p.ssm
        ssm = SsmParams(
            a_log=_swap_halves(s.a_log, 0), b_proj=_swap_halves(s.b_proj, 0),
            c_proj=_swap_halves(s.c_proj, 0), dt_down=_swap_halves(s.dt_down, 0),
            dt_up=_swap_halves(s.dt_up, 1), dt_bias=_swap_halves(s.dt_bias, 0),
            d_skip=_swap_halves(s.d_skip, 0))
        return replace(
            p,
            in_proj=concat([_swap_halves(s_cols, 1), _swap_halves(g_cols, 1)], axis=1),
            in_bias=concat([_swap_halves(s_bias, 0), _swap_halves(g_bias, 0)]),
            conv_w=_swap_halves(p.conv_w, 1), conv_b=_swap_halves(p.conv_b, 0),
            ssm=ssm, out_proj=_swap_halves(p.out_proj, 0))
    raise ValidationError(f"{p.kind} block has no backward branch")


# --------------------------------------------------------------------------
# Parameter accounting

_ROLE = {
    "in_proj": "proj", "out_proj": "proj",
    "in_bias": "bias", "out_bias": "bias",
    "conv_w": "conv", "conv_fwd_w": "conv", "conv_bwd_w": "conv",
    "conv_b": "bias", "conv_fwd_b": "bias", "conv_bwd_b": "bias",
    "a_log": "state", "b_proj": "state", "c_proj": "state", "d_skip": "state",
    "dt_down": "dt", "dt_up": "dt", "dt_bias": "bias",
}


@dataclass(frozen=True)
class ParamCount:
    """Weight counts split the way the block comparison table splits them.

    ``static``  dense in/out projection weights
    ``dynamic`` everything inside the scanning branches: conv kernels,
                delta projections and the state-indexed tensors
                (a_log, B/C projections, skip)
    ``bias``    every bias vector, kept out of both columns
    ``by_role`` the same numbers at finer grain
                (proj, conv, dt, state, bias)
    """

    static: int
    dynamic: int
    bias: int
    by_role: dict = field(default_factory=dict)

    @property
    def matrix_budget(self) -> int:
        """Projection, delta-projection and conv weights (no state-indexed tensors)."""
        return self.by_role.get("proj", 0) + self.by_role.get("dt", 0) + self.by_role.get("conv", 0)

    @property
    def total(self) -> int:
        return self.static + self.dynamic + self.bias


def count_params(p: BlockParams) -> ParamCount:
    roles: dict[str, int] = {}
    for name, arr in named_arrays(p).items():
        role = _ROLE[name.rsplit(".", 1)[-1]]
        roles[role] = roles.get(role, 0) + int(arr.size)
    static = roles.get("proj", 0)
    dynamic = roles.get("conv", 0) + roles.get("dt", 0) + roles.get("state", 0)
    return ParamCount(static, dynamic, roles.get("bias", 0), roles)


# --------------------------------------------------------------------------
# Temporal adapter

ADAPTER_STYLES = ("vanilla", "frozen")


@dataclass(frozen=True, eq=False)
class AdapterConfig:
    style: str
    inner: BlockParams
    gate: float = 0.0

    def __post_init__(self):
        if self.style not in ADAPTER_STYLES:
            raise ValidationError(f"adapter style must be one of {ADAPTER_STYLES}")


def _check_tokens(cfg: AdapterConfig, tokens: np.ndarray) -> None:
    d, _ = block_dims(cfg.inner)
    if tokens.ndim != 3 or tokens.shape[2] != d:
        raise ShapeMismatch(f"tokens must be [T, P, {d}], got {tokens.shape}")


def temporal_mix(block: BlockParams, tokens: np.ndarray) -> np.ndarray:
    """Run ``block`` along the time axis independently for every spatial slot."""
    out = np.empty_like(tokens)
    for p in range(tokens.shape[1]):
        out[:, p] = block_forward(block, np.ascontiguousarray(tokens[:, p]))
    return out


def adapter_forward(cfg: AdapterConfig, tokens: np.ndarray) -> np.ndarray:
    """tokens + tanh(g) * temporal_mix(tokens); exactly ``tokens`` when g == 0."""
    _check_tokens(cfg, tokens)
    return tokens + math.tanh(cfg.gate) * temporal_mix(cfg.inner, tokens)


def space_time_block(cfg: AdapterConfig, tokens: np.ndarray,
                     spatial: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Divided space-time layer: gated temporal adapter then ``spatial``.

    ``spatial`` maps [T, P, D] to [T, P, D] (mixing within each frame).
    """
    z = adapter_forward(cfg, tokens)
    if cfg.style == "vanilla":
        return z + spatial(z)
    return tokens + spatial(z)
