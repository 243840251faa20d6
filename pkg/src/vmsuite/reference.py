"""Literal per-element reference implementations.

Plain Python loops over time, channel and state with the ``math`` module;
nothing here calls the vectorised kernels. They exist to produce golden
outputs and to act as oracles in tests, so they favour obviousness over
speed. Parameters are passed as the flat name -> array dicts produced by
``blocks.named_arrays`` (SSM tensors as ``prefix + "a_log"`` etc.).
"""

from __future__ import annotations

import math

import numpy as np


def _softplus(z):
    return z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))


def _silu(z):
    return z / (1.0 + math.exp(-z))


def _linear(x, w, b):
    m, k = len(x), len(w)
    n = len(w[0])
    return [[b[j] + sum(x[t][i] * w[i][j] for i in range(k)) for j in range(n)] for t in range(m)]


def _reverse(rows):
    return [list(r) for r in rows[::-1]]


def ssm_scan(pr: dict, prefix: str, x):
    """Selective scan, one token at a time. ``x`` is a list of rows."""
    a_log, bp, cp = pr[prefix + "a_log"], pr[prefix + "b_proj"], pr[prefix + "c_proj"]
    dd, du, db, skip = pr[prefix + "dt_down"], pr[prefix + "dt_up"], pr[prefix + "dt_bias"], pr[prefix + "d_skip"]
    dim, n = a_log.shape
    r = dd.shape[1]
    h = [[0.0] * n for _ in range(dim)]
    out = []
    for xt in x:
        low = [sum(xt[i] * dd[i][k] for i in range(dim)) for k in range(r)]
        delta = [_softplus(db[c] + sum(low[k] * du[k][c] for k in range(r))) for c in range(dim)]
        bt = [sum(xt[i] * bp[i][s] for i in range(dim)) for s in range(n)]
        ct = [sum(xt[i] * cp[i][s] for i in range(dim)) for s in range(n)]
        yt = []
        for c in range(dim):
            acc = 0.0
            for s in range(n):
                a = -math.exp(a_log[c][s])
                abar = math.exp(delta[c] * a)
                bbar = math.expm1(delta[c] * a) / a * bt[s]
                h[c][s] = abar * h[c][s] + bbar * xt[c]
                acc += ct[s] * h[c][s]
            yt.append(acc + skip[c] * xt[c])
        out.append(yt)
    return out


def _conv_silu(x, w, b):
    width = len(w)
    m, dim = len(x), len(x[0]) if x else 0
    out = []
    for t in range(m):
        row = []
        for c in range(dim):
            acc = b[c]
            for j in range(width):
                s = t - (width - 1) + j
                if s >= 0:
                    acc += w[j][c] * x[s][c]
            row.append(_silu(acc))
        out.append(row)
    return out


def block(kind: str, pr: dict, x: np.ndarray) -> np.ndarray:
    x = x.tolist()
    di = pr["out_proj"].shape[0]
    xz = _linear(x, pr["in_proj"], pr["in_bias"])
    if kind == "mamba":
        u = _conv_silu([r[:di] for r in xz], pr["conv_w"], pr["conv_b"])
        y = ssm_scan(pr, "ssm.", u)
        o = [[y[t][c] * _silu(xz[t][di + c]) for c in range(di)] for t in range(len(x))]
    elif kind == "vim":
        xs = [r[:di] for r in xz]
        yf = ssm_scan(pr, "ssm_fwd.", _conv_silu(xs, pr["conv_fwd_w"], pr["conv_fwd_b"]))
        yb = _reverse(ssm_scan(pr, "ssm_bwd.", _conv_silu(_reverse(xs), pr["conv_bwd_w"], pr["conv_bwd_b"])))
        o = [[0.5 * (yf[t][c] * _silu(xz[t][di + c]) + yb[t][c] * _silu(xz[t][di + c]))
              for c in range(di)] for t in range(len(x))]
    elif kind == "dbm":
        h = di // 2
        m = len(x)
        stacked = [xz[t][:h] + xz[m - 1 - t][h:di] for t in range(m)]
        y = ssm_scan(pr, "ssm.", _conv_silu(stacked, pr["conv_w"], pr["conv_b"]))
        o = []
        for t in range(m):
            fwd = [y[t][c] * _silu(xz[t][di + c]) for c in range(h)]
            bwd = [y[m - 1 - t][h + c] * _silu(xz[t][di + h + c]) for c in range(h)]
            o.append(fwd + bwd)
    else:
        raise ValueError(kind)
    return np.array(_linear(o, pr["out_proj"], pr["out_bias"]), dtype=np.float64).reshape(len(x), -1)


def attention(x: np.ndarray, wq, wk, wv, wo) -> np.ndarray:
    """Direct summation over keys for every query."""
    m, d = x.shape
    q, k, v = x @ wq, x @ wk, x @ wv
    out = np.zeros((m, d))
    for i in range(m):
        logits = [sum(q[i, c] * k[j, c] for c in range(d)) / math.sqrt(d) for j in range(m)]
        top = max(logits)
        weights = [math.exp(s - top) for s in logits]
        z = sum(weights)
        for j in range(m):
            out[i] += weights[j] / z * v[j]
    return out @ wo
