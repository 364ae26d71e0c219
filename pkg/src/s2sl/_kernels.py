"""Compiled mini-batch Adam loop for the one-hidden-layer network.

Same arithmetic as the numpy path in :mod:`s2sl.nnet` written as explicit
loops, so tiny batches don't pay per-call numpy overhead. Summation order
differs from BLAS, so results agree with the numpy engine to rounding, not
bitwise; each engine is deterministic on its own.
"""

import math

import numpy as np
from numba import njit

LOG_CLIP = 1e-12


@njit(cache=True, fastmath={"reassoc", "contract"})
def _forward_rows(x, w1, b1, w2, b2, softmax, pre, hid, y):
    n, d = x.shape
    h = w1.shape[0]
    o = w2.shape[0]
    for i in range(n):
        for k in range(h):
            s = b1[k]
            for j in range(d):
                s += w1[k, j] * x[i, j]
            pre[i, k] = s
            hid[i, k] = s if s > 0.0 else 0.0
        for c in range(o):
            s = b2[c]
            for k in range(h):
                s += w2[c, k] * hid[i, k]
            y[i, c] = s
        if softmax:
            zmax = y[i, 0]
            for c in range(1, o):
                if y[i, c] > zmax:
                    zmax = y[i, c]
            tot = 0.0
            for c in range(o):
                y[i, c] = math.exp(y[i, c] - zmax)
                tot += y[i, c]
            for c in range(o):
                y[i, c] /= tot
        else:
            for c in range(o):
                z = y[i, c]
                if z >= 0.0:
                    y[i, c] = 1.0 / (1.0 + math.exp(-z))
                else:
                    e = math.exp(z)
                    y[i, c] = e / (1.0 + e)


@njit(cache=True, fastmath={"reassoc", "contract"})
def _loss(y, t, softmax):
    n, o = y.shape
    total = 0.0
    for i in range(n):
        for c in range(o):
            p = y[i, c]
            if softmax:
                if p < LOG_CLIP:
                    p = LOG_CLIP
                total -= t[i, c] * math.log(p)
            else:
                if p < LOG_CLIP:
                    p = LOG_CLIP
                elif p > 1.0 - LOG_CLIP:
                    p = 1.0 - LOG_CLIP
                total -= t[i, c] * math.log(p) + (1.0 - t[i, c]) * math.log(1.0 - p)
    if softmax:
        return total / n
    return total / (n * o)


@njit(cache=True, fastmath={"reassoc", "contract"})
def train_loop(x, t, flat, shapes, orders, batch_size, softmax, lr, beta1, beta2, eps, history):
    """Run ``orders.shape[0]`` epochs in place on ``flat``.

    ``shapes`` is (input_dim, hidden, output_dim); ``orders[e]`` is the row
    permutation for epoch ``e``. Returns ``(0, 0)`` on success or the
    1-based ``(epoch, batch)`` where an output went non-finite.
    """
    d, h, o = shapes[0], shapes[1], shapes[2]
    n = x.shape[0]
    s1 = h * d
    s2 = s1 + h
    s3 = s2 + o * h
    w1 = flat[:s1].reshape((h, d))
    b1 = flat[s1:s2]
    w2 = flat[s2:s3].reshape((o, h))
    b2 = flat[s3:]
    grad = np.zeros_like(flat)
    gw1 = grad[:s1].reshape((h, d))
    gb1 = grad[s1:s2]
    gw2 = grad[s2:s3].reshape((o, h))
    gb2 = grad[s3:]
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    bs = min(batch_size, n)
    xb = np.empty((bs, d))
    tb = np.empty((bs, o))
    pre = np.empty((bs, h))
    hid = np.empty((bs, h))
    y = np.empty((bs, o))
    dz = np.empty(o)
    dh = np.empty(h)
    fpre = np.empty((n, h))
    fhid = np.empty((n, h))
    fy = np.empty((n, o))
    step = 0
    for epoch in range(orders.shape[0]):
        order = orders[epoch]
        batch = 0
        for start in range(0, n, bs):
            stop = min(start + bs, n)
            rows = stop - start
            batch += 1
            for r in range(rows):
                src = order[start + r]
                for j in range(d):
                    xb[r, j] = x[src, j]
                for c in range(o):
                    tb[r, c] = t[src, c]
            _forward_rows(xb[:rows], w1, b1, w2, b2, softmax, pre, hid, y)
            scale = 1.0 / rows if softmax else 1.0 / (rows * o)
            grad[:] = 0.0
            for r in range(rows):
                for c in range(o):
                    if not math.isfinite(y[r, c]):
                        return epoch + 1, batch
                    dz[c] = (y[r, c] - tb[r, c]) * scale
                    gb2[c] += dz[c]
                    for k in range(h):
                        gw2[c, k] += dz[c] * hid[r, k]
                for k in range(h):
                    if pre[r, k] > 0.0:
                        s = 0.0
                        for c in range(o):
                            s += dz[c] * w2[c, k]
                        dh[k] = s
                    else:
                        dh[k] = 0.0
                    gb1[k] += dh[k]
                    for j in range(d):
                        gw1[k, j] += dh[k] * xb[r, j]
            step += 1
            c1 = 1.0 - beta1**step
            c2 = 1.0 - beta2**step
            for p in range(flat.shape[0]):
                g = grad[p]
                m[p] = beta1 * m[p] + (1.0 - beta1) * g
                v[p] = beta2 * v[p] + (1.0 - beta2) * g * g
                flat[p] -= lr * (m[p] / c1) / (math.sqrt(v[p] / c2) + eps)
        _forward_rows(x, w1, b1, w2, b2, softmax, fpre, fhid, fy)
        history[epoch] = _loss(fy, t, softmax)
    return 0, 0
