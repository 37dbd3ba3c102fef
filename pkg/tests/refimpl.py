"""Independent brute-force reference implementations used as test oracles.

Everything here is deliberately naive (nested loops, direct formulas) and
shares no code with the package.  Unit tests compute expected values through
these functions and compare the fast paths against them.
"""

from __future__ import annotations

import math

import numpy as np


def conv3d_naive(x, w, b, stride, padding):
    """Direct 5-nested-loop 3D convolution over (N,C,T,H,W)."""
    n, cin, t, h, wd = x.shape
    cout, cin_w, kt, kh, kw = w.shape
    assert cin_w == cin
    st, sh, sw = stride
    pt, ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    to = (t + 2 * pt - kt) // st + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((n, cout, to, ho, wo), dtype=np.float64)
    for ni in range(n):
        for oc in range(cout):
            for ti in range(to):
                for hi in range(ho):
                    for wi in range(wo):
                        acc = 0.0
                        for ic in range(cin):
                            for i in range(kt):
                                for j in range(kh):
                                    for k in range(kw):
                                        acc += (
                                            xp[ni, ic, ti * st + i, hi * sh + j, wi * sw + k]
                                            * w[oc, ic, i, j, k]
                                        )
                        out[ni, oc, ti, hi, wi] = acc + b[oc]
    return out


def depthwise_conv3d_naive(x, w, b, stride, padding):
    """Per-channel 3D convolution; w is (C, 1, kt, kh, kw)."""
    n, c, t, h, wd = x.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    kt, kh, kw = w.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    to = (t + 2 * pt - kt) // st + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((n, c, to, ho, wo), dtype=np.float64)
    for ni in range(n):
        for ic in range(c):
            for ti in range(to):
                for hi in range(ho):
                    for wi in range(wo):
                        acc = 0.0
                        for i in range(kt):
                            for j in range(kh):
                                for k in range(kw):
                                    acc += (
                                        xp[ni, ic, ti * st + i, hi * sh + j, wi * sw + k]
                                        * w[ic, 0, i, j, k]
                                    )
                        out[ni, ic, ti, hi, wi] = acc + b[ic]
    return out


def linear_naive(x, w, b):
    """Explicit dot-product affine map over the last dim; w is (Dout, Din)."""
    lead = x.shape[:-1]
    x2 = x.reshape(-1, x.shape[-1])
    out = np.zeros((x2.shape[0], w.shape[0]), dtype=np.float64)
    for r in range(x2.shape[0]):
        for o in range(w.shape[0]):
            acc = 0.0
            for i in range(x.shape[-1]):
                acc += x2[r, i] * w[o, i]
            out[r, o] = acc + b[o]
    return out.reshape(lead + (w.shape[0],))


def dense_attention_naive(x, wq, wk, wv, wo, bq, bk, bv, bo, heads):
    """Multi-head scaled dot-product attention over one dense token set.

    x: (S, C).  Projections are (C, C) applied as x @ W.T + b.
    """
    s, c = x.shape
    hd = c // heads
    q = x @ wq.T + bq
    k = x @ wk.T + bk
    v = x @ wv.T + bv
    out = np.zeros((s, c), dtype=np.float64)
    for h in range(heads):
        qs = q[:, h * hd : (h + 1) * hd]
        ks = k[:, h * hd : (h + 1) * hd]
        vs = v[:, h * hd : (h + 1) * hd]
        scores = qs @ ks.T / math.sqrt(hd)
        scores = scores - scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=1, keepdims=True)
        out[:, h * hd : (h + 1) * hd] = attn @ vs
    return out @ wo.T + bo


def pearson_naive(a, b):
    """Two-pass Pearson correlation between two same-shape maps."""
    a = a.reshape(-1).astype(np.float64)
    b = b.reshape(-1).astype(np.float64)
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b)) / len(a)
    va = sum((x - ma) ** 2 for x in a) / len(a)
    vb = sum((y - mb) ** 2 for y in b) / len(b)
    return cov / math.sqrt(va * vb)


def kl_naive(s, g, eps):
    """Direct-summation KL divergence after sum-normalizing both maps."""
    s = s.reshape(-1).astype(np.float64)
    g = g.reshape(-1).astype(np.float64)
    s = s / s.sum()
    g = g / g.sum()
    total = 0.0
    for gi, si in zip(g, s):
        if gi > 0:
            total += gi * math.log(gi / (si + eps))
    return total


def sim_naive(s, g):
    """Histogram intersection of the two sum-normalized maps."""
    s = s.reshape(-1).astype(np.float64)
    g = g.reshape(-1).astype(np.float64)
    s = s / s.sum()
    g = g / g.sum()
    return float(sum(min(a, b) for a, b in zip(s, g)))


def nss_naive(s, points):
    """Mean of the standardized map at the fixation points (population std)."""
    flat = s.reshape(-1).astype(np.float64)
    mu = flat.mean()
    sd = flat.std()
    vals = [(s[r, c] - mu) / sd for r, c in points]
    return float(sum(vals) / len(vals))


def auc_threshold_naive(s, positive_pixels):
    """ROC area by explicit per-threshold counting over distinct positive values.

    positive_pixels: iterable of (row, col); negatives are all other pixels.
    Tie rule: a pixel with value >= threshold counts as classified positive.
    Trapezoid over the (FPR, TPR) points with (0,0) and (1,1) anchors.
    """
    pos_set = set(positive_pixels)
    pos_vals = [float(s[r, c]) for r, c in pos_set]
    neg_vals = [
        float(s[r, c])
        for r in range(s.shape[0])
        for c in range(s.shape[1])
        if (r, c) not in pos_set
    ]
    return roc_area_naive(pos_vals, neg_vals)


def roc_area_naive(pos_vals, neg_vals):
    thresholds = sorted(set(pos_vals), reverse=True)
    points = [(0.0, 0.0)]
    for tau in thresholds:
        tp = 0
        for v in pos_vals:
            if v >= tau:
                tp += 1
        fp = 0
        for v in neg_vals:
            if v >= tau:
                fp += 1
        points.append((fp / len(neg_vals), tp / len(pos_vals)))
    points.append((1.0, 1.0))
    area = 0.0
    for (f0, t0), (f1, t1) in zip(points, points[1:]):
        area += 0.5 * (t0 + t1) * (f1 - f0)
    return area


def adam_scalar_reference(x0, grad_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook scalar Adam loop, for trajectory comparisons."""
    x = float(x0)
    m = 0.0
    v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        x -= lr * mhat / (math.sqrt(vhat) + eps)
    return x
