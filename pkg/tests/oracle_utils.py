"""Independent plain-numpy reference implementations used as test oracles.

These transcribe the module definitions directly (no shared code with the
package's ops): unshifted softmax, explicit 1/(1+exp(-x)) sigmoid, and a
triple-loop depthwise convolution. Dropout is always off here.
"""

import math

import numpy as np


def np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def np_swish(x):
    return x * np_sigmoid(x)


def np_softmax(s):
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def np_layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def np_depthwise_triple_loop(x, k, b, pad):
    t, c = x.shape
    kk = k.shape[1]
    out = np.zeros_like(x)
    for ch in range(c):
        for ti in range(t):
            acc = b[ch]
            for j in range(kk):
                src = ti + j - pad
                if 0 <= src < t:
                    acc += x[src, ch] * k[ch, j]
            out[ti, ch] = acc
    return out


def np_pwff(x, p):
    xn = np_layer_norm(x, p.ln_gamma.data, p.ln_beta.data)
    h = np_swish(xn @ p.w1.data + p.b1.data) @ p.w2.data + p.b2.data
    return x + 0.5 * h


def np_mhsa(x, p, d_model, n_heads):
    xn = np_layer_norm(x, p.ln_gamma.data, p.ln_beta.data)
    inv_scale = 1.0 / math.sqrt(d_model / n_heads)
    heads = []
    for qh, kh, vh in zip(p.q, p.k, p.v):
        q = xn @ qh.data
        k = xn @ kh.data
        v = xn @ vh.data
        a = np_softmax(q @ k.T * inv_scale)
        heads.append(a @ v)
    return np.concatenate(heads, axis=-1) @ p.o.data


def np_conv_module(x, p, pad):
    d = x.shape[-1]
    xn = np_layer_norm(x, p.ln_gamma.data, p.ln_beta.data)
    h = xn @ p.pw1_w.data + p.pw1_b.data
    first, second = h[:, :d], h[:, d:]
    glu = (first @ p.glu_w1.data + p.glu_b1.data) * np_sigmoid(
        second @ p.glu_w2.data + p.glu_b2.data)
    dw = np_depthwise_triple_loop(glu, p.dw_kernel.data, p.dw_bias.data, pad)
    return x + (np_swish(dw) @ p.proj_w.data + p.proj_b.data)


def np_encoder_block(x, p, d_model, n_heads, pad):
    f1 = np_pwff(x, p.pwff_a)
    f2 = f1 + np_mhsa(f1, p.mhsa, d_model, n_heads)
    f3 = np_conv_module(f2, p.conv, pad)
    return np_layer_norm(np_pwff(f3, p.pwff_b),
                         p.final_ln_gamma.data, p.final_ln_beta.data)
