"""Encoder-block sub-modules: feed-forward, self-attention, convolution.

A block applies them macaron style: a half-step feed-forward, self-attention,
the convolution module, a second half-step feed-forward, and a final layer
norm. Residual connections live where each forward function documents them;
the attention branch is returned pre-residual and the caller adds it.

Every forward accepts a (T, D) input or a batched (B, T, D) input; parameter
tensors are rank <= 2 and broadcast over the batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import math

import numpy as np

from .config import ModelConfig
from .rng import SeedStream
from .tensor import (Tensor, add, concat_last, conv1d_depthwise,
                     conv1d_pointwise, dropout, layer_norm, matmul, mul,
                     scale, sigmoid, slice_last, softmax_rows, swish,
                     transpose_last2)

LN_EPS = 1e-5


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                 fan_in: int, dtype) -> Tensor:
    """Weight init: uniform(-sqrt(1/fan_in), +sqrt(1/fan_in))."""
    bound = math.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def _ones(shape, dtype) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype))


# ---------------------------------------------------------------------------
# position-wise feed-forward
# ---------------------------------------------------------------------------


@dataclass
class PwffParams:
    """Two-layer expansion MLP. d_pwff >= D (expansion layer)."""

    w1: Tensor  # (D, d_pwff)
    b1: Tensor  # (d_pwff,)
    w2: Tensor  # (d_pwff, D)
    b2: Tensor  # (D,)
    ln_gamma: Tensor  # (D,)
    ln_beta: Tensor  # (D,)

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.w1", self.w1), (f"{prefix}.b1", self.b1),
                (f"{prefix}.w2", self.w2), (f"{prefix}.b2", self.b2),
                (f"{prefix}.ln_gamma", self.ln_gamma),
                (f"{prefix}.ln_beta", self.ln_beta)]


def pwff_init(stream: SeedStream, d_model: int, d_pwff: int, dtype) -> PwffParams:
    return PwffParams(
        w1=uniform_init(stream.child("w1").generator(), (d_model, d_pwff), d_model, dtype),
        b1=_zeros((d_pwff,), dtype),
        w2=uniform_init(stream.child("w2").generator(), (d_pwff, d_model), d_pwff, dtype),
        b2=_zeros((d_model,), dtype),
        ln_gamma=_ones((d_model,), dtype),
        ln_beta=_zeros((d_model,), dtype),
    )


def pwff_forward(x: Tensor, p: PwffParams, cfg: ModelConfig,
                 training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
    """x + Dropout(Swish(LN(x) W1 + b1) W2 + b2) / 2 (half-step residual
    included)."""
    h = layer_norm(x, p.ln_gamma, p.ln_beta, LN_EPS)
    h = add(matmul(h, p.w1), p.b1)
    h = swish(h)
    h = add(matmul(h, p.w2), p.b2)
    h = dropout(h, cfg.dropout_p, training, rng)
    return add(x, scale(h, 0.5))


# ---------------------------------------------------------------------------
# multi-head self-attention
# ---------------------------------------------------------------------------


@dataclass
class MhsaParams:
    """Per-head projection matrices (no biases) and the output projection."""

    q: list[Tensor]  # H tensors, each (D, head_dim)
    k: list[Tensor]
    v: list[Tensor]
    o: Tensor  # (D, D)
    ln_gamma: Tensor  # (D,)
    ln_beta: Tensor  # (D,)

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for tag, heads in (("q", self.q), ("k", self.k), ("v", self.v)):
            out.extend((f"{prefix}.{tag}{h}", t) for h, t in enumerate(heads))
        out.append((f"{prefix}.o", self.o))
        out.append((f"{prefix}.ln_gamma", self.ln_gamma))
        out.append((f"{prefix}.ln_beta", self.ln_beta))
        return out


def mhsa_init(stream: SeedStream, d_model: int, n_heads: int, head_dim: int,
              dtype) -> MhsaParams:
    def heads(tag):
        return [uniform_init(stream.child(f"{tag}{h}").generator(),
                             (d_model, head_dim), d_model, dtype)
                for h in range(n_heads)]

    return MhsaParams(
        q=heads("q"), k=heads("k"), v=heads("v"),
        o=uniform_init(stream.child("o").generator(), (d_model, d_model), d_model, dtype),
        ln_gamma=_ones((d_model,), dtype),
        ln_beta=_zeros((d_model,), dtype),
    )


def mhsa_forward(x: Tensor, p: MhsaParams, cfg: ModelConfig,
                 training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
    """Scaled dot-product attention over the normalized input.

    Per head h: S_h = Q_h K_h^T, A_h = softmax(S_h / sqrt(D / H)),
    C_h = A_h V_h; the concatenated heads go through the output projection and
    dropout. Returns the branch value only: the caller adds the residual. No
    positional encoding, so the map is timestep-permutation-equivariant.
    """
    xn = layer_norm(x, p.ln_gamma, p.ln_beta, LN_EPS)
    inv_scale = 1.0 / math.sqrt(cfg.d_model / cfg.n_heads)
    heads = []
    for qh, kh, vh in zip(p.q, p.k, p.v):
        q = matmul(xn, qh)
        k = matmul(xn, kh)
        v = matmul(xn, vh)
        scores = scale(matmul(q, transpose_last2(k)), inv_scale)
        attn = softmax_rows(scores)
        heads.append(matmul(attn, v))
    out = matmul(concat_last(heads), p.o)
    return dropout(out, cfg.dropout_p, training, rng)


def attention_weights(x: Tensor, p: MhsaParams, cfg: ModelConfig) -> list[np.ndarray]:
    """The per-head A_h matrices for a given input (diagnostic path; shares
    the forward's definition of the scores)."""
    xn = layer_norm(x, p.ln_gamma, p.ln_beta, LN_EPS)
    inv_scale = 1.0 / math.sqrt(cfg.d_model / cfg.n_heads)
    mats = []
    for qh, kh in zip(p.q, p.k):
        q = matmul(xn, qh)
        k = matmul(xn, kh)
        attn = softmax_rows(scale(matmul(q, transpose_last2(k)), inv_scale))
        mats.append(attn.data)
    return mats


# ---------------------------------------------------------------------------
# convolution module
# ---------------------------------------------------------------------------


@dataclass
class ConvModuleParams:
    """Pointwise expansion, gated linear unit, depthwise conv, projection."""

    pw1_w: Tensor  # (D, 2D)
    pw1_b: Tensor  # (2D,)
    glu_w1: Tensor  # (D, D)
    glu_b1: Tensor  # (D,)
    glu_w2: Tensor  # (D, D)
    glu_b2: Tensor  # (D,)
    dw_kernel: Tensor  # (D, K)
    dw_bias: Tensor  # (D,)
    proj_w: Tensor  # (D, D)
    proj_b: Tensor  # (D,)
    ln_gamma: Tensor  # (D,)
    ln_beta: Tensor  # (D,)

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.pw1_w", self.pw1_w), (f"{prefix}.pw1_b", self.pw1_b),
                (f"{prefix}.glu_w1", self.glu_w1), (f"{prefix}.glu_b1", self.glu_b1),
                (f"{prefix}.glu_w2", self.glu_w2), (f"{prefix}.glu_b2", self.glu_b2),
                (f"{prefix}.dw_kernel", self.dw_kernel), (f"{prefix}.dw_bias", self.dw_bias),
                (f"{prefix}.proj_w", self.proj_w), (f"{prefix}.proj_b", self.proj_b),
                (f"{prefix}.ln_gamma", self.ln_gamma), (f"{prefix}.ln_beta", self.ln_beta)]


def conv_module_init(stream: SeedStream, d_model: int, kernel: int, dtype) -> ConvModuleParams:
    return ConvModuleParams(
        pw1_w=uniform_init(stream.child("pw1_w").generator(),
                           (d_model, 2 * d_model), d_model, dtype),
        pw1_b=_zeros((2 * d_model,), dtype),
        glu_w1=uniform_init(stream.child("glu_w1").generator(),
                            (d_model, d_model), d_model, dtype),
        glu_b1=_zeros((d_model,), dtype),
        glu_w2=uniform_init(stream.child("glu_w2").generator(),
                            (d_model, d_model), d_model, dtype),
        glu_b2=_zeros((d_model,), dtype),
        dw_kernel=uniform_init(stream.child("dw_kernel").generator(),
                               (d_model, kernel), kernel, dtype),
        dw_bias=_zeros((d_model,), dtype),
        proj_w=uniform_init(stream.child("proj_w").generator(),
                            (d_model, d_model), d_model, dtype),
        proj_b=_zeros((d_model,), dtype),
        ln_gamma=_ones((d_model,), dtype),
        ln_beta=_zeros((d_model,), dtype),
    )


def conv_module_forward(x: Tensor, p: ConvModuleParams, cfg: ModelConfig,
                        training: bool = False,
                        rng: Optional[np.random.Generator] = None) -> Tensor:
    """LN, pointwise conv to 2D channels, gated linear unit over the halves,
    depthwise conv, Swish, linear projection, dropout, plus the residual
    (included here)."""
    d = x.shape[-1]
    h = layer_norm(x, p.ln_gamma, p.ln_beta, LN_EPS)
    h = conv1d_pointwise(h, p.pw1_w, p.pw1_b)
    first = slice_last(h, 0, d)
    second = slice_last(h, d, 2 * d)
    gate = sigmoid(add(matmul(second, p.glu_w2), p.glu_b2))
    h = mul(add(matmul(first, p.glu_w1), p.glu_b1), gate)
    h = conv1d_depthwise(h, p.dw_kernel, p.dw_bias, cfg.conv_pad)
    h = swish(h)
    h = add(matmul(h, p.proj_w), p.proj_b)
    h = dropout(h, cfg.dropout_p, training, rng)
    return add(x, h)


# ---------------------------------------------------------------------------
# encoder block
# ---------------------------------------------------------------------------


@dataclass
class EncoderBlockParams:
    pwff_a: PwffParams
    mhsa: MhsaParams
    conv: ConvModuleParams
    pwff_b: PwffParams
    final_ln_gamma: Tensor  # (D,)
    final_ln_beta: Tensor  # (D,)

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = self.pwff_a.named(f"{prefix}.pwff_a")
        out += self.mhsa.named(f"{prefix}.mhsa")
        out += self.conv.named(f"{prefix}.conv")
        out += self.pwff_b.named(f"{prefix}.pwff_b")
        out.append((f"{prefix}.final_ln_gamma", self.final_ln_gamma))
        out.append((f"{prefix}.final_ln_beta", self.final_ln_beta))
        return out


def encoder_block_init(stream: SeedStream, cfg: ModelConfig, dtype) -> EncoderBlockParams:
    return EncoderBlockParams(
        pwff_a=pwff_init(stream.child("pwff_a"), cfg.d_model, cfg.d_pwff, dtype),
        mhsa=mhsa_init(stream.child("mhsa"), cfg.d_model, cfg.n_heads, cfg.head_dim, dtype),
        conv=conv_module_init(stream.child("conv"), cfg.d_model, cfg.conv_kernel, dtype),
        pwff_b=pwff_init(stream.child("pwff_b"), cfg.d_model, cfg.d_pwff, dtype),
        final_ln_gamma=_ones((cfg.d_model,), dtype),
        final_ln_beta=_zeros((cfg.d_model,), dtype),
    )


def encoder_block_forward(x: Tensor, p: EncoderBlockParams, cfg: ModelConfig,
                          training: bool = False,
                          rng: Optional[np.random.Generator] = None) -> Tensor:
    """Half-step feed-forward, attention residual, convolution module, second
    half-step feed-forward, final layer norm."""
    f1 = pwff_forward(x, p.pwff_a, cfg, training, rng)
    f2 = add(f1, mhsa_forward(f1, p.mhsa, cfg, training, rng))
    f3 = conv_module_forward(f2, p.conv, cfg, training, rng)
    h = pwff_forward(f3, p.pwff_b, cfg, training, rng)
    return layer_norm(h, p.final_ln_gamma, p.final_ln_beta, LN_EPS)
