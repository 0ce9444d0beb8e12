"""Spike-attention operator zoo.

All spike-domain operators take binary tensors shaped [..., T, N, D]
(leading axes, if any, are batch-like) and return binary tensors. None of
them uses softmax: flexible Q/K/V ordering on integer-exact products makes
the block-wise form Q(K^T V) bit-identical to (Q K^T) V.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autograd import Tensor, TensorError, concat, exp, matmul, mul, reshape, tsum
from .neuron import LifParams, lif_single


class Variant(str, Enum):
    VANILLA = "vanilla"
    SSA = "ssa"
    SPATIAL = "spatial"
    TEMPORAL = "temporal"
    SPATIAL_TEMPORAL = "st"
    STATTEN = "statten"
    SDSA = "sdsa"
    DSSA = "dssa"
    QKTA = "qkta"


@dataclass
class AttentionConfig:
    variant: Variant = Variant.STATTEN
    T: int = 4
    N: int = 64
    D: int = 64
    B: int = 2
    alpha: float = 0.125
    heads: int = 1
    lif: LifParams = field(default_factory=LifParams)
    # optional per-block (q_steps, k_steps, v_steps) override for the
    # block-wise variant; None means aligned blocks of size B
    combo: list | None = None

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.D % self.heads:
            raise ValueError(f"D={self.D} not divisible by heads={self.heads}")
        if self.variant is Variant.STATTEN:
            if not 1 <= self.B <= self.T or self.T % self.B:
                raise ValueError(
                    f"block size B={self.B} must divide T={self.T} (1 <= B <= T)"
                )


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _require_binary(*tensors):
    for t in tensors:
        d = t.data
        if not np.all((d == 0.0) | (d == 1.0)):
            raise TensorError("spike-attention input must be binary {0,1}")


def _swap(x, a, b):
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return x.transpose(*axes)


# -- float oracle ----------------------------------------------------------


def vanilla_attention(q_f, k_f, v_f):
    """Softmax(Q K^T / sqrt(D)) V on real-valued [..., N, D] inputs.

    The ANN reference point: O(N^2 D) because the N x N score matrix must
    materialize before the row-wise softmax.
    """
    q_f, k_f, v_f = _as_tensor(q_f), _as_tensor(k_f), _as_tensor(v_f)
    d = q_f.shape[-1]
    scores = mul(matmul(q_f, _swap(k_f, -1, -2)), 1.0 / np.sqrt(d))
    shifted = scores - scores.data.max(axis=-1, keepdims=True)
    e = exp(shifted)
    weights = e / tsum(e, axis=-1, keepdims=True)
    return matmul(weights, v_f)


# -- spike operators -------------------------------------------------------


def ssa(q, k, v, alpha=0.125, lif=None, smooth=False):
    """Spiking self-attention, per timestep: LIF(Q K^T V * alpha)."""
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if not smooth:
        _require_binary(q, k, v)
    lif = lif or LifParams()
    pre = mul(matmul(matmul(q, _swap(k, -1, -2)), v), alpha)
    return lif_single(pre, lif, smooth=smooth)


def spatial_attn(q, k, v, alpha=0.125, lif=None, smooth=False):
    """Spatial-only attention: identical math to ssa (tokens within each t)."""
    return ssa(q, k, v, alpha=alpha, lif=lif, smooth=smooth)


def temporal_attn(q, k, v, alpha=0.125, lif=None, smooth=False):
    """Temporal-only attention: per token, attend over the [T, D] slice."""
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if not smooth:
        _require_binary(q, k, v)
    lif = lif or LifParams()
    qt, kt, vt = (_swap(x, -3, -2) for x in (q, k, v))  # [..., N, T, D]
    pre = mul(matmul(matmul(qt, _swap(kt, -1, -2)), vt), alpha)
    return _swap(lif_single(pre, lif, smooth=smooth), -3, -2)


def st_attn(q, k, v, alpha=0.125, lif=None, smooth=False):
    """Full spatial-temporal attention over all T*N tokens jointly."""
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if not smooth:
        _require_binary(q, k, v)
    lif = lif or LifParams()
    lead = q.shape[:-3]
    t, n, d = q.shape[-3:]
    flat = lead + (t * n, d)
    qf, kf, vf = (reshape(x, flat) for x in (q, k, v))
    pre = mul(matmul(qf, matmul(_swap(kf, -1, -2), vf)), alpha)
    return reshape(lif_single(pre, lif, smooth=smooth), q.shape)


def statten(q, k, v, block_size, alpha=0.125, lif=None, smooth=False):
    """Block-wise spatial-temporal attention.

    Timesteps are partitioned into T/block_size consecutive blocks; each
    block's B*N tokens attend jointly, computed in the memory-light order
    Q (K^T V) with the D x D product formed first. Block outputs are
    concatenated back in time order. block_size=1 recovers per-timestep
    attention; block_size=T recovers full spatial-temporal attention.
    """
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if not smooth:
        _require_binary(q, k, v)
    lif = lif or LifParams()
    t = q.shape[-3]
    if not 1 <= block_size <= t or t % block_size:
        raise TensorError(f"block size {block_size} does not divide T={t}")
    t_axis = q.ndim - 3
    blocks = []
    for i in range(t // block_size):
        sl = (slice(None),) * t_axis + (slice(i * block_size, (i + 1) * block_size),)
        qb, kb, vb = q[sl], k[sl], v[sl]
        lead = qb.shape[:-3]
        flat = lead + (block_size * qb.shape[-2], qb.shape[-1])
        qf, kf, vf = (reshape(x, flat) for x in (qb, kb, vb))
        ktv = matmul(_swap(kf, -1, -2), vf)  # [..., D, D] before touching Q
        pre = mul(matmul(qf, ktv), alpha)
        blocks.append(reshape(lif_single(pre, lif, smooth=smooth), qb.shape))
    return concat(blocks, axis=t_axis)


def statten_with_ranges(q, k, v, combo, alpha=0.125, lif=None, smooth=False):
    """STAtten with independently chosen timestep ranges per block and tensor.

    ``combo`` is a list of blocks, each a triple (q_steps, k_steps, v_steps)
    of timestep index lists. Block i's output occupies the q_steps rows of
    the result; q_steps across blocks must tile 0..T-1 exactly. k_steps and
    v_steps of one block must have equal length. An aligned combo (all three
    ranges equal per block) is bit-identical to plain block-wise attention.
    """
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if not smooth:
        _require_binary(q, k, v)
    lif = lif or LifParams()
    t = q.shape[-3]
    t_axis = q.ndim - 3
    covered = sorted(s for blk in combo for s in blk[0])
    if covered != list(range(t)):
        raise TensorError(
            f"q ranges of combo must tile timesteps 0..{t - 1}, got {covered}"
        )
    out = [None] * t
    for q_steps, k_steps, v_steps in combo:
        if len(k_steps) != len(v_steps):
            raise TensorError("k and v ranges of a block must have equal length")
        idx = lambda steps: (slice(None),) * t_axis + (list(steps),)
        qb, kb, vb = q[idx(q_steps)], k[idx(k_steps)], v[idx(v_steps)]
        lead = qb.shape[:-3]
        n, d = qb.shape[-2], qb.shape[-1]
        qf = reshape(qb, lead + (len(q_steps) * n, d))
        kf = reshape(kb, lead + (len(k_steps) * n, d))
        vf = reshape(vb, lead + (len(v_steps) * n, d))
        pre = mul(matmul(qf, matmul(_swap(kf, -1, -2), vf)), alpha)
        s = reshape(lif_single(pre, lif, smooth=smooth), qb.shape)
        for j, step in enumerate(q_steps):
            out[step] = s[(slice(None),) * t_axis + (j,)]
    from .autograd import stack

    return stack(out, axis=t_axis)


def sdsa(q, k, v, lif=None, smooth=False):
    """Spike-driven self-attention: Q * LIF(sum_N(K * V)) elementwise."""
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if not smooth:
        _require_binary(q, k, v)
    lif = lif or LifParams()
    gate = lif_single(tsum(mul(k, v), axis=-2, keepdims=True), lif, smooth=smooth)
    return mul(q, gate)


def dssa(x, w, alpha=0.125, lif=None, smooth=False):
    """Dual spike self-attention: LIF(X W^T X^T * alpha), an N x N spike map."""
    x, w = _as_tensor(x), _as_tensor(w)
    if not smooth:
        _require_binary(x)
    lif = lif or LifParams()
    pre = mul(matmul(matmul(x, _swap(w, -1, -2)), _swap(x, -1, -2)), alpha)
    return lif_single(pre, lif, smooth=smooth)


def qkta(q, k, lif=None, smooth=False):
    """Q-K token attention: LIF(sum over tokens of Q) gates K elementwise."""
    q, k = _as_tensor(q), _as_tensor(k)
    if not smooth:
        _require_binary(q, k)
    lif = lif or LifParams()
    gate = lif_single(tsum(q, axis=-2, keepdims=True), lif, smooth=smooth)
    return mul(gate, k)


def attention_mac_count(variant, T, N, D):
    """Accumulate counts behind the complexity column: independent of block
    size for block-wise attention (two N x D by D x D-scale products)."""
    variant = Variant(variant)
    if variant is Variant.VANILLA:
        return 2 * N * N * D
    if variant is Variant.SDSA:
        return 2 * T * N * D
    if variant is Variant.QKTA:
        return 2 * T * N * D
    return 2 * T * N * D * D


def apply_variant(variant, q, k, v, cfg: AttentionConfig, smooth=False):
    """Dispatch one forward through the configured operator."""
    variant = Variant(variant)
    kw = dict(lif=cfg.lif, smooth=smooth)
    if variant is Variant.VANILLA:
        return vanilla_attention(q, k, v)
    if variant in (Variant.SSA, Variant.SPATIAL):
        return ssa(q, k, v, alpha=cfg.alpha, **kw)
    if variant is Variant.TEMPORAL:
        return temporal_attn(q, k, v, alpha=cfg.alpha, **kw)
    if variant is Variant.SPATIAL_TEMPORAL:
        return st_attn(q, k, v, alpha=cfg.alpha, **kw)
    if variant is Variant.STATTEN:
        if cfg.combo is not None:
            return statten_with_ranges(q, k, v, cfg.combo, alpha=cfg.alpha, **kw)
        return statten(q, k, v, cfg.B, alpha=cfg.alpha, **kw)
    if variant is Variant.SDSA:
        return sdsa(q, k, v, **kw)
    if variant is Variant.QKTA:
        return qkta(q, k, **kw)
    raise TensorError(f"variant {variant} needs a dedicated call path")
