"""Forward-only toy of the parvocellular/magnocellular interconnection block.

Two feature blocks of shape ``(C, H, W)`` (appearance and motion) are pooled
to a small token grid, each pathway cross-attends to the other, and the
attended tokens are upsampled and added back to their own pathway through a
1x1 projection. A concatenate-and-project fusion of the two refined blocks
is returned as well.

Conventions (none are fixed by the block's description, so they are pinned
here):

* token matrices are ``(N, C)`` and projections are ``x @ W + b``;
* sinusoidal positional embeddings are added to queries and keys only, so
  values and the residual path carry pure features;
* post-norm: ``y = LN(x + attn)``, ``z = LN(y + FFN(y))``, FFN uses GELU;
* bilinear upsampling uses half-pixel centres (``align_corners=False``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import erf

from .errors import DimensionError, ParameterError

LN_EPS = 1e-5
DIRECTION_KEYS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                  "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b",
                  "phi_w", "phi_b")


@dataclass(frozen=True)
class PmiConfig:
    channels: int = 128
    heads: int = 8
    pooled: Tuple[int, int] = (20, 20)
    ffn_expansion: int = 4
    w_pool: float = 0.5
    seed: int = 0
    upsample: str = "bilinear"

    def __post_init__(self):
        if self.channels < 1 or self.heads < 1 or self.channels % self.heads:
            raise ParameterError(f"channels {self.channels} must be divisible by heads {self.heads}")
        if self.channels % 4:
            raise ParameterError("channels must be divisible by 4 for 2-D sinusoidal embeddings")
        if min(self.pooled) < 1:
            raise ParameterError(f"pooled size must be >= 1, got {self.pooled}")
        if not 0.0 <= self.w_pool <= 1.0:
            raise ParameterError(f"w_pool must lie in [0, 1], got {self.w_pool}")
        if self.upsample not in ("bilinear", "nearest"):
            raise ParameterError(f"unknown upsample mode {self.upsample!r}")

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    def replace(self, **changes) -> "PmiConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class PmiWeights:
    """Per-direction parameters plus the fusion projection.

    ``p`` refines the appearance pathway (appearance queries, motion keys and
    values); ``m`` is the mirror image.
    """

    p: Dict[str, np.ndarray]
    m: Dict[str, np.ndarray]
    fuse_w: np.ndarray
    fuse_b: np.ndarray

    @classmethod
    def generate(cls, config: PmiConfig) -> "PmiWeights":
        """Uniform in [-1/sqrt(C), 1/sqrt(C)] from ``config.seed``; LN is (1, 0)."""
        c, f = config.channels, config.channels * config.ffn_expansion
        rng = np.random.default_rng(config.seed)
        bound = 1.0 / np.sqrt(c)

        def u(*shape):
            return rng.uniform(-bound, bound, size=shape)

        def direction():
            return dict(
                wq=u(c, c), bq=u(c), wk=u(c, c), bk=u(c), wv=u(c, c), bv=u(c),
                wo=u(c, c), bo=u(c), ln1_g=np.ones(c), ln1_b=np.zeros(c),
                w1=u(c, f), b1=u(f), w2=u(f, c), b2=u(c), ln2_g=np.ones(c), ln2_b=np.zeros(c),
                phi_w=u(c, c), phi_b=u(c),
            )

        p = direction()
        m = direction()
        return cls(p=p, m=m, fuse_w=u(2 * c, c), fuse_b=u(c))

    def copy(self) -> "PmiWeights":
        return PmiWeights({k: v.copy() for k, v in self.p.items()},
                          {k: v.copy() for k, v in self.m.items()},
                          self.fuse_w.copy(), self.fuse_b.copy())

    def with_zero_biases(self) -> "PmiWeights":
        w = self.copy()
        for d in (w.p, w.m):
            for k in ("bq", "bk", "bv", "bo", "b1", "b2", "phi_b", "ln1_b", "ln2_b"):
                d[k][...] = 0.0
        w.fuse_b[...] = 0.0
        return w

    def with_zero_phi(self) -> "PmiWeights":
        w = self.copy()
        for d in (w.p, w.m):
            d["phi_w"][...] = 0.0
            d["phi_b"][...] = 0.0
        return w


def _check_block(block: np.ndarray, config: PmiConfig) -> np.ndarray:
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 3 or block.shape[0] != config.channels:
        raise DimensionError(f"expected a ({config.channels}, H, W) block, got {block.shape}")
    if block.shape[1] < 1 or block.shape[2] < 1:
        raise DimensionError(f"empty feature block {block.shape}")
    return block


def bin_edges(size: int, bins: int):
    """Adaptive pooling bins: bin i covers [floor(i*n/b), ceil((i+1)*n/b))."""
    return [((i * size) // bins, -((-(i + 1) * size) // bins)) for i in range(bins)]


def sinusoidal_embedding(config: PmiConfig) -> np.ndarray:
    """``(Ha*Wa, C)`` 2-D sine/cosine table: rows in the first C/2, cols after."""
    ha, wa = config.pooled
    d = config.channels // 2

    def axis(n):
        pos = np.arange(n, dtype=np.float64)[:, None]
        k = np.arange(d // 2, dtype=np.float64)[None, :]
        ang = pos / np.power(10000.0, 2.0 * k / d)
        out = np.empty((n, d))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        return out

    ey, ex = axis(ha), axis(wa)
    return np.concatenate([np.repeat(ey, wa, axis=0), np.tile(ex, (ha, 1))], axis=1)


def pool_tokens(block: np.ndarray, config: PmiConfig, with_pos: bool = True) -> np.ndarray:
    """Blend of adaptive average and max pooling, flattened to ``(Ha*Wa, C)``."""
    block = _check_block(block, config)
    c, h, w = block.shape
    ha, wa = config.pooled
    tokens = np.empty((ha, wa, c))
    for i, (y0, y1) in enumerate(bin_edges(h, ha)):
        for j, (x0, x1) in enumerate(bin_edges(w, wa)):
            cell = block[:, y0:y1, x0:x1].reshape(c, -1)
            tokens[i, j] = config.w_pool * cell.mean(axis=1) + (1.0 - config.w_pool) * cell.max(axis=1)
    tokens = tokens.reshape(ha * wa, c)
    if with_pos:
        tokens = tokens + sinusoidal_embedding(config)
    return tokens


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softmax(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_attend(queries_from: np.ndarray, keys_values_from: np.ndarray, weights: Dict[str, np.ndarray],
                 config: PmiConfig, q_pos: Optional[np.ndarray] = None,
                 k_pos: Optional[np.ndarray] = None, return_attention: bool = False):
    """One post-norm cross-attention layer with a feed-forward sublayer.

    Returns the refined query tokens, and also the ``(h, Nq, Nk)`` attention
    weights when ``return_attention`` is set.
    """
    xq = np.asarray(queries_from, dtype=np.float64)
    xkv = np.asarray(keys_values_from, dtype=np.float64)
    c, nh, dk = config.channels, config.heads, config.head_dim
    if xq.ndim != 2 or xkv.ndim != 2 or xq.shape[1] != c or xkv.shape[1] != c:
        raise DimensionError(f"token matrices must have {c} columns")
    w = weights
    q_in = xq if q_pos is None else xq + q_pos
    k_in = xkv if k_pos is None else xkv + k_pos
    q = (q_in @ w["wq"] + w["bq"]).reshape(-1, nh, dk).transpose(1, 0, 2)
    k = (k_in @ w["wk"] + w["bk"]).reshape(-1, nh, dk).transpose(1, 0, 2)
    v = (xkv @ w["wv"] + w["bv"]).reshape(-1, nh, dk).transpose(1, 0, 2)
    attn = softmax(q @ k.transpose(0, 2, 1) / np.sqrt(dk))
    heads = (attn @ v).transpose(1, 0, 2).reshape(-1, c)
    a = heads @ w["wo"] + w["bo"]
    y = layer_norm(xq + a, w["ln1_g"], w["ln1_b"])
    ffn = gelu(y @ w["w1"] + w["b1"]) @ w["w2"] + w["b2"]
    z = layer_norm(y + ffn, w["ln2_g"], w["ln2_b"])
    return (z, attn) if return_attention else z


def resize_matrix(out_size: int, in_size: int, mode: str) -> np.ndarray:
    """``(out, in)`` interpolation matrix for one axis."""
    m = np.zeros((out_size, in_size))
    scale = in_size / out_size
    for o in range(out_size):
        if mode == "nearest":
            m[o, min(int(np.floor(o * scale)), in_size - 1)] = 1.0
            continue
        src = max((o + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), in_size - 1)
        i1 = min(i0 + 1, in_size - 1)
        frac = src - i0
        m[o, i0] += 1.0 - frac
        m[o, i1] += frac
    return m


def upsample_tokens(tokens: np.ndarray, height: int, width: int, config: PmiConfig,
                    mode: Optional[str] = None) -> np.ndarray:
    """Reshape ``(Ha*Wa, C)`` tokens to a grid and resize to ``(C, H, W)``."""
    mode = mode or config.upsample
    ha, wa = config.pooled
    grid = tokens.reshape(ha, wa, -1).transpose(2, 0, 1)
    ry = resize_matrix(height, ha, mode)
    rx = resize_matrix(width, wa, mode)
    return np.einsum("yi,cij,xj->cyx", ry, grid, rx, optimize=True)


def project_1x1(block: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """1x1 convolution with ``weight`` shaped ``(C_in, C_out)``."""
    return np.einsum("chw,co->ohw", block, weight, optimize=True) + bias[:, None, None]


@dataclass
class PmiOutput:
    f_p: np.ndarray
    f_m: np.ndarray
    fused: np.ndarray
    attn_p: np.ndarray
    attn_m: np.ndarray


def pmi_forward(f_p: np.ndarray, f_m: np.ndarray, weights: PmiWeights, config: PmiConfig) -> PmiOutput:
    """Bidirectional cross-attention with residual refinement of both pathways."""
    f_p = _check_block(f_p, config)
    f_m = _check_block(f_m, config)
    if f_p.shape != f_m.shape:
        raise DimensionError(f"pathway shapes differ: {f_p.shape} vs {f_m.shape}")
    _, h, w = f_p.shape
    pos = sinusoidal_embedding(config)
    tp = pool_tokens(f_p, config, with_pos=False)
    tm = pool_tokens(f_m, config, with_pos=False)
    zp, attn_p = cross_attend(tp, tm, weights.p, config, pos, pos, return_attention=True)
    zm, attn_m = cross_attend(tm, tp, weights.m, config, pos, pos, return_attention=True)
    out_p = f_p + project_1x1(upsample_tokens(zp, h, w, config), weights.p["phi_w"], weights.p["phi_b"])
    out_m = f_m + project_1x1(upsample_tokens(zm, h, w, config), weights.m["phi_w"], weights.m["phi_b"])
    fused = project_1x1(np.concatenate([out_p, out_m], axis=0), weights.fuse_w, weights.fuse_b)
    return PmiOutput(out_p, out_m, fused, attn_p, attn_m)
