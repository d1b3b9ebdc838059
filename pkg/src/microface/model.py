"""Miniature face-embedding transformer with patch-token gating.

Architecture: linear patch embedding with learned additive position
embeddings, a stack of pre-LN encoder blocks (multi-head self-attention and
GELU MLP, both with residuals), no class token.  A squeeze-and-excitation
gate turns each encoder token f_i into kappa_i * f_i with kappa_i in (0, 1);
the gated tokens are concatenated into a single global token, linearly
projected to the face embedding, and classified with an additive angular
margin (ArcFace) loss.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .dpap import PatchGrid
from .errors import ContractError, DataError, ShapeError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"MFCK"
CHECKPOINT_VERSION = 1

COSINE_CLAMP = 1e-7  # keeps arccos away from its gradient singularities


@dataclass(frozen=True)
class ModelConfig:
    image_side: int = 32
    channels: int = 3
    patch: int = 8
    dim: int = 32
    depth: int = 2
    heads: int = 4
    mlp_ratio: float = 2.0
    se_hidden: int = 0  # 0 -> use the patch count
    emb: int = 128
    classes: int = 8
    scale: float = 64.0
    margin: float = 0.5
    use_se: bool = True

    @property
    def num_patches(self) -> int:
        return (self.image_side // self.patch) ** 2

    @property
    def patch_vec(self) -> int:
        return self.channels * self.patch * self.patch

    def validate(self) -> None:
        if self.image_side % self.patch:
            raise ShapeError(f"image side {self.image_side} not divisible by patch {self.patch}")
        if self.dim % self.heads:
            raise ShapeError(f"token dim {self.dim} not divisible by {self.heads} heads")
        if self.scale <= 0:
            raise ContractError(f"scale must be positive, got {self.scale}")
        if not 0.0 < self.margin < math.pi / 2:
            raise ContractError(f"margin must be in (0, pi/2), got {self.margin}")
        if self.classes < 2:
            raise ContractError(f"need at least 2 classes, got {self.classes}")
        if self.depth < 0 or self.emb < 1 or self.channels < 1:
            raise ContractError("depth, emb and channels must be nonnegative/positive")

    def resolve(self) -> "ModelConfig":
        """Fill in defaulted fields (SE hidden width -> patch count)."""
        cfg = self
        if cfg.se_hidden == 0:
            cfg = replace(cfg, se_hidden=cfg.num_patches)
        cfg.validate()
        return cfg


@dataclass
class TokenSet:
    """Per-image token bundle: encoder tokens, gate scalings, gated tokens,
    and their concatenation (the global token)."""

    tokens: Tensor
    kappa: Tensor | None
    gated: Tensor
    global_token: Tensor


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) with resampling outside +/- 2 std."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2 * std
    return out


def global_token(gated: Tensor) -> Tensor:
    """Concatenate gated tokens in patch order into one long vector."""
    n, d = gated.shape
    return T.reshape(gated, (n * d,))


def arcface_from_cosines(cosines: Tensor, label: int, scale: float, margin: float) -> Tensor:
    """Angular-margin cross entropy given per-class cosine similarities.

    The margin is added to the true-class angle only; all cosine logits are
    multiplied by ``scale`` before the (stabilized) log-softmax.  Once the
    true-class angle passes pi - margin, cos(theta + margin) would wrap
    around and reward anti-alignment, so the target logit falls back to the
    standard linear penalty cos(theta) - margin*sin(margin), which keeps the
    loss increasing in theta all the way to pi.
    """
    c = cosines.size
    if not 0 <= label < c:
        raise ContractError(f"label {label} out of range for {c} classes")
    clamped = T.clip(cosines, -1.0 + COSINE_CLAMP, 1.0 - COSINE_CLAMP)
    theta = T.arccos(clamped)
    theta_y = theta[label]
    if float(theta_y.data) <= math.pi - margin:
        target = T.cos(T.add(theta_y, margin))
    else:
        target = T.sub(T.cos(theta_y), margin * math.sin(margin))
    mask = np.zeros(c)
    mask[label] = 1.0
    merged = T.add(T.mul(T.cos(theta), 1.0 - mask), T.mul(target, mask))
    logits = T.scale(merged, scale)
    zmax = float(logits.data.max())
    lse = T.add(T.log(T.tensor_sum(T.exp(T.sub(logits, zmax)))), zmax)
    return T.sub(lse, logits[label])


def arcface_loss(emb: Tensor, label: int, weights: Tensor, scale: float, margin: float) -> Tensor:
    """Additive angular margin loss of an embedding against class columns."""
    if scale <= 0:
        raise ContractError(f"scale must be positive, got {scale}")
    return arcface_from_cosines(T.cosine_to_columns(emb, weights), label, scale, margin)


class Model:
    """Parameter store plus forward passes; all math runs on the autodiff engine."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg.resolve()
        cfg = self.cfg
        self.grid = PatchGrid((cfg.channels, cfg.image_side, cfg.image_side), cfg.patch)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFACE]))
        n, d = cfg.num_patches, cfg.dim
        hidden = int(round(cfg.dim * cfg.mlp_ratio))

        self._params: list[tuple[str, Tensor]] = []

        def param(name: str, value: np.ndarray) -> Tensor:
            t = Tensor(value, requires_grad=True, op=name)
            self._params.append((name, t))
            return t

        self.patch_w = param("patch_w", _trunc_normal(rng, (cfg.patch_vec, d)))
        self.patch_b = param("patch_b", np.zeros(d))
        self.pos = param("pos", _trunc_normal(rng, (n, d)))
        self.blocks = []
        for i in range(cfg.depth):
            blk = {
                "ln1_g": param(f"b{i}.ln1_g", np.ones(d)),
                "ln1_b": param(f"b{i}.ln1_b", np.zeros(d)),
                "wq": param(f"b{i}.wq", _trunc_normal(rng, (d, d))),
                "bq": param(f"b{i}.bq", np.zeros(d)),
                "wk": param(f"b{i}.wk", _trunc_normal(rng, (d, d))),
                "bk": param(f"b{i}.bk", np.zeros(d)),
                "wv": param(f"b{i}.wv", _trunc_normal(rng, (d, d))),
                "bv": param(f"b{i}.bv", np.zeros(d)),
                "wo": param(f"b{i}.wo", _trunc_normal(rng, (d, d))),
                "bo": param(f"b{i}.bo", np.zeros(d)),
                "ln2_g": param(f"b{i}.ln2_g", np.ones(d)),
                "ln2_b": param(f"b{i}.ln2_b", np.zeros(d)),
                "w1": param(f"b{i}.w1", _trunc_normal(rng, (d, hidden))),
                "b1": param(f"b{i}.b1", np.zeros(hidden)),
                "w2": param(f"b{i}.w2", _trunc_normal(rng, (hidden, d))),
                "b2": param(f"b{i}.b2", np.zeros(d)),
            }
            self.blocks.append(blk)
        if cfg.use_se:
            h = cfg.se_hidden
            self.se_w1 = param("se_w1", _trunc_normal(rng, (n, h)))
            self.se_b1 = param("se_b1", np.zeros(h))
            self.se_w2 = param("se_w2", _trunc_normal(rng, (h, n)))
            self.se_b2 = param("se_b2", np.zeros(n))
        self.embed_w = param("embed_w", _trunc_normal(rng, (n * d, cfg.emb)))
        self.embed_b = param("embed_b", np.zeros(cfg.emb))
        self.arc_w = param("arc_w", _trunc_normal(rng, (cfg.emb, cfg.classes)))

    # -- parameter access ------------------------------------------------

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self._params]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self._params)

    # -- forward passes ----------------------------------------------------

    def patch_embed(self, pixels: np.ndarray) -> Tensor:
        """Flatten each patch, project to the token dim, add position embeddings."""
        flat = self.grid.decompose(np.asarray(pixels, dtype=np.float64)).reshape(self.grid.n, -1)
        x = Tensor(flat)
        return T.add(T.add(T.matmul(x, self.patch_w), self.patch_b), self.pos)

    def encoder_forward(self, tokens: Tensor, return_attn: bool = False):
        """Stack of pre-LN attention and MLP blocks; depth 0 is the identity."""
        cfg = self.cfg
        n, d = tokens.shape
        heads, dh = cfg.heads, d // cfg.heads
        attn_maps = []
        x = tokens
        for blk in self.blocks:
            h = T.layernorm(x, blk["ln1_g"], blk["ln1_b"])
            q = T.add(T.matmul(h, blk["wq"]), blk["bq"])
            k = T.add(T.matmul(h, blk["wk"]), blk["bk"])
            v = T.add(T.matmul(h, blk["wv"]), blk["bv"])
            q = T.transpose(T.reshape(q, (n, heads, dh)), (1, 0, 2))
            k = T.transpose(T.reshape(k, (n, heads, dh)), (1, 0, 2))
            v = T.transpose(T.reshape(v, (n, heads, dh)), (1, 0, 2))
            out, attn = T.scaled_dot_product_attention(q, k, v)
            if return_attn:
                attn_maps.append(attn)
            out = T.reshape(T.transpose(out, (1, 0, 2)), (n, d))
            x = T.add(x, T.add(T.matmul(out, blk["wo"]), blk["bo"]))
            h2 = T.layernorm(x, blk["ln2_g"], blk["ln2_b"])
            m = T.add(T.matmul(T.gelu(T.add(T.matmul(h2, blk["w1"]), blk["b1"])), blk["w2"]), blk["b2"])
            x = T.add(x, m)
        if return_attn:
            return x, attn_maps
        return x

    def se_forward(self, tokens: Tensor) -> tuple[Tensor, Tensor]:
        """Squeeze each token to its mean, excite through two FC layers.

        Returns (kappa, gated) with kappa_i in (0, 1) and gated_i = kappa_i * f_i.
        """
        if not self.cfg.use_se:
            raise ContractError("se_forward on a model built without the SE gate")
        n = tokens.shape[0]
        squeezed = T.reshape(T.tensor_mean(tokens, axis=-1), (1, n))
        h1 = T.relu(T.add(T.matmul(squeezed, self.se_w1), self.se_b1))
        kappa = T.reshape(T.sigmoid(T.add(T.matmul(h1, self.se_w2), self.se_b2)), (n,))
        gated = T.mul(tokens, T.reshape(kappa, (n, 1)))
        return kappa, gated

    def token_set(self, pixels: np.ndarray) -> TokenSet:
        tokens = self.encoder_forward(self.patch_embed(pixels))
        if self.cfg.use_se:
            kappa, gated = self.se_forward(tokens)
        else:
            kappa, gated = None, tokens
        return TokenSet(tokens=tokens, kappa=kappa, gated=gated, global_token=global_token(gated))

    def embed(self, g: Tensor) -> Tensor:
        """Project the global token to the face embedding."""
        flat = T.reshape(g, (1, g.size))
        return T.reshape(T.add(T.matmul(flat, self.embed_w), self.embed_b), (self.cfg.emb,))

    def kappa_of(self, pixels: np.ndarray) -> np.ndarray:
        """Gate scalings of one image, outside the autodiff graph."""
        with T.no_grad():
            tokens = self.encoder_forward(self.patch_embed(pixels))
            kappa, _ = self.se_forward(tokens)
        return kappa.data.copy()

    def embedding(self, pixels: np.ndarray) -> np.ndarray:
        """Face embedding of one image, outside the autodiff graph."""
        with T.no_grad():
            ts = self.token_set(pixels)
            return self.embed(ts.global_token).data.copy()


# -- checkpoint IO -----------------------------------------------------------


def save_checkpoint(model: Model, path) -> None:
    """Versioned binary dump: header with config, then parameters in
    declaration order as little-endian float64 with shape prefixes."""
    cfg = model.cfg
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack(
            "<10i",
            cfg.image_side,
            cfg.channels,
            cfg.patch,
            cfg.dim,
            cfg.depth,
            cfg.heads,
            cfg.se_hidden,
            cfg.emb,
            cfg.classes,
            int(cfg.use_se),
        ),
        struct.pack("<3d", cfg.mlp_ratio, cfg.scale, cfg.margin),
        struct.pack("<I", len(model.parameters())),
    ]
    for _, p in model.named_parameters():
        parts.append(struct.pack("<I", p.ndim))
        parts.append(struct.pack(f"<{p.ndim}I", *p.shape))
        parts.append(p.data.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> Model:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic {raw[:4]!r})")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    ints = struct.unpack_from("<10i", raw, 8)
    floats = struct.unpack_from("<3d", raw, 8 + 40)
    cfg = ModelConfig(
        image_side=ints[0],
        channels=ints[1],
        patch=ints[2],
        dim=ints[3],
        depth=ints[4],
        heads=ints[5],
        se_hidden=ints[6],
        emb=ints[7],
        classes=ints[8],
        use_se=bool(ints[9]),
        mlp_ratio=floats[0],
        scale=floats[1],
        margin=floats[2],
    )
    offset = 8 + 40 + 24
    (count,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    model = Model(cfg, seed=0)
    params = model.parameters()
    if count != len(params):
        raise DataError(f"{path}: has {count} tensors, model expects {len(params)}")
    for p in params:
        (ndim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        if shape != p.shape:
            raise DataError(f"{path}: tensor shape {shape} != expected {p.shape}")
        nbytes = 8 * int(np.prod(shape, dtype=np.int64)) if ndim else 8
        p.data = np.frombuffer(raw[offset : offset + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")
    return model
