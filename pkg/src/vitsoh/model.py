"""Patch-transformer regressor over charge-window matrices.

The input matrix (channels x points) is tiled into fixed-size patches,
affinely embedded with a learned position embedding, passed through a
stack of pre-norm transformer encoder blocks, mean-pooled over tokens and
mapped to a scalar health estimate by a small fully connected head
(linear / batch-norm / ReLU / linear).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, FormatError

CHECKPOINT_VERSION = 1
CHECKPOINT_NAME = "checkpoint.json"
CHECKPOINT_BLOB = "checkpoint.f32"

POS_EMBED_SIGMA = 0.02
BN_MOMENTUM = 0.1
BN_EPS = 1e-5
LN_EPS = 1e-5

# batch-norm running statistics: state, never optimized
_STAT_SUFFIXES = ("running_mean", "running_var")


@dataclass(frozen=True)
class ViTConfig:
    """Shape hyperparameters of the transformer regressor."""
    points: int              # discretization granularity per channel (L_V)
    channels: int            # number of input channels (F)
    s_patch: int = 20        # points per patch
    f_patch: int = 2         # channels per patch
    d_embed: int = 64
    n_heads: int = 4
    mlp_hidden: int = 64
    depth: int = 2
    fc_hidden: int = 32
    dropout: float = 0.1

    def __post_init__(self):
        if self.points % self.s_patch != 0:
            raise ConfigError(
                f"points {self.points} not divisible by s_patch {self.s_patch}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.d_embed % self.n_heads != 0:
            raise ConfigError(
                f"d_embed {self.d_embed} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.channels < 1 or self.s_patch < 1 or self.f_patch < 1:
            raise ConfigError("channels, s_patch and f_patch must be >= 1")

    @property
    def d_head(self) -> int:
        return self.d_embed // self.n_heads

    @property
    def padded_channels(self) -> int:
        return ((self.channels + self.f_patch - 1) // self.f_patch) * self.f_patch

    @property
    def patch_len(self) -> int:
        return self.s_patch * self.f_patch

    @property
    def seq_len(self) -> int:
        return (self.points // self.s_patch) * (self.padded_channels // self.f_patch)


def patchify(x: np.ndarray, cfg: ViTConfig) -> np.ndarray:
    """Tile (batch, F, L_V) matrices into (batch, tokens, patch_len).

    Channels are zero-padded up to a multiple of f_patch. Tokens are
    ordered time-major then channel-group; each tile is flattened with the
    channel axis outermost.
    """
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1] != cfg.channels or x.shape[2] != cfg.points:
        raise ConfigError(
            f"input shape {x.shape[1:]} does not match config "
            f"({cfg.channels}, {cfg.points})")
    pad = cfg.padded_channels - cfg.channels
    if pad:
        x = np.concatenate(
            [x, np.zeros((x.shape[0], pad, cfg.points), dtype=x.dtype)], axis=1)
    b = x.shape[0]
    fg = cfg.padded_channels // cfg.f_patch
    sg = cfg.points // cfg.s_patch
    tiles = x.reshape(b, fg, cfg.f_patch, sg, cfg.s_patch)
    tokens = tiles.transpose(0, 3, 1, 2, 4).reshape(b, sg * fg, cfg.patch_len)
    return tokens[0] if single else tokens


@dataclass
class BlockTensors:
    """Per-encoder-block parameter view."""
    ln1_gamma: Tensor
    ln1_beta: Tensor
    w_q: list[Tensor]
    w_k: list[Tensor]
    w_v: list[Tensor]
    w_out: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor


class ModelParameters:
    """All learnable tensors plus the per-tensor freeze mask."""

    def __init__(self, cfg: ViTConfig, tensors: dict[str, Tensor],
                 frozen: set[str] | None = None):
        self.cfg = cfg
        self.tensors = tensors
        self.frozen: set[str] = set(frozen or ())

    # ------------------------------------------------------------------
    @staticmethod
    def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    @classmethod
    def initialize(cls, cfg: ViTConfig, seed: int = 0) -> "ModelParameters":
        """Fresh parameters: Glorot weights, zero biases, gaussian positions."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
        t: dict[str, Tensor] = {}

        def param(name: str, data: np.ndarray) -> None:
            t[name] = Tensor(data, requires_grad=True)

        param("embed.weight", cls._glorot(rng, cfg.patch_len, cfg.d_embed))
        param("embed.bias", np.zeros(cfg.d_embed))
        param("pos_embed", rng.normal(0.0, POS_EMBED_SIGMA,
                                      size=(cfg.seq_len, cfg.d_embed)))
        for i in range(cfg.depth):
            p = f"block{i}"
            param(f"{p}.ln1.gamma", np.ones(cfg.d_embed))
            param(f"{p}.ln1.beta", np.zeros(cfg.d_embed))
            for h in range(cfg.n_heads):
                param(f"{p}.attn.q{h}", cls._glorot(rng, cfg.d_embed, cfg.d_head))
                param(f"{p}.attn.k{h}", cls._glorot(rng, cfg.d_embed, cfg.d_head))
                param(f"{p}.attn.v{h}", cls._glorot(rng, cfg.d_embed, cfg.d_head))
            param(f"{p}.attn.out", cls._glorot(rng, cfg.d_embed, cfg.d_embed))
            param(f"{p}.ln2.gamma", np.ones(cfg.d_embed))
            param(f"{p}.ln2.beta", np.zeros(cfg.d_embed))
            param(f"{p}.mlp.w1", cls._glorot(rng, cfg.d_embed, cfg.mlp_hidden))
            param(f"{p}.mlp.b1", np.zeros(cfg.mlp_hidden))
            param(f"{p}.mlp.w2", cls._glorot(rng, cfg.mlp_hidden, cfg.d_embed))
            param(f"{p}.mlp.b2", np.zeros(cfg.d_embed))
        param("head.fc1.weight", cls._glorot(rng, cfg.d_embed, cfg.fc_hidden))
        param("head.fc1.bias", np.zeros(cfg.fc_hidden))
        param("head.bn.gamma", np.ones(cfg.fc_hidden))
        param("head.bn.beta", np.zeros(cfg.fc_hidden))
        param("head.fc2.weight", cls._glorot(rng, cfg.fc_hidden, 1))
        param("head.fc2.bias", np.zeros(1))
        t["head.bn.running_mean"] = Tensor(np.zeros(cfg.fc_hidden))
        t["head.bn.running_var"] = Tensor(np.ones(cfg.fc_hidden))
        return cls(cfg, t)

    # ------------------------------------------------------------------
    def block(self, i: int) -> BlockTensors:
        p = f"block{i}"
        return BlockTensors(
            ln1_gamma=self.tensors[f"{p}.ln1.gamma"],
            ln1_beta=self.tensors[f"{p}.ln1.beta"],
            w_q=[self.tensors[f"{p}.attn.q{h}"] for h in range(self.cfg.n_heads)],
            w_k=[self.tensors[f"{p}.attn.k{h}"] for h in range(self.cfg.n_heads)],
            w_v=[self.tensors[f"{p}.attn.v{h}"] for h in range(self.cfg.n_heads)],
            w_out=self.tensors[f"{p}.attn.out"],
            ln2_gamma=self.tensors[f"{p}.ln2.gamma"],
            ln2_beta=self.tensors[f"{p}.ln2.beta"],
            mlp_w1=self.tensors[f"{p}.mlp.w1"],
            mlp_b1=self.tensors[f"{p}.mlp.b1"],
            mlp_w2=self.tensors[f"{p}.mlp.w2"],
            mlp_b2=self.tensors[f"{p}.mlp.b2"],
        )

    def is_stat(self, name: str) -> bool:
        return name.endswith(_STAT_SUFFIXES)

    def trainable(self) -> list[tuple[str, Tensor]]:
        """(name, tensor) pairs the optimizer may update."""
        return [(n, t) for n, t in self.tensors.items()
                if n not in self.frozen and not self.is_stat(n)]

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    # ------------------------------------------------------------------
    def apply_freeze(self, part: str, frozen: bool = True) -> "ModelParameters":
        """Set the freeze mask for 'vit' (feature extractor) or 'head'."""
        if part == "vit":
            names = [n for n in self.tensors
                     if n.startswith(("embed.", "pos_embed", "block"))]
        elif part == "head":
            names = [n for n in self.tensors
                     if n.startswith("head.") and not self.is_stat(n)]
        else:
            raise ConfigError(f"unknown freeze part {part!r}")
        if not names:
            raise ConfigError(f"freeze part {part!r} matched no tensors")
        for n in names:
            if frozen:
                self.frozen.add(n)
                self.tensors[n].requires_grad = False
            else:
                self.frozen.discard(n)
                self.tensors[n].requires_grad = True
        return self

    # ------------------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.tensors.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for n, data in state.items():
            self.tensors[n].data = data.copy()

    def checksums(self) -> dict[str, bytes]:
        return {n: t.data.tobytes() for n, t in self.tensors.items()}


# ----------------------------------------------------------------------
# forward pieces
# ----------------------------------------------------------------------
def attention(q: Tensor, k: Tensor, v: Tensor, *, dropout_rate: float = 0.0,
              rng: np.random.Generator | None = None,
              training: bool = False) -> Tensor:
    """Scaled dot-product attention: softmax(Q K^T / sqrt(d)) V."""
    if q.shape != k.shape or q.shape != v.shape:
        raise ad.ShapeError("attention expects Q, K, V of identical shape")
    d = q.shape[-1]
    scores = ad.matmul(q, k.transpose_last2()) * (1.0 / math.sqrt(d))
    weights = ad.softmax_rows(scores)
    weights = ad.dropout(weights, dropout_rate, rng=rng, training=training)
    return ad.matmul(weights, v)


def multi_head_attention(seq: Tensor, w_q: list[Tensor], w_k: list[Tensor],
                         w_v: list[Tensor], w_out: Tensor, *,
                         dropout_rate: float = 0.0,
                         rng: np.random.Generator | None = None,
                         training: bool = False) -> Tensor:
    """Concatenated per-head attentions followed by the output projection."""
    if not (len(w_q) == len(w_k) == len(w_v)):
        raise ad.ShapeError("per-head projection lists must have equal length")
    heads = []
    for wq, wk, wv in zip(w_q, w_k, w_v):
        heads.append(attention(
            ad.matmul(seq, wq), ad.matmul(seq, wk), ad.matmul(seq, wv),
            dropout_rate=dropout_rate, rng=rng, training=training))
    stacked = ad.concat(heads, axis=-1)
    return ad.matmul(stacked, w_out)


def encoder_block(seq: Tensor, block: BlockTensors, *, dropout_rate: float = 0.0,
                  rng: np.random.Generator | None = None,
                  training: bool = False) -> Tensor:
    """Pre-norm transformer encoder: x += MHA(LN(x)); x += MLP(LN(x))."""
    normed = ad.layer_norm(seq, block.ln1_gamma, block.ln1_beta, eps=LN_EPS)
    seq = seq + multi_head_attention(
        normed, block.w_q, block.w_k, block.w_v, block.w_out,
        dropout_rate=dropout_rate, rng=rng, training=training)
    normed = ad.layer_norm(seq, block.ln2_gamma, block.ln2_beta, eps=LN_EPS)
    hidden = ad.gelu(ad.matmul(normed, block.mlp_w1) + block.mlp_b1)
    hidden = ad.dropout(hidden, dropout_rate, rng=rng, training=training)
    hidden = ad.matmul(hidden, block.mlp_w2) + block.mlp_b2
    hidden = ad.dropout(hidden, dropout_rate, rng=rng, training=training)
    return seq + hidden


def forward_tokens(params: ModelParameters, tokens: np.ndarray, *,
                   training: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Run embedded tokens (batch, L, patch_len) through to predictions."""
    cfg = params.cfg
    t = params.tensors
    rate = cfg.dropout if training else 0.0
    seq = ad.matmul(Tensor(tokens), t["embed.weight"]) + t["embed.bias"]
    seq = seq + t["pos_embed"]
    seq = ad.dropout(seq, rate, rng=rng, training=training)
    for i in range(cfg.depth):
        seq = encoder_block(seq, params.block(i), dropout_rate=rate,
                            rng=rng, training=training)
    pooled = seq.mean(axis=1)
    hidden = ad.matmul(pooled, t["head.fc1.weight"]) + t["head.fc1.bias"]
    hidden = ad.batch_norm(hidden, t["head.bn.gamma"], t["head.bn.beta"],
                           t["head.bn.running_mean"], t["head.bn.running_var"],
                           training=training, momentum=BN_MOMENTUM, eps=BN_EPS)
    hidden = ad.relu(hidden)
    out = ad.matmul(hidden, t["head.fc2.weight"]) + t["head.fc2.bias"]
    return out.reshape(out.shape[0])


def forward(params: ModelParameters, x: np.ndarray, *, training: bool = False,
            rng: np.random.Generator | None = None) -> Tensor:
    """Predict SOH fractions for (batch, F, L_V) input matrices."""
    single = x.ndim == 2
    tokens = patchify(np.asarray(x, dtype=np.float64), params.cfg)
    if single:
        tokens = tokens[None]
    out = forward_tokens(params, tokens, training=training, rng=rng)
    return out


def predict(params: ModelParameters, x: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    """Eval-mode predictions as a plain array, chunked to bound memory."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return forward(params, x).data.copy()
    outputs = [forward(params, x[i:i + batch_size]).data
               for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(outputs)


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------
def save_checkpoint(params: ModelParameters, out_dir: str | Path) -> None:
    """Write the manifest (config + tensor table) and float32 blob."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    offset = 0
    chunks = []
    for name, tensor in params.tensors.items():
        data = tensor.data.astype("<f4")
        table.append({
            "name": name,
            "shape": list(tensor.data.shape),
            "dtype": "float32",
            "offset": offset,
            "frozen": name in params.frozen,
        })
        chunks.append(data.tobytes())
        offset += data.nbytes
    (out / CHECKPOINT_BLOB).write_bytes(b"".join(chunks))
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "blob": CHECKPOINT_BLOB,
        "config": asdict(params.cfg),
        "tensors": table,
    }
    (out / CHECKPOINT_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(in_dir: str | Path) -> ModelParameters:
    """Rebuild parameters from a checkpoint directory."""
    root = Path(in_dir)
    manifest_path = root / CHECKPOINT_NAME
    if not manifest_path.exists():
        raise FormatError(f"no checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {manifest.get('format_version')}")
    cfg = ViTConfig(**manifest["config"])
    blob = (root / manifest["blob"]).read_bytes()
    tensors: dict[str, Tensor] = {}
    frozen: set[str] = set()
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(blob, dtype="<f4", count=count,
                             offset=entry["offset"]).reshape(shape)
        name = entry["name"]
        is_stat = name.endswith(_STAT_SUFFIXES)
        tensors[name] = Tensor(data.astype(np.float64),
                               requires_grad=not (entry["frozen"] or is_stat))
        if entry["frozen"]:
            frozen.add(name)
    params = ModelParameters(cfg, tensors, frozen)
    return params


def check_dataset_compatible(cfg: ViTConfig, channels: int, points: int) -> None:
    """Refuse to run a checkpoint against a dataset of different shape."""
    if cfg.channels != channels or cfg.points != points:
        raise ConfigError(
            f"checkpoint expects ({cfg.channels} channels, {cfg.points} points) "
            f"but dataset provides ({channels}, {points})")
