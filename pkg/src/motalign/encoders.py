"""Motion and text encoders projecting into a shared embedding space.

Both encoders are small pre-LayerNorm transformers built on the autodiff
tape. The motion encoder attends over joints within each frame (restricted
by the skeleton mask), then over frames, then mean-pools over time. The text
encoder is causal and pools at the end-of-text token.
"""

import copy
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .errors import ConfigError, DimensionError
from .skeleton import attention_mask

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")


class Vocab:
    def __init__(self, words):
        self.tokens = list(RESERVED) + list(words)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def encode(self, caption, context_length=32):
        """BOS + word ids + EOS, truncated so EOS always fits."""
        words = caption.lower().split()[: context_length - 2]
        return [BOS] + [self.index.get(w, UNK) for w in words] + [EOS]

    def batch(self, captions, context_length=32):
        """Padded id matrix (B, context_length) and EOS positions (B,)."""
        ids = np.full((len(captions), context_length), PAD, dtype=np.int64)
        eos = np.empty(len(captions), dtype=np.int64)
        for i, c in enumerate(captions):
            seq = self.encode(c, context_length)
            ids[i, : len(seq)] = seq
            eos[i] = len(seq) - 1
        return ids, eos


def build_vocab(captions):
    """Word vocabulary from lowercased whitespace-split captions, sorted."""
    words = set()
    for c in captions:
        words.update(c.lower().split())
    if not words:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    return Vocab(sorted(words - set(RESERVED)))


def sinusoidal_positions(T, width):
    pos = np.arange(T)[:, None]
    i = np.arange(width // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / width)
    pe = np.zeros((T, width))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


# --------------------------------------------------------------- param init


def _dense(params, rng, name, fan_in, fan_out, bias=True, scale=1.0):
    params[name + ".w"] = Tensor(rng.normal(0.0, scale / np.sqrt(fan_in), (fan_in, fan_out)), name=name + ".w")
    if bias:
        params[name + ".b"] = Tensor(np.zeros(fan_out), name=name + ".b")


def _norm(params, name, width):
    params[name + ".g"] = Tensor(np.ones(width), name=name + ".g")
    params[name + ".b"] = Tensor(np.zeros(width), name=name + ".b")


def _block_params(params, rng, prefix, width, ff_mult, depth):
    out_scale = 1.0 / np.sqrt(2.0 * depth)
    _norm(params, prefix + ".ln1", width)
    for n in ("q", "k", "v"):
        _dense(params, rng, f"{prefix}.{n}", width, width)
    _dense(params, rng, prefix + ".o", width, width, scale=out_scale)
    _norm(params, prefix + ".ln2", width)
    _dense(params, rng, prefix + ".ff1", width, ff_mult * width)
    _dense(params, rng, prefix + ".ff2", ff_mult * width, width, scale=out_scale)


def _linear(x, p, name):
    y = x @ p[name + ".w"]
    b = p.get(name + ".b")
    return y if b is None else y + b


def _ln(x, p, name):
    return ad.layer_norm(x, p[name + ".g"], p[name + ".b"])


def _block(x, p, prefix, heads, bias=None, weights_out=None):
    """Pre-LN transformer block on x of shape (B, S, W); ``bias`` is (S, S) additive."""
    B, S, W = x.shape
    hd = W // heads
    h = _ln(x, p, prefix + ".ln1")

    def split(t):
        return t.reshape(B, S, heads, hd).transpose(0, 2, 1, 3)

    q = split(_linear(h, p, prefix + ".q"))
    k = split(_linear(h, p, prefix + ".k"))
    v = split(_linear(h, p, prefix + ".v"))
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(hd))
    if bias is not None:
        scores = scores + bias
    a = ad.softmax(scores, axis=-1)
    if weights_out is not None:
        weights_out.append(a.data)
    ctx = (a @ v).transpose(0, 2, 1, 3).reshape(B, S, W)
    x = x + _linear(ctx, p, prefix + ".o")
    h = _ln(x, p, prefix + ".ln2")
    return x + _linear(ad.gelu(_linear(h, p, prefix + ".ff1")), p, prefix + ".ff2")


class _Encoder:
    params: dict

    def parameters(self):
        return list(self.params.items())

    def set_trainable(self, flag):
        for t in self.params.values():
            t.requires_grad = bool(flag)

    def state(self):
        return {k: t.data for k, t in self.params.items()}

    def load_state(self, arrays, prefix=""):
        for k, t in self.params.items():
            arr = np.asarray(arrays[prefix + k], dtype=np.float64)
            if arr.shape != t.shape:
                raise DimensionError(f"parameter {prefix + k}: expected {t.shape}, got {arr.shape}")
            t.data = arr.copy()


# -------------------------------------------------------------- motion side


@dataclass
class MotionEncoderConfig:
    width: int = 64
    heads: int = 4
    spatial_layers: int = 2
    temporal_layers: int = 2
    ff_mult: int = 2
    dim: int = 64
    positional_encoding: bool = True
    cross_limb: bool = True

    def validate(self):
        if self.width % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide width ({self.width})")
        if self.width % 2:
            raise ConfigError("width must be even for sinusoidal encodings")
        return self


class MotionEncoder(_Encoder):
    """Joint attention per frame, frame attention, temporal mean pool, projection."""

    def __init__(self, skeleton, cfg, rng):
        self.cfg = cfg.validate()
        self.skeleton = skeleton
        self.mask = attention_mask(skeleton, cross_limb=cfg.cross_limb)
        self._bias = ad.additive_mask(self.mask)
        J, W = skeleton.joint_count, cfg.width
        p = {}
        _dense(p, rng, "input", 3, W)
        p["joint_embed"] = Tensor(rng.normal(0.0, 0.5, (J, W)), name="joint_embed")
        for i in range(cfg.spatial_layers):
            _block_params(p, rng, f"spatial.{i}", W, cfg.ff_mult, cfg.spatial_layers)
        _dense(p, rng, "frame", J * W, W)
        for i in range(cfg.temporal_layers):
            _block_params(p, rng, f"temporal.{i}", W, cfg.ff_mult, cfg.temporal_layers)
        _norm(p, "final_ln", W)
        _dense(p, rng, "proj", W, cfg.dim)
        self.params = p

    def project(self, positions, attention=None):
        """Unnormalised embeddings (B, dim) for positions of shape (B, T, J, 3)."""
        x = np.asarray(positions, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        B, T, J, _ = x.shape
        if J != self.skeleton.joint_count:
            raise DimensionError(f"motion has {J} joints, encoder skeleton has {self.skeleton.joint_count}")
        p, cfg = self.params, self.cfg
        h = _linear(Tensor(x.reshape(B * T, J, 3)), p, "input") + p["joint_embed"]
        for i in range(cfg.spatial_layers):
            h = _block(h, p, f"spatial.{i}", cfg.heads, self._bias, attention)
        h = _linear(h.reshape(B, T, J * cfg.width), p, "frame")
        if cfg.positional_encoding:
            h = h + sinusoidal_positions(T, cfg.width)
        for i in range(cfg.temporal_layers):
            h = _block(h, p, f"temporal.{i}", cfg.heads, None, attention)
        h = _ln(h, p, "final_ln").mean(axis=1)
        return _linear(h, p, "proj")

    def forward(self, positions, attention=None):
        return ad.l2_normalize_rows(self.project(positions, attention))

    def encode(self, positions, batch_size=64):
        """Unit-norm embeddings as a plain array, no gradients."""
        positions = np.asarray(positions)
        out = []
        with no_grad():
            for i in range(0, len(positions), batch_size):
                out.append(self.forward(positions[i : i + batch_size]).data)
        return np.concatenate(out, axis=0)


# ---------------------------------------------------------------- text side


@dataclass
class TextEncoderConfig:
    width: int = 64
    heads: int = 4
    layers: int = 2
    ff_mult: int = 2
    dim: int = 64
    context_length: int = 32

    def validate(self):
        if self.width % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide width ({self.width})")
        if self.context_length < 3:
            raise ConfigError("context_length must leave room for BOS, a word and EOS")
        return self


class TextEncoder(_Encoder):
    """Causal transformer over word tokens, pooled at the EOS position."""

    def __init__(self, vocab, cfg, rng, frozen=False):
        self.cfg = cfg.validate()
        self.vocab = vocab
        W = cfg.width
        p = {}
        p["token_embed"] = Tensor(rng.normal(0.0, 1.0, (len(vocab), W)), name="token_embed")
        p["pos_embed"] = Tensor(rng.normal(0.0, 0.1, (cfg.context_length, W)), name="pos_embed")
        for i in range(cfg.layers):
            _block_params(p, rng, f"layer.{i}", W, cfg.ff_mult, cfg.layers)
        _norm(p, "final_ln", W)
        _dense(p, rng, "proj", W, cfg.dim, bias=False)
        self.params = p
        causal = np.tril(np.ones((cfg.context_length, cfg.context_length), dtype=bool))
        self._bias = ad.additive_mask(causal)
        self.frozen = False
        if frozen:
            self.freeze()

    def freeze(self):
        self.frozen = True
        self.set_trainable(False)

    def unfreeze(self):
        self.frozen = False
        self.set_trainable(True)

    def project_tokens(self, ids, eos):
        """Pre-normalisation projections (B, dim) for padded ids and EOS positions."""
        ids = np.asarray(ids, dtype=np.int64)
        B, S = ids.shape
        p, cfg = self.params, self.cfg
        h = ad.embedding(p["token_embed"], ids) + p["pos_embed"][:S]
        for i in range(cfg.layers):
            h = _block(h, p, f"layer.{i}", cfg.heads, self._bias[:S, :S])
        h = _ln(h, p, "final_ln")
        pooled = h[np.arange(B), np.asarray(eos)]
        return pooled @ p["proj.w"]

    def project(self, captions):
        ids, eos = self.vocab.batch(captions, self.cfg.context_length)
        if self.frozen:
            with no_grad():
                return self.project_tokens(ids, eos)
        return self.project_tokens(ids, eos)

    def forward(self, captions):
        return ad.l2_normalize_rows(self.project(captions))

    def text_encode(self, tokens):
        """Unit-norm (1, dim) embedding of one framed token sequence."""
        tokens = list(tokens)[: self.cfg.context_length]
        if tokens[-1] != EOS:
            tokens[-1] = EOS
        ids = np.full((1, self.cfg.context_length), PAD, dtype=np.int64)
        ids[0, : len(tokens)] = tokens
        with no_grad():
            return ad.l2_normalize_rows(self.project_tokens(ids, [len(tokens) - 1])).data

    def encode(self, captions, batch_size=256):
        out = []
        with no_grad():
            for i in range(0, len(captions), batch_size):
                out.append(self.forward(captions[i : i + batch_size]).data)
        return np.concatenate(out, axis=0)

    def encode_projections(self, captions, batch_size=256):
        out = []
        with no_grad():
            for i in range(0, len(captions), batch_size):
                out.append(self.project(captions[i : i + batch_size]).data)
        return np.concatenate(out, axis=0)


def clone_teacher(student):
    """Deep, permanently frozen copy of a text encoder."""
    teacher = copy.copy(student)
    teacher.params = {k: Tensor(t.data.copy(), name=t.name) for k, t in student.params.items()}
    teacher.cfg = copy.deepcopy(student.cfg)
    teacher.freeze()
    teacher.unfreeze = _refuse_unfreeze
    return teacher


def _refuse_unfreeze():
    raise ConfigError("the teacher text encoder is permanently frozen")


def config_dict(cfg):
    return asdict(cfg)
