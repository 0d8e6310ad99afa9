"""Two-phase fine-tuning: frozen student text encoder, then joint training.

During the first ``freeze_epochs`` epochs only the motion encoder and the
logit scale learn; the student text encoder is bit-identical to the teacher,
so the tethering term is exactly zero. Afterwards the student is unfrozen
and all three loss terms drive the update.
"""

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import Tape, backward, l2_normalize_rows
from .checkpoint import Checkpoint
from .encoders import (
    MotionEncoder,
    MotionEncoderConfig,
    TextEncoder,
    TextEncoderConfig,
    Vocab,
    build_vocab,
    clone_teacher,
)
from .errors import ConfigError, FormatError, NumericalError
from .losses import ContrastiveHead, LossWeights, alignment_loss, contrastive_loss, distill_loss, total_loss
from .optim import AdamWConfig, clip_grad_norm, new_state, optimizer_step
from .rng import derive_rng
from .skeleton import get_skeleton

log = logging.getLogger(__name__)

FORMAT = "motalign-checkpoint"


@dataclass
class TrainConfig:
    total_epochs: int = 10
    freeze_epochs: int = 7
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    lambda_distill: float = 0.4
    seed: int = 0
    positional_encoding: bool = True
    cross_limb: bool = True
    dense_w: bool = False
    naive_mode: bool = False
    dim: int = 64
    width: int = 64
    heads: int = 4
    spatial_layers: int = 2
    temporal_layers: int = 2
    text_layers: int = 2
    context_length: int = 32
    skeleton: str = "toy14"

    def validate(self):
        if self.total_epochs < 1:
            raise ConfigError("total_epochs must be >= 1")
        if not 0 <= self.freeze_epochs <= self.total_epochs:
            raise ConfigError(f"freeze_epochs must lie in [0, total_epochs={self.total_epochs}]")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for a contrastive signal")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        LossWeights(self.lambda_distill)
        return self

    @property
    def use_positional_encoding(self):
        return self.positional_encoding and not self.naive_mode

    @property
    def use_cross_limb(self):
        return self.cross_limb and not self.naive_mode

    def motion_config(self):
        return MotionEncoderConfig(
            width=self.width, heads=self.heads, spatial_layers=self.spatial_layers,
            temporal_layers=self.temporal_layers, dim=self.dim,
            positional_encoding=self.use_positional_encoding, cross_limb=self.use_cross_limb,
        )

    def text_config(self):
        return TextEncoderConfig(
            width=self.width, heads=self.heads, layers=self.text_layers,
            dim=self.dim, context_length=self.context_length,
        )

    def adamw(self):
        return AdamWConfig(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class TrainState:
    """Everything that evolves during training, plus the frozen teacher."""

    def __init__(self, cfg, vocab, motion, student, teacher, head, opt_state=None, epoch=0, history=None):
        self.cfg = cfg
        self.vocab = vocab
        self.motion = motion
        self.student = student
        self.teacher = teacher
        self.head = head
        self.opt_state = opt_state if opt_state is not None else new_state()
        self.epoch = epoch
        self.history = history if history is not None else []

    def named_params(self):
        """Trainable parameter table with namespaced names (teacher excluded)."""
        out = {f"motion.{k}": t for k, t in self.motion.params.items()}
        out.update({f"student.{k}": t for k, t in self.student.params.items()})
        out.update(self.head.params)
        return out


def init_state(cfg, captions):
    cfg.validate()
    skeleton = get_skeleton(cfg.skeleton)
    vocab = build_vocab(captions)
    motion = MotionEncoder(skeleton, cfg.motion_config(), derive_rng(cfg.seed, "init", "motion"))
    student = TextEncoder(vocab, cfg.text_config(), derive_rng(cfg.seed, "init", "text"))
    teacher = clone_teacher(student)
    head = ContrastiveHead(cfg.dim, dense=cfg.dense_w)
    return TrainState(cfg, vocab, motion, student, teacher, head)


def _decay_names(names):
    # matrices only: biases, norms and the logit scale are left alone
    return {n for n in names if not n.endswith((".b", ".g")) and not n.startswith("head.")}


def train_step(state, positions, captions, phase):
    cfg = state.cfg
    weights = LossWeights(cfg.lambda_distill)
    with Tape() as tape:
        z_m = state.motion.forward(positions)
        u_s = state.student.project(captions)
        z_s = l2_normalize_rows(u_s)
        c = contrastive_loss(z_m, z_s, state.head)
        if cfg.naive_mode:
            breakdown = total_loss(c, None, None, weights)
        else:
            u_t = state.teacher.project(captions)
            breakdown = total_loss(c, distill_loss(u_s, u_t), alignment_loss(z_m, z_s), weights)
        backward(breakdown.tensor, tape)

    params = state.named_params()
    trainable = {n: t for n, t in params.items() if t.requires_grad}
    grads = {n: (t.grad if t.grad is not None else np.zeros_like(t.data)) for n, t in trainable.items()}
    for t in params.values():
        t.grad = None
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise NumericalError("non-finite gradient")
    clip_grad_norm(grads, cfg.grad_clip)
    optimizer_step(trainable, grads, state.opt_state, cfg.adamw(), _decay_names(trainable))
    state.head.clamp()
    return breakdown


def run_epoch(state, train_pairs):
    cfg = state.cfg
    phase = 1 if state.epoch < cfg.freeze_epochs else 2
    if phase == 1:
        state.student.freeze()
    else:
        state.student.unfreeze()
    state.motion.set_trainable(True)
    state.head.log_scale.requires_grad = True
    if cfg.dense_w:
        state.head.params["head.W"].requires_grad = True

    order = derive_rng(cfg.seed, "shuffle", state.epoch).permutation(len(train_pairs))
    n_batches = len(order) // cfg.batch_size
    sums = {"contrastive": 0.0, "distill": 0.0, "alignment": 0.0, "total": 0.0}
    for b in range(n_batches):
        idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
        batch = [train_pairs[i] for i in idx]
        positions = np.stack([p.motion.positions for p in batch])
        captions = [p.text for p in batch]
        try:
            br = train_step(state, positions, captions, phase)
        except NumericalError as e:
            raise NumericalError(f"epoch {state.epoch + 1}, batch {b}: {e}") from None
        for k in sums:
            sums[k] += getattr(br, k)
    state.epoch += 1
    entry = {"epoch": state.epoch, "phase": phase}
    entry.update({k: v / n_batches for k, v in sums.items()})
    if cfg.naive_mode:
        entry["distill"] = None
        entry["alignment"] = None
    entry["logit_scale"] = state.head.scale
    state.history.append(entry)
    log.info("epoch %d phase %d total %.6f", state.epoch, phase, entry["total"])
    return entry


def train(cfg, pairs, state=None, until_epoch=None, on_epoch=None):
    """Train on the ``train`` split; returns the final state.

    ``state`` resumes a previous run; ``until_epoch`` stops early (used for
    interrupted runs and resumability checks).
    """
    cfg.validate()
    train_pairs = [p for p in pairs if p.split == "train"]
    if not train_pairs:
        raise ConfigError("the dataset has no train split")
    if len(train_pairs) < cfg.batch_size:
        raise ConfigError(f"train split ({len(train_pairs)}) is smaller than one batch ({cfg.batch_size})")
    if state is None:
        state = init_state(cfg, [p.text for p in pairs])
    stop = cfg.total_epochs if until_epoch is None else min(until_epoch, cfg.total_epochs)
    while state.epoch < stop:
        entry = run_epoch(state, train_pairs)
        if on_epoch is not None:
            on_epoch(entry)
    return state


# ---------------------------------------------------------------- persistence


def to_checkpoint(state, dataset_hash=None):
    tensors = {}
    for prefix, enc in (("motion.", state.motion), ("student.", state.student), ("teacher.", state.teacher)):
        for k, t in enc.params.items():
            tensors[prefix + k] = t.data
    for k, t in state.head.params.items():
        tensors[k] = t.data
    for name in sorted(state.opt_state["m"]):
        tensors[f"adam.m.{name}"] = state.opt_state["m"][name]
        tensors[f"adam.v.{name}"] = state.opt_state["v"][name]
        tensors[f"adam.t.{name}"] = np.array(float(state.opt_state["t"][name]))
    meta = {
        "format": FORMAT,
        "config": asdict(state.cfg),
        "epoch": state.epoch,
        "rng": {"scheme": "seed-counter", "seed": state.cfg.seed, "counter": state.epoch},
        "vocab": state.vocab.tokens[4:],
        "history": state.history,
    }
    if dataset_hash is not None:
        meta["dataset_sha256"] = dataset_hash
    return Checkpoint(meta, tensors)


def from_checkpoint(ckpt):
    meta = ckpt.meta
    if meta.get("format") != FORMAT:
        raise FormatError("checkpoint does not hold a training state")
    cfg = TrainConfig.from_dict(meta["config"])
    skeleton = get_skeleton(cfg.skeleton)
    vocab = Vocab(meta["vocab"])
    rng = np.random.default_rng(0)  # overwritten by stored values
    motion = MotionEncoder(skeleton, cfg.motion_config(), rng)
    student = TextEncoder(vocab, cfg.text_config(), rng)
    teacher = TextEncoder(vocab, cfg.text_config(), rng)
    head = ContrastiveHead(cfg.dim, dense=cfg.dense_w)
    t = ckpt.tensors
    motion.load_state(t, "motion.")
    student.load_state(t, "student.")
    teacher.load_state(t, "teacher.")
    teacher = clone_teacher(teacher)
    for k, p in head.params.items():
        p.data = np.asarray(t[k], dtype=np.float64).copy()
    opt = new_state()
    for key, arr in t.items():
        if key.startswith("adam.m."):
            name = key[len("adam.m."):]
            opt["m"][name] = arr.copy()
            opt["v"][name] = t["adam.v." + name].copy()
            opt["t"][name] = int(t["adam.t." + name])
    return TrainState(cfg, vocab, motion, student, teacher, head, opt, int(meta["epoch"]), list(meta["history"]))
