"""Repeated-run evaluation of a trained state on a dataset split."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from .errors import ConfigError
from .rng import derive_seed
from .skeleton import get_skeleton
from .synth import regenerate, select_split

METRICS = ("top1", "top2", "top3", "fid", "mm_dist", "diversity", "multimodality")
DISTRACTORS = ("class", "caption", "any")


@dataclass
class EvalConfig:
    split: str = "heldout"
    runs: int = 20
    seed: int = 0
    pool_size: int = 32
    trials: int = 1
    mm_captions: int = 10
    diversity_pairs: int = None
    # which texts may serve as mismatches: other classes, other captions, or any other row
    distractors: str = "class"

    def validate(self):
        if self.distractors not in DISTRACTORS:
            raise ConfigError(f"distractors must be one of {DISTRACTORS}, got {self.distractors!r}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.pool_size < 2:
            raise ConfigError("pool_size must be >= 2")
        if self.trials < 1 or self.mm_captions < 1:
            raise ConfigError("trials and mm_captions must be >= 1")
        return self


@dataclass
class MetricsReport:
    values: dict
    sample_count: int
    pool_size: int
    runs: int
    config: dict = field(default_factory=dict)

    def mean(self, name):
        return self.values[name]["mean"]

    def ci95(self, name):
        return self.values[name]["ci95"]

    @property
    def r_precision(self):
        return tuple(self.mean(k) for k in ("top1", "top2", "top3"))

    def to_dict(self):
        return {
            **self.values,
            "sample_count": self.sample_count,
            "pool_size": self.pool_size,
            "runs": self.runs,
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def summarize(per_run):
    """Mean and 95% half-width (1.96 * std / sqrt(runs)) of each metric."""
    out = {}
    for name in METRICS:
        v = np.array([r[name] for r in per_run], dtype=np.float64)
        out[name] = {
            "mean": float(v.mean()),
            "ci95": float(1.96 * v.std() / np.sqrt(len(v))),
            "runs": [float(x) for x in v],
        }
    return out


def _labels(keys):
    ids = {}
    return np.array([ids.setdefault(k, len(ids)) for k in keys])


def encode_pairs(state, pairs, distractors="class"):
    """Motion and student-text embeddings plus distractor groups.

    Identical captions share one encoded row. Captions are class-level
    paraphrases, so by default a text of the probe's own class counts as an
    equally valid description and never serves as a mismatched candidate.
    """
    motion = state.motion.encode(np.stack([p.motion.positions for p in pairs]))
    captions = [p.text for p in pairs]
    uniq = list(dict.fromkeys(captions))
    text = state.student.encode(uniq)[_labels(captions)]
    if distractors == "class":
        groups = _labels(p.motion.class_label for p in pairs)
    elif distractors == "caption":
        groups = _labels(captions)
    else:
        groups = np.arange(len(pairs))
    return motion, text, groups


def evaluate(state, pairs, ecfg=None):
    ecfg = (ecfg or EvalConfig()).validate()
    subset = select_split(pairs, ecfg.split)
    if not subset:
        raise ConfigError(f"split {ecfg.split!r} is empty")
    if len(subset) < ecfg.pool_size:
        raise ConfigError(f"split {ecfg.split!r} has {len(subset)} pairs, R-Precision needs {ecfg.pool_size}")
    skeleton = get_skeleton(state.cfg.skeleton)
    motion, text, groups = encode_pairs(state, subset, ecfg.distractors)
    T = subset[0].motion.frames
    mm = metrics.mm_dist(motion, text)

    per_run = []
    for r in range(ecfg.runs):
        run_seed = derive_seed(ecfg.seed, "eval-run", r)
        top = metrics.r_precision(motion, text, ecfg.pool_size, ecfg.trials, run_seed, groups)
        fresh = np.stack([
            regenerate(p.motion.class_label, None, p.motion.mirrored, skeleton, T,
                       derive_seed(run_seed, "fresh", i)).positions
            for i, p in enumerate(subset)
        ])
        fid = metrics.fid(motion, state.motion.encode(fresh))
        div = metrics.diversity(motion, ecfg.diversity_pairs, run_seed)
        picks = np.random.default_rng(derive_seed(run_seed, "mm-pick")).choice(
            len(subset), size=min(ecfg.mm_captions, len(subset)), replace=False
        )
        mm_groups = []
        for j in picks:
            p = subset[j]
            variants = np.stack([
                regenerate(p.motion.class_label, None, p.motion.mirrored, skeleton, T,
                           derive_seed(run_seed, "mm", int(j), k)).positions
                for k in range(metrics.MM_GROUP_SIZE)
            ])
            mm_groups.append(state.motion.encode(variants))
        per_run.append({
            "top1": top[0], "top2": top[1], "top3": top[2], "fid": fid, "mm_dist": mm,
            "diversity": div, "multimodality": metrics.multimodality(mm_groups),
        })
    return MetricsReport(summarize(per_run), len(subset), ecfg.pool_size, ecfg.runs, asdict(ecfg))


def student_teacher_mse(state, captions):
    """Mean squared distance between student and teacher text projections."""
    s = state.student.encode_projections(list(captions))
    t = state.teacher.encode_projections(list(captions))
    return float(((s - t) ** 2).sum(axis=1).mean())
