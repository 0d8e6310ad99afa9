"""Procedural motion-text dataset standing in for a motion capture corpus.

Motions are sinusoidal joint-angle animations pushed through forward
kinematics. Each sample draws a variant (tempo x extent), a small continuous
jitter and one of its class's caption paraphrases from its seed.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, FormatError
from .rng import derive_rng, derive_seed
from .skeleton import get_skeleton, mirror_positions, mirror_text, toy_skeleton

FORMAT_NAME = "motalign-dataset"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")

TEMPO_CYCLES = (1.0, 2.0)
EXTENT_SCALE = (0.55, 1.0)

# four paraphrases per class; each sample picks one from its seed
TEMPLATES = {
    "walk": (
        "a person walks forward",
        "someone is walking ahead",
        "a figure takes steps as it walks",
        "the person walks in a straight line",
    ),
    "jump": (
        "a person jumps up and down",
        "someone jumps in place",
        "a figure bends its knees and jumps",
        "the person keeps jumping on the spot",
    ),
    "wave_left": (
        "a person waves the left hand",
        "someone raises the left arm and waves",
        "a figure waves hello with its left hand",
        "the person waves with the left arm again",
    ),
    "kick_left": (
        "a person kicks with the left foot",
        "someone kicks forward using the left leg",
        "a figure swings the left leg in a kick",
        "the person throws a kick with the left leg",
    ),
    "clap": (
        "a person claps both hands",
        "someone is clapping in front of the chest",
        "a figure brings its hands together to clap",
        "the person claps hands repeatedly",
    ),
    "spin": (
        "a person spins around",
        "someone turns in a spin",
        "a figure spins on the spot with arms out",
        "the person is spinning in place",
    ),
}
TEMPLATES["wave_right"] = tuple(mirror_text(t) for t in TEMPLATES["wave_left"])
TEMPLATES["kick_right"] = tuple(mirror_text(t) for t in TEMPLATES["kick_left"])

SIGNATURE_VERBS = {
    "walk": "walk", "jump": "jump", "wave_left": "wave", "wave_right": "wave",
    "kick_left": "kick", "kick_right": "kick", "clap": "clap", "spin": "spin",
}
MIRROR_CLASS = {"wave_left": "wave_right", "wave_right": "wave_left", "kick_left": "kick_right", "kick_right": "kick_left"}
# right-sided classes are defined as the mirror image of their left twin
_MIRROR_SOURCE = {"wave_right": "wave_left", "kick_right": "kick_left"}

CLASSES = ("walk", "jump", "wave_left", "wave_right", "kick_left", "kick_right", "clap", "spin")


@dataclass(frozen=True)
class MotionSequence:
    positions: np.ndarray = field(repr=False)
    class_label: str
    seed: int
    variant: int = 0
    mirrored: bool = False
    skeleton: str = "toy14"

    @property
    def frames(self):
        return self.positions.shape[0]

    @property
    def joints(self):
        return self.positions.shape[1]


@dataclass(frozen=True)
class MotionTextPair:
    motion: MotionSequence
    text: str
    split: str

    def __post_init__(self):
        if not self.text.strip():
            raise ConfigError("caption must be non-empty")
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}; expected one of {SPLITS}")


@dataclass
class DatasetConfig:
    classes: tuple = CLASSES
    samples_per_class: int = 64
    frames: int = 40
    seed: int = 0
    mirror_augment: bool = False
    train_ratio: float = 0.80
    val_ratio: float = 0.15
    test_ratio: float = 0.05
    skeleton: str = "toy14"

    def validate(self):
        unknown = [c for c in self.classes if c not in TEMPLATES]
        if unknown:
            raise ConfigError(f"unknown motion class {unknown[0]!r}; registered classes: {list(CLASSES)}")
        if not self.classes:
            raise ConfigError("at least one class is required")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError("classes must be distinct")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if self.frames < 2:
            raise ConfigError("frames must be >= 2")
        ratios = (self.train_ratio, self.val_ratio, self.test_ratio)
        if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must be non-negative and sum to 1, got {ratios}")
        get_skeleton(self.skeleton)
        return self


# ----------------------------------------------------------------- kinematics


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def _swing(a):
    """Rotate a downward-pointing limb forward (+z) by ``a`` radians."""
    return _rx(-a)


def forward_kinematics(skeleton, root_pos, local_rot):
    """Positions (T, J, 3) from root translation (T, 3) and local rotations (T, J, 3, 3)."""
    T, J = local_rot.shape[:2]
    glob = np.empty_like(local_rot)
    pos = np.empty((T, J, 3))
    glob[:, 0] = local_rot[:, 0]
    pos[:, 0] = root_pos
    for j in range(1, J):
        p = skeleton.parents[j]
        glob[:, j] = glob[:, p] @ local_rot[:, j]
        pos[:, j] = pos[:, p] + glob[:, p] @ skeleton.offsets[j]
    return pos


def _animate(cls, T, variant, rng, skeleton):
    tempo, extent = variant % 2, variant // 2
    phase = rng.uniform(0.0, 2 * np.pi)
    amp = EXTENT_SCALE[extent] * rng.uniform(0.9, 1.1)
    cycles = TEMPO_CYCLES[tempo] * rng.uniform(0.95, 1.05)
    u = np.arange(T) / T
    w = 2 * np.pi * cycles * u + phase
    s, c = np.sin(w), np.cos(w)

    J = skeleton.joint_count
    idx = {n: i for i, n in enumerate(skeleton.joint_names)}
    rot = np.broadcast_to(np.eye(3), (T, J, 3, 3)).copy()
    root = np.tile(skeleton.offsets[0], (T, 1))

    def set_rot(name, R):
        rot[:, idx[name]] = R

    if cls == "walk":
        set_rot("left_hip", _swing(0.5 * amp * s))
        set_rot("right_hip", _swing(-0.5 * amp * s))
        set_rot("left_knee", _swing(-0.4 * amp * (1 + c) / 2))
        set_rot("right_knee", _swing(-0.4 * amp * (1 - c) / 2))
        set_rot("left_shoulder", _swing(-0.4 * amp * s))
        set_rot("right_shoulder", _swing(0.4 * amp * s))
        root[:, 2] += 0.8 * amp * cycles * (u - 0.5)
        root[:, 1] += 0.02 * amp * np.sin(2 * w)
    elif cls == "jump":
        h = np.abs(np.sin(0.5 * w))
        root[:, 1] += 0.35 * amp * h - 0.1 * amp * (1 - h)
        bend = 0.6 * amp * (1 - h)
        set_rot("left_hip", _swing(0.5 * bend))
        set_rot("right_hip", _swing(0.5 * bend))
        set_rot("left_knee", _swing(-bend))
        set_rot("right_knee", _swing(-bend))
        set_rot("left_shoulder", _swing(1.2 * amp * h))
        set_rot("right_shoulder", _swing(1.2 * amp * h))
    elif cls == "wave_left":
        set_rot("left_shoulder", _rz(np.full(T, 1.4 + 0.4 * amp)))
        set_rot("left_elbow", _rz(0.7 * amp * s))
        set_rot("right_shoulder", _rz(np.full(T, -0.1)))
    elif cls == "kick_left":
        pulse = np.clip(s, 0.0, None) ** 2
        set_rot("left_hip", _swing(1.2 * amp * pulse))
        set_rot("left_knee", _swing(-0.5 * amp * (1 - pulse) * np.clip(s, 0, None) - 0.1))
        set_rot("right_knee", _swing(np.full(T, -0.1)))
        set_rot("left_shoulder", _swing(-0.3 * amp * pulse))
        set_rot("right_shoulder", _rz(-0.3 * amp * pulse))
    elif cls == "clap":
        opening = 0.05 + 0.6 * amp * (1 + s) / 2
        set_rot("left_shoulder", _ry(opening) @ _swing(np.full(T, 1.35)))
        set_rot("right_shoulder", _ry(-opening) @ _swing(np.full(T, 1.35)))
        set_rot("left_elbow", _ry(np.full(T, -0.5)))
        set_rot("right_elbow", _ry(np.full(T, 0.5)))
    elif cls == "spin":
        yaw = np.pi * amp * cycles * u + phase
        set_rot("root", _ry(yaw))
        set_rot("left_shoulder", _rz(np.full(T, 1.1)))
        set_rot("right_shoulder", _rz(np.full(T, -1.1)))
        root[:, 1] += 0.02 * np.sin(2 * w)
    else:  # pragma: no cover - guarded by caller
        raise ConfigError(f"no animation for class {cls!r}")
    return forward_kinematics(skeleton, root, rot)


def generate_motion(cls, skeleton=None, T=40, seed=0, variant=None):
    """Deterministic motion for ``(cls, T, seed)``; ``variant`` overrides the drawn one."""
    if cls not in TEMPLATES:
        raise ConfigError(f"unknown motion class {cls!r}; registered classes: {list(CLASSES)}")
    skeleton = skeleton or toy_skeleton()
    if T < 1:
        raise ConfigError("T must be positive")
    base = _MIRROR_SOURCE.get(cls, cls)
    rng = derive_rng(seed, "motion", base)
    drawn = int(rng.integers(0, 4))
    variant = drawn if variant is None else int(variant)
    if not 0 <= variant < 4:
        raise ConfigError(f"variant must be in 0..3, got {variant}")
    pos = _animate(base, T, variant, rng, skeleton)
    if base != cls:
        pos = mirror_positions(pos, skeleton)
    return MotionSequence(pos, cls, int(seed), variant, False, skeleton.name)


def caption_for(cls, seed, mirrored=False):
    templates = TEMPLATES[cls]
    text = templates[derive_seed(seed, "caption") % len(templates)]
    return mirror_text(text) if mirrored else text


def mirror_sample(motion, skeleton):
    """Mirror a motion; left/right classes swap label, others flip ``mirrored``."""
    pos = mirror_positions(motion.positions, skeleton)
    if motion.class_label in MIRROR_CLASS:
        return replace(motion, positions=pos, class_label=MIRROR_CLASS[motion.class_label])
    return replace(motion, positions=pos, mirrored=not motion.mirrored)


def regenerate(cls, variant, mirrored, skeleton, T, seed):
    """Fresh motion of the same class under a new seed (``variant=None`` redraws it)."""
    m = generate_motion(cls, skeleton, T, seed, variant)
    return mirror_sample(m, skeleton) if mirrored else m


# -------------------------------------------------------------------- dataset


def split_sizes(n, train_ratio, val_ratio):
    """Train rounds to nearest, val floors, test takes the remainder."""
    n_train = int(np.floor(n * train_ratio + 0.5))
    n_val = int(np.floor(n * val_ratio))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def generate_dataset(cfg):
    cfg.validate()
    skeleton = get_skeleton(cfg.skeleton)
    base = []
    for cls in cfg.classes:
        for i in range(cfg.samples_per_class):
            seed = derive_seed(cfg.seed, "sample", cls, i)
            base.append(generate_motion(cls, skeleton, cfg.frames, seed))
    n_train, n_val, _ = split_sizes(len(base), cfg.train_ratio, cfg.val_ratio)
    order = derive_rng(cfg.seed, "split").permutation(len(base))
    split_of = np.empty(len(base), dtype=object)
    split_of[order[:n_train]] = "train"
    split_of[order[n_train:n_train + n_val]] = "val"
    split_of[order[n_train + n_val:]] = "test"

    pairs = []
    for m, split in zip(base, split_of):
        pairs.append(MotionTextPair(m, caption_for(m.class_label, m.seed), split))
    if cfg.mirror_augment:
        # mirrored copies inherit the source split so no motion leaks across splits
        for m, split in zip(base, split_of):
            mm = mirror_sample(m, skeleton)
            pairs.append(MotionTextPair(mm, caption_for(mm.class_label, mm.seed, mm.mirrored), split))
    return pairs


def split_counts(pairs):
    return {s: sum(p.split == s for p in pairs) for s in SPLITS}


def select_split(pairs, split):
    """Pairs in ``split``; ``heldout`` means val and test together."""
    wanted = ("val", "test") if split == "heldout" else (split,)
    if split != "heldout" and split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}; expected one of {SPLITS + ('heldout',)}")
    return [p for p in pairs if p.split in wanted]


def write_dataset(path, pairs, skeleton_name="toy14"):
    header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "skeleton": skeleton_name}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for p in pairs:
            m = p.motion
            rec = {
                "class": m.class_label,
                "caption": p.text,
                "split": p.split,
                "seed": m.seed,
                "T": m.frames,
                "J": m.joints,
                "variant": m.variant,
                "mirrored": m.mirrored,
                "positions": [float(v) for v in m.positions.reshape(-1)],
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_dataset(path):
    """Return ``(pairs, header)`` from a dataset file."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: bad header line: {e}") from None
    if header.get("format") != FORMAT_NAME:
        raise FormatError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {header.get('version')}")
    skeleton = get_skeleton(header.get("skeleton", "toy14"))
    pairs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            T, J = int(rec["T"]), int(rec["J"])
            pos = np.array(rec["positions"], dtype=np.float64)
            if pos.size != T * J * 3 or J != skeleton.joint_count:
                raise FormatError(f"{path}:{lineno}: positions do not match T={T}, J={J}")
            if not np.all(np.isfinite(pos)):
                raise FormatError(f"{path}:{lineno}: non-finite positions")
            motion = MotionSequence(
                pos.reshape(T, J, 3), rec["class"], int(rec["seed"]),
                int(rec.get("variant", 0)), bool(rec.get("mirrored", False)), skeleton.name,
            )
            pairs.append(MotionTextPair(motion, rec["caption"], rec["split"]))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(f"{path}:{lineno}: bad record: {e}") from None
    return pairs, header
