"""Skeleton topology, joint attention masks and left/right mirroring."""

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimensionError

END_EFFECTOR_LABELS = ("left_hand", "right_hand", "left_foot", "right_foot")


@dataclass(frozen=True)
class Skeleton:
    name: str
    joint_names: tuple
    parents: tuple
    offsets: np.ndarray = field(compare=False, repr=False)
    end_effectors: dict = field(compare=False)

    def __post_init__(self):
        J = len(self.joint_names)
        if len(self.parents) != J or self.offsets.shape != (J, 3):
            raise DimensionError("joint_names, parents and offsets disagree on joint count")
        if self.parents[0] != 0:
            raise ConfigError("joint 0 must be the root (its own parent)")
        for j in range(1, J):
            if not 0 <= self.parents[j] < j:
                raise ConfigError(f"joint {j} must have a parent with a smaller index")
        ee = [self.end_effectors[k] for k in END_EFFECTOR_LABELS]
        if len(set(ee)) != 4:
            raise ConfigError("end effectors must be four distinct joints")
        leaves = set(range(J)) - set(self.parents[1:])
        for label in END_EFFECTOR_LABELS:
            if self.end_effectors[label] not in leaves:
                raise ConfigError(f"end effector {label} is not a leaf joint")

    @property
    def joint_count(self):
        return len(self.joint_names)

    def mirror_permutation(self):
        """Index map sending each joint to its left/right counterpart (or itself)."""
        lookup = {n: i for i, n in enumerate(self.joint_names)}
        perm = []
        for n in self.joint_names:
            if n.startswith("left_"):
                perm.append(lookup["right_" + n[5:]])
            elif n.startswith("right_"):
                perm.append(lookup["left_" + n[6:]])
            else:
                perm.append(lookup[n])
        return np.array(perm)


def toy_skeleton():
    """14-joint body: root, spine, two three-joint arms and two three-joint legs."""
    names = (
        "root", "spine",
        "left_shoulder", "left_elbow", "left_hand",
        "right_shoulder", "right_elbow", "right_hand",
        "left_hip", "left_knee", "left_foot",
        "right_hip", "right_knee", "right_foot",
    )
    parents = (0, 0, 1, 2, 3, 1, 5, 6, 0, 8, 9, 0, 11, 12)
    # +x is the body's left, +y up, +z forward; root offset is its rest position
    offsets = np.array([
        [0.0, 0.95, 0.0], [0.0, 0.50, 0.0],
        [0.20, 0.05, 0.0], [0.0, -0.30, 0.0], [0.0, -0.28, 0.0],
        [-0.20, 0.05, 0.0], [0.0, -0.30, 0.0], [0.0, -0.28, 0.0],
        [0.10, -0.05, 0.0], [0.0, -0.45, 0.0], [0.0, -0.45, 0.0],
        [-0.10, -0.05, 0.0], [0.0, -0.45, 0.0], [0.0, -0.45, 0.0],
    ])
    ee = {"left_hand": 4, "right_hand": 7, "left_foot": 10, "right_foot": 13}
    return Skeleton("toy14", names, parents, offsets, ee)


SKELETONS = {"toy14": toy_skeleton}


def get_skeleton(name):
    try:
        return SKELETONS[name]()
    except KeyError:
        raise ConfigError(f"unknown skeleton {name!r}; registered: {sorted(SKELETONS)}") from None


def attention_mask(skeleton, cross_limb=True, hand_foot=True):
    """Boolean J x J allow-mask: self, parent/child, plus end-effector links.

    With ``cross_limb`` the end effectors are linked to each other; with
    ``hand_foot=False`` only hand-hand and foot-foot links are added.
    """
    J = skeleton.joint_count
    mask = np.eye(J, dtype=bool)
    for j in range(1, J):
        p = skeleton.parents[j]
        mask[j, p] = mask[p, j] = True
    if cross_limb:
        ee = skeleton.end_effectors
        if hand_foot:
            group = [ee[k] for k in END_EFFECTOR_LABELS]
            pairs = [(a, b) for a in group for b in group]
        else:
            pairs = [(ee["left_hand"], ee["right_hand"]), (ee["left_foot"], ee["right_foot"])]
            pairs += [(b, a) for a, b in pairs]
        for a, b in pairs:
            mask[a, b] = True
    return mask


_LR = re.compile(r"\b(left|right|Left|Right|LEFT|RIGHT)\b")
_SWAP = {"left": "right", "right": "left", "Left": "Right", "Right": "Left", "LEFT": "RIGHT", "RIGHT": "LEFT"}


def mirror_text(caption):
    """Swap the words left and right."""
    return _LR.sub(lambda m: _SWAP[m.group(0)], caption)


def mirror_positions(positions, skeleton):
    """Negate x and swap left/right joint trajectories of a (T, J, 3) array."""
    positions = np.asarray(positions)
    if positions.shape[-2] != skeleton.joint_count:
        raise DimensionError(
            f"motion has {positions.shape[-2]} joints, skeleton {skeleton.name} has {skeleton.joint_count}"
        )
    out = positions[..., skeleton.mirror_permutation(), :].copy()
    out[..., 0] = -out[..., 0]
    return out


def mirror_motion(motion, skeleton):
    return replace(
        motion,
        positions=mirror_positions(motion.positions, skeleton),
        mirrored=not motion.mirrored,
    )
