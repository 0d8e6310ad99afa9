import hashlib
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motalign.errors import ConfigError, FormatError
from motalign.skeleton import Skeleton, attention_mask, mirror_motion, mirror_positions, mirror_text, toy_skeleton
from motalign.synth import (
    CLASSES,
    SIGNATURE_VERBS,
    TEMPLATES,
    DatasetConfig,
    generate_dataset,
    generate_motion,
    mirror_sample,
    read_dataset,
    split_counts,
    split_sizes,
    write_dataset,
)


def chain_mask():
    # a 3-chain cannot host four leaf end effectors, so build its tree mask directly
    J = 3
    parents = (0, 0, 1)
    mask = np.eye(J, dtype=bool)
    for j in range(1, J):
        mask[j, parents[j]] = mask[parents[j], j] = True
    return mask


def test_chain_mask_matches_tree_edges():
    expected = {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (1, 2), (2, 1)}
    got = {tuple(ij) for ij in np.argwhere(chain_mask())}
    assert got == expected


def test_toy_skeleton_shape(skeleton):
    assert skeleton.joint_count == 14
    assert sorted(skeleton.end_effectors.values()) == [4, 7, 10, 13]


def test_tree_mask_without_cross_limb(skeleton):
    mask = attention_mask(skeleton, cross_limb=False)
    edges = {(j, skeleton.parents[j]) for j in range(1, 14)}
    for i, j in itertools.product(range(14), repeat=2):
        assert mask[i, j] == (i == j or (i, j) in edges or (j, i) in edges)


def test_cross_limb_links_hand_and_foot(skeleton):
    mask = attention_mask(skeleton, cross_limb=True)
    assert mask[4, 13] and mask[13, 4]
    assert not attention_mask(skeleton, cross_limb=False)[4, 13]


def test_cross_limb_adds_six_edges(skeleton):
    extra = attention_mask(skeleton, True) & ~attention_mask(skeleton, False)
    assert np.count_nonzero(extra) == 12  # six undirected edges


@pytest.mark.parametrize("cross", [True, False])
def test_mask_symmetric_reflexive(skeleton, cross):
    mask = attention_mask(skeleton, cross)
    assert np.array_equal(mask, mask.T) and mask.diagonal().all()


def test_cross_limb_strict_superset(skeleton):
    on, off = attention_mask(skeleton, True), attention_mask(skeleton, False)
    assert np.all(on >= off) and np.any(on & ~off)


def test_hand_foot_toggle(skeleton):
    narrow = attention_mask(skeleton, True, hand_foot=False)
    assert narrow[4, 7] and narrow[10, 13] and not narrow[4, 13]


def test_skeleton_validation():
    sk = toy_skeleton()
    with pytest.raises(ConfigError):
        Skeleton("bad", sk.joint_names, sk.parents, sk.offsets, {**sk.end_effectors, "left_hand": 3})


def test_generate_motion_deterministic():
    a = generate_motion("walk", T=40, seed=7).positions
    b = generate_motion("walk", T=40, seed=7).positions
    assert a.tobytes() == b.tobytes()


def test_seeds_change_motion():
    a = generate_motion("walk", T=40, seed=7).positions
    b = generate_motion("walk", T=40, seed=8).positions
    assert np.max(np.abs(a - b)) > 0.01


@pytest.mark.parametrize("cls", CLASSES)
def test_motion_shape_and_bounds(cls):
    for seed in range(5):
        pos = generate_motion(cls, T=40, seed=seed).positions
        assert pos.shape == (40, 14, 3)
        assert np.all(np.isfinite(pos)) and np.all(np.abs(pos) <= 3.0)


def test_unknown_class_lists_registered():
    with pytest.raises(ConfigError, match="registered classes"):
        generate_motion("moonwalk")


@pytest.mark.parametrize("cls", ["kick_left", "wave_left"])
def test_mirror_of_left_class_is_right_class(cls, skeleton):
    left = generate_motion(cls, T=40, seed=11)
    right = generate_motion(cls.replace("left", "right"), T=40, seed=11)
    mirrored = mirror_sample(left, skeleton)
    assert mirrored.class_label == right.class_label
    np.testing.assert_allclose(mirrored.positions, right.positions, rtol=0, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(CLASSES), st.integers(0, 2**31 - 2))
def test_mirror_is_involution(cls, seed):
    sk = toy_skeleton()
    m = generate_motion(cls, sk, T=8, seed=seed)
    assert mirror_motion(mirror_motion(m, sk), sk).positions.tobytes() == m.positions.tobytes()
    assert mirror_positions(mirror_positions(m.positions, sk), sk).tobytes() == m.positions.tobytes()


def test_mirror_text():
    assert mirror_text("wave left hand") == "wave right hand"
    assert mirror_text("left then right") == "right then left"
    assert mirror_text("a leftover sandwich") == "a leftover sandwich"


def test_templates_carry_signature_verbs():
    for cls in CLASSES:
        assert len(TEMPLATES[cls]) >= 4
        assert all(SIGNATURE_VERBS[cls] in t for t in TEMPLATES[cls])


def test_split_sizes_default():
    assert split_sizes(512, 0.80, 0.15) == (410, 76, 26)


def test_default_dataset():
    pairs = generate_dataset(DatasetConfig())
    assert len(pairs) == 512
    assert split_counts(pairs) == {"train": 410, "val": 76, "test": 26}
    for p in pairs:
        assert SIGNATURE_VERBS[p.motion.class_label] in p.text


def test_mirror_augment_doubles(small_pairs, small_data_config):
    doubled = generate_dataset(small_data_config(mirror_augment=True))
    assert len(doubled) == 2 * len(small_pairs)
    counts = split_counts(doubled)
    assert counts == {k: 2 * v for k, v in split_counts(small_pairs).items()}


def test_invalid_ratios():
    with pytest.raises(ConfigError):
        generate_dataset(DatasetConfig(train_ratio=0.8, val_ratio=0.3, test_ratio=0.05))


def test_dataset_file_is_byte_identical(tmp_path):
    cfg = DatasetConfig(samples_per_class=4, frames=6)
    digests = []
    for name in ("a.jsonl", "b.jsonl"):
        write_dataset(tmp_path / name, generate_dataset(cfg))
        digests.append(hashlib.sha256((tmp_path / name).read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_dataset_round_trip(tmp_path, small_pairs):
    write_dataset(tmp_path / "d.jsonl", small_pairs)
    back, header = read_dataset(tmp_path / "d.jsonl")
    assert header["skeleton"] == "toy14"
    assert [p.text for p in back] == [p.text for p in small_pairs]
    for a, b in zip(back, small_pairs):
        assert a.motion.positions.tobytes() == b.motion.positions.tobytes()
        assert a.split == b.split and a.motion.class_label == b.motion.class_label


def test_read_dataset_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"format": "something-else"}\n')
    with pytest.raises(FormatError):
        read_dataset(bad)
