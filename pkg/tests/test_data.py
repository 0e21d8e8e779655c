import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otter.data import (
    CLASSES,
    FilePool,
    SynthConfig,
    SynthPool,
    inject_frame_noise,
    inject_sample_noise,
    inject_visual_noise,
    read_manifest,
    read_otv,
    sample_episode,
    sample_episode_keys,
    synth_generate,
    write_manifest,
    write_otv,
)
from otter.data.noise import corrupted_positions, noisy_frame_positions
from otter.data.synth import centroid_track, field_of_view

CFG = SynthConfig(height=32, width=32)
LABEL = {name: i for i, name in enumerate(CLASSES)}


# -- generator ------------------------------------------------------------


def test_generator_is_deterministic():
    a = synth_generate(CFG, 11, LABEL["up"])
    b = synth_generate(CFG, 11, LABEL["up"])
    assert a.clip.tobytes() == b.clip.tobytes() and np.array_equal(a.mask, b.mask)
    assert a.clip.shape == (8, 3, 32, 32) and a.clip.dtype == np.float32


def test_right_moves_right_at_level_zero():
    cfg = SynthConfig(fov_level=0)
    for seed in range(5):
        cols = centroid_track(synth_generate(cfg, seed, LABEL["right"]).mask)[:, 1]
        assert np.all(np.diff(cols) > 0)


def test_reversed_left_clip_is_a_right_trajectory():
    cfg = SynthConfig(fov_level=0)
    for seed in range(5):
        left = synth_generate(cfg, seed, LABEL["left"])
        cols = centroid_track(left.mask[::-1])[:, 1]
        assert np.all(np.diff(cols) > 0)


def test_vertical_and_scale_classes():
    cfg = SynthConfig(fov_level=0)
    rows = centroid_track(synth_generate(cfg, 3, LABEL["down"]).mask)[:, 0]
    assert np.all(np.diff(rows) > 0)
    area = synth_generate(cfg, 3, LABEL["approach"]).mask.sum(axis=(1, 2))
    assert area[-1] > area[0]
    area = synth_generate(cfg, 3, LABEL["recede"]).mask.sum(axis=(1, 2))
    assert area[-1] < area[0]


def test_orbit_direction():
    cfg = SynthConfig(fov_level=0)
    for name, sign in (("clockwise", 1), ("counterclockwise", -1)):
        track = centroid_track(synth_generate(cfg, 4, LABEL[name]).mask)
        c = track.mean(0)
        ang = np.unwrap(np.arctan2(track[:, 0] - c[0], track[:, 1] - c[1]))
        assert np.all(sign * np.diff(ang) > 0)


def test_wider_view_shrinks_subject():
    for seed in range(5):
        a0 = synth_generate(SynthConfig(fov_level=0), seed, 1).mask.mean()
        a4 = synth_generate(SynthConfig(fov_level=4), seed, 1).mask.mean()
        assert a4 < a0


def test_config_validation():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            SynthConfig(subject_fraction=bad)
    with pytest.raises(ValueError):
        SynthConfig(fov_level=5)
    with pytest.raises(ValueError):
        SynthConfig(classes=("left", "right", "up", "down"))
    with pytest.raises(ValueError):
        synth_generate(CFG, 0, label=len(CLASSES))


def test_field_of_view_formula():
    assert field_of_view(2.0, 1.0) == pytest.approx(90.0)


# -- episodes -------------------------------------------------------------


POOL = SynthPool(CFG, per_class=6, seed=3, cache=64)


def test_five_way_one_shot_shape():
    ep = sample_episode(POOL, 5, 1, 2, seed=0)
    assert ep.way == 5 and ep.shot == 1
    assert len(set(ep.class_ids)) == 5
    assert len(ep.queries) == 10
    assert sorted(ep.query_targets.tolist()) == sorted(list(range(5)) * 2)
    for q, t in zip(ep.queries, ep.query_targets):
        assert q.label == ep.class_ids[t]


def test_support_and_query_never_overlap():
    for seed in range(30):
        keys = sample_episode_keys(POOL, 5, 2, 3, seed)
        support = {k for row in keys.support_keys for k in row}
        assert not support & set(keys.query_keys)
        assert len(support) == 10


def test_insufficient_pool_errors():
    with pytest.raises(ValueError):
        sample_episode_keys(POOL, 5, 6, 1, 0)
    with pytest.raises(ValueError):
        sample_episode_keys(POOL, 9, 1, 1, 0)


def test_any_shot_covers_one_to_five():
    pool = SynthPool(CFG, per_class=10, seed=0)
    shots = {len(sample_episode_keys(pool, 5, None, 1, s, any_shot=True).support_keys[0]) for s in range(200)}
    assert shots == {1, 2, 3, 4, 5}


def test_sampling_is_deterministic():
    a = sample_episode_keys(POOL, 5, 1, 1, 42)
    b = sample_episode_keys(POOL, 5, 1, 1, 42)
    assert a.support_keys == b.support_keys and a.query_keys == b.query_keys


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**40))
def test_episode_invariants_property(N, K, Q, seed):
    keys = sample_episode_keys(POOL, N, K, Q, seed)
    assert len(set(keys.class_ids)) == N
    flat = [k for row in keys.support_keys for k in row] + keys.query_keys
    assert len(flat) == len(set(flat))
    for local, row in enumerate(keys.support_keys):
        assert all(label == keys.class_ids[local] for label, _ in row)
    for (label, _), t in zip(keys.query_keys, keys.query_targets):
        assert label == keys.class_ids[t]


# -- noise ----------------------------------------------------------------


def test_sample_noise_counts_and_determinism():
    pool = SynthPool(CFG, per_class=30, seed=1)
    ep = sample_episode(pool, 5, 10, 1, seed=0)
    assert inject_sample_noise(ep, 0.0, 0) is ep
    pos = corrupted_positions(ep, 0.4, 7)
    assert all(len(p) == 4 for p in pos)
    noisy = inject_sample_noise(ep, 0.4, 7)
    for c in range(5):
        changed = [noisy.support[c][k].label != ep.class_ids[c] for k in range(10)]
        assert sum(changed) == 4
        assert [k for k in range(10) if changed[k]] == pos[c].tolist()
    again = inject_sample_noise(ep, 0.4, 7)
    assert again.support_keys == noisy.support_keys
    with pytest.raises(ValueError):
        inject_sample_noise(ep, 0.5, 0)


def test_frame_noise():
    s = synth_generate(CFG, 0, 0)
    assert inject_frame_noise(s, 0, 0) is s
    noisy = inject_frame_noise(s, 4, 3, CFG)
    pos = noisy_frame_positions(8, 4, 3)
    changed = [not np.array_equal(noisy.clip[f], s.clip[f]) for f in range(8)]
    assert sum(changed) == 4 and [f for f in range(8) if changed[f]] == pos.tolist()
    assert np.array_equal(inject_frame_noise(s, 4, 3, CFG).clip, noisy.clip)
    with pytest.raises(ValueError):
        inject_frame_noise(s, 5, 0)


def test_visual_noise():
    s = synth_generate(SynthConfig(height=64, width=64), 0, 0)
    assert inject_visual_noise(s, "gaussian", 0.0) is s
    z = inject_visual_noise(s, "zoom", 0.5)
    assert z.clip.shape == s.clip.shape and z.mask.shape == s.mask.shape
    g = inject_visual_noise(s, "gaussian", 0.1, seed=1)
    target = 0.1 * float(s.clip.max() - s.clip.min())
    assert abs((g.clip - s.clip).std() - target) <= 0.1 * target
    with pytest.raises(ValueError):
        inject_visual_noise(s, "rain", 0.1)
    with pytest.raises(ValueError):
        inject_visual_noise(s, "zoom", 1.5)


# -- files ----------------------------------------------------------------


def test_otv_round_trip_and_layout(tmp_path):
    clip = np.random.default_rng(0).normal(size=(2, 3, 4, 5)).astype(np.float32)
    path = tmp_path / "a.otv"
    write_otv(str(path), clip, 7)
    raw = path.read_bytes()
    assert raw[:4] == b"OTV1"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [2, 3, 4, 5]
    assert len(raw) == 20 + 4 * clip.size + 4
    assert int(np.frombuffer(raw[-4:], "<u4")[0]) == 7
    back, label = read_otv(str(path))
    assert label == 7 and back.tobytes() == clip.tobytes()
    path.write_bytes(raw[:-1])
    with pytest.raises(ValueError):
        read_otv(str(path))


def test_manifest_round_trip_and_file_pool(tmp_path):
    entries = []
    for label in range(5):
        for i in range(2):
            p = tmp_path / f"c{label}_{i}.otv"
            write_otv(str(p), synth_generate(CFG, i, label).clip, label)
            entries.append((str(p), label))
    man = tmp_path / "manifest.txt"
    write_manifest(str(man), entries)
    assert man.read_text().splitlines()[0] == "c0_0.otv 0"
    assert [(os.path.abspath(p), l) for p, l in read_manifest(str(man))] == entries
    pool = FilePool(str(man))
    ep = sample_episode(pool, 5, 1, 1, seed=0)
    assert ep.way == 5
    os.remove(entries[0][0])
    with pytest.raises(FileNotFoundError):
        read_manifest(str(man))
