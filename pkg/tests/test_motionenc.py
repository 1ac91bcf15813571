import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actdet.motionenc import (
    ClipTensor,
    MotionSample,
    box_to_grid,
    concat_channels,
    crop_rgb,
    displacements,
    encode_motion_clip,
    flip_horizontal,
    flip_label,
    proposal_clips,
)
from actdet.tracklet import BBox, ContractViolation, Trajectory, make_proposals

W128 = (128.0, 128.0)


def path(xs, ys=None, w=5.0, h=4.0):
    ys = ys if ys is not None else [2.0] * len(xs)
    return [BBox(i, float(x), float(y), w, h) for i, (x, y) in enumerate(zip(xs, ys))]


def sample(seed, label="vehicle_turns_left", shape=(3, 6, 8)):
    rng = np.random.default_rng(seed)
    rgb = ClipTensor(rng.uniform(-1, 1, shape + (3,)).astype(np.float32), ("r", "g", "b"))
    mot = ClipTensor(rng.uniform(-1, 1, shape + (2,)).astype(np.float32), ("dx", "dy"))
    return MotionSample(rgb, mot, label)


class TestDisplacements:
    def test_examples(self):
        assert displacements(path([7])).tolist() == [[0, 0]]
        assert displacements(path([3] * 5)).tolist() == [[0, 0]] * 5
        assert displacements(path([0, 2, 5])).tolist() == [[2, 0], [3, 0], [0, 0]]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            displacements([])


class TestEncode:
    def test_static_and_single_frame_are_zero(self):
        crop = (0.0, 0.0, 32.0, 32.0)
        assert not encode_motion_clip(path([3] * 4), crop, (32, 32), W128).data.any()
        assert not encode_motion_clip(path([3]), crop, (32, 32), W128).data.any()

    def test_region_fill_example(self):
        # box at frame 0 covers rows 2..5 and cols 3..7 of the grid, then moves 4 px right
        clip = encode_motion_clip(path([3, 7]), (0.0, 0.0, 32.0, 32.0), (32, 32), W128).data
        expected = np.zeros((2, 32, 32, 2), np.float32)
        expected[0, 2:6, 3:8, 0] = 0.03125
        np.testing.assert_array_equal(clip, expected)

    def test_box_outside_crop(self):
        with pytest.raises(ContractViolation):
            encode_motion_clip(path([100, 101]), (0.0, 0.0, 32.0, 32.0), (32, 32), W128)

    def test_grid_mapping_rounds_half_away(self):
        # scale 0.5: x in [5, 12) maps to [2.5, 6.0) -> cols 3..5
        assert box_to_grid(BBox(0, 5.0, 1.0, 7.0, 3.0), (0, 0, 64, 64), (32, 32)) == (1, 2, 3, 6)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20)), min_size=1, max_size=6),
        st.floats(2, 10),
        st.floats(2, 10),
    )
    def test_two_values_and_brute_force_fill(self, xy, w, h):
        boxes = [BBox(i, x, y, w, h) for i, (x, y) in enumerate(xy)]
        crop = (0.0, 0.0, 32.0, 32.0)
        clip = encode_motion_clip(boxes, crop, (16, 16), (64.0, 32.0)).data
        d = displacements(boxes) / [64.0, 32.0]
        for i, b in enumerate(boxes):
            for c in range(2):
                assert set(np.unique(clip[i, :, :, c])) <= {0.0, np.float32(d[i, c])}
            # fill oracle: every grid cell whose scaled center-rounded span includes it
            oracle = np.zeros((16, 16, 2), np.float32)
            for r in range(16):
                for col in range(16):
                    r0, r1 = np.floor(b.y * 0.5 + 0.5), np.floor(b.y2 * 0.5 + 0.5)
                    c0, c1 = np.floor(b.x * 0.5 + 0.5), np.floor(b.x2 * 0.5 + 0.5)
                    if r0 <= r < r1 and c0 <= col < c1:
                        oracle[r, col] = d[i]
            np.testing.assert_array_equal(clip[i], oracle)
            n_cells = (np.floor(b.y2 * 0.5 + 0.5) - np.floor(b.y * 0.5 + 0.5)) * (np.floor(b.x2 * 0.5 + 0.5) - np.floor(b.x * 0.5 + 0.5))
            np.testing.assert_allclose(np.abs(clip[i]).sum(axis=(0, 1)), n_cells * np.abs(d[i]).astype(np.float32), rtol=1e-6)


class TestConcat:
    def test_zero_motion_and_shapes(self):
        s = sample(0, shape=(8, 64, 64))
        zero = ClipTensor(np.zeros((8, 64, 64, 2), np.float32), ("dx", "dy"))
        out = concat_channels(s.rgb, zero)
        assert out.shape == (8, 64, 64, 5) and out.channels == ("r", "g", "b", "dx", "dy")
        np.testing.assert_array_equal(out.data[..., :3], s.rgb.data)
        assert not out.data[..., 3:].any()

    def test_element_lookup(self):
        s = sample(1, shape=(4, 9, 7))
        out = concat_channels(s.rgb, s.motion).data
        rng = np.random.default_rng(2)
        for _ in range(200):
            t, h, w = rng.integers(4), rng.integers(9), rng.integers(7)
            assert out[t, h, w, 4] == s.motion.data[t, h, w, 1]
            assert out[t, h, w, 3] == s.motion.data[t, h, w, 0]
            assert out[t, h, w, 1] == s.rgb.data[t, h, w, 1]

    def test_mismatch(self):
        with pytest.raises(ValueError):
            concat_channels(sample(0, shape=(2, 4, 4)).rgb, sample(0, shape=(2, 4, 5)).motion)


class TestFlip:
    @given(st.integers(0, 2**31), st.sampled_from(["vehicle_turns_left", "vehicle_turns_right", "vehicle_stops", "person_runs"]))
    def test_involution(self, seed, label):
        s = sample(seed, label)
        back = flip_horizontal(flip_horizontal(s))
        assert back.label == s.label
        assert back.rgb.data.tobytes() == s.rgb.data.tobytes()
        assert back.motion.data.tobytes() == s.motion.data.tobytes()

    def test_dx_negated_in_mirrored_box(self):
        mot = np.zeros((1, 4, 8, 2), np.float32)
        mot[0, 1:3, 0:2, 0] = 0.1
        mot[0, 1:3, 0:2, 1] = 0.05
        rgb = ClipTensor(np.zeros((1, 4, 8, 3), np.float32), ("r", "g", "b"))
        f = flip_horizontal(MotionSample(rgb, ClipTensor(mot, ("dx", "dy")), "vehicle_turns_left"))
        assert f.label == "vehicle_turns_right"
        np.testing.assert_array_equal(f.motion.data[0, 1:3, 6:8, 0], np.float32(-0.1))
        np.testing.assert_array_equal(f.motion.data[0, 1:3, 6:8, 1], np.float32(0.05))
        assert np.count_nonzero(f.motion.data) == np.count_nonzero(mot)

    def test_labels(self):
        assert flip_label("vehicle_turns_left") == "vehicle_turns_right"
        assert flip_label("vehicle_turns_right") == "vehicle_turns_left"
        assert flip_label("vehicle_stops") == "vehicle_stops"


class TestClipTensor:
    def test_save_load(self, tmp_path):
        s = sample(4)
        s.rgb.save(tmp_path / "c.f32")
        back = ClipTensor.load(tmp_path / "c.f32")
        assert back.channels == s.rgb.channels and back.value_scale == s.rgb.value_scale
        assert back.data.tobytes() == s.rgb.data.tobytes()
        assert (tmp_path / "c.f32").stat().st_size == 4 * s.rgb.data.size

    def test_bad_payload(self, tmp_path):
        s = sample(4)
        s.rgb.save(tmp_path / "c.f32")
        (tmp_path / "c.f32").write_bytes(b"\0" * 12)
        with pytest.raises(ValueError):
            ClipTensor.load(tmp_path / "c.f32")

    def test_validation(self):
        with pytest.raises(ValueError):
            ClipTensor(np.zeros((2, 2, 2), np.float32), ("r",))
        with pytest.raises(ValueError):
            ClipTensor(np.zeros((1, 2, 2, 2), np.float32), ("r",))
        with pytest.raises(ValueError):
            ClipTensor(np.full((1, 1, 1, 1), np.nan, np.float32), ("r",))
        with pytest.raises(ValueError):
            MotionSample(sample(0).rgb, sample(0, shape=(3, 6, 9)).motion, "x")


class TestProposalClips:
    def test_shared_geometry_and_range(self):
        frames = np.full((6, 64, 64), 0.5)
        boxes = [BBox(i, 10.0 + 2 * i, 20.0, 12.0, 8.0, obj_class="vehicle") for i in range(6)]
        for i, b in enumerate(boxes):
            frames[i, 20:28, int(b.x) : int(b.x) + 12] = 1.0
        (p,) = make_proposals(Trajectory(0, "vehicle", boxes), 6, 6, resized_hw=(16, 16), frame_hw=(64, 64))
        rgb, mot = proposal_clips(frames, p, "track", 1.5, (4.0, 4.0))
        assert rgb.shape == (6, 16, 16, 3) and mot.shape == (6, 16, 16, 2)
        assert rgb.data.min() >= -1.0 and rgb.data.max() <= 1.0
        assert set(np.unique(mot.data[0, ..., 0])) == {0.0, 0.5}
        assert not mot.data[-1].any()

    def test_crop_rgb_identity(self):
        rng = np.random.default_rng(0)
        frames = rng.random((2, 8, 8, 3))
        clip = crop_rgb(frames, [0, 5], np.array([[0, 0, 8, 8]] * 2, float), (8, 8))
        np.testing.assert_allclose(clip.data[0], frames[0] * 2 - 1, atol=1e-6)
        np.testing.assert_allclose(clip.data[1], frames[1] * 2 - 1, atol=1e-6)
