import hashlib
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actdet.motionenc import proposal_clips
from actdet.synthgen import (
    ALL_CLASSES,
    BACKGROUND,
    PERSON_CLASSES,
    VEHICLE_CLASSES,
    Actor,
    SceneScript,
    SynthConfig,
    activity_script,
    actor_center,
    generate_dataset,
    load_scripts,
    mirror_script,
    render_frame,
    render_scene,
    save_scripts,
    scene_boxes,
    stable_seed,
    surveillance_script,
    swept_rect,
    vehicle_offset,
)
from actdet.tracklet import Trajectory, make_proposals

SIGMA = 2.0 / 255.0


def clean(script):
    return SceneScript(script.seed, script.frame_hw, script.n_frames, script.actors, 0.0, mirrored=script.mirrored)


class TestDeterminism:
    def test_same_seed_same_bytes(self):
        a = generate_dataset(SynthConfig(n_videos=6, seed=0))
        b = generate_dataset(SynthConfig(n_videos=6, seed=0))
        for i in range(6):
            assert a.render(i).frames.tobytes() == b.render(i).frames.tobytes()

    def test_seeds_differ(self):
        a = activity_script("vehicle_moves", 1).actors[0].params
        b = activity_script("vehicle_moves", 2).actors[0].params
        assert a != b

    def test_stable_seed(self):
        assert stable_seed(0, "generate") == stable_seed(0, "generate")
        assert stable_seed(0, "generate") != stable_seed(0, "track")
        digest = hashlib.sha256(b"3:x").digest()
        assert stable_seed(3, "x") == int.from_bytes(digest[:4], "little")


class TestVehicleMotion:
    def test_stops_decelerate_to_zero(self):
        n = 24
        steps = [math.dist(vehicle_offset("vehicle_stops", n, 2.5, 0.1, 1, t + 1), vehicle_offset("vehicle_stops", n, 2.5, 0.1, 1, t)) for t in range(n - 1)]
        assert all(b <= a + 1e-12 for a, b in zip(steps, steps[1:]))
        assert steps[-1] == 0.0 and steps[0] > 0

    def test_starts_accelerate_from_zero(self):
        n = 24
        steps = [math.dist(vehicle_offset("vehicle_starts", n, 2.5, 0.0, 1, t + 1), vehicle_offset("vehicle_starts", n, 2.5, 0.0, 1, t)) for t in range(n - 1)]
        assert steps[0] == 0.0 and all(b >= a - 1e-12 for a, b in zip(steps, steps[1:]))

    def test_turn_geometry(self):
        # a quarter circle keeps a constant speed and ends 90 degrees from the start heading
        n, v = 25, 2.0
        pts = [vehicle_offset("vehicle_turns_right", n, v, 0.0, 1, t) for t in range(n)]
        steps = [math.dist(a, b) for a, b in zip(pts, pts[1:])]
        assert max(steps) - min(steps) < 1e-9
        r = v / (math.pi / 2 / (n - 1))
        assert pts[-1][0] == pytest.approx(r) and pts[-1][1] == pytest.approx(-r)
        left = vehicle_offset("vehicle_turns_left", n, v, 0.0, -1, n - 1)
        assert left[0] == pytest.approx(-r)

    def test_unknown_activity(self):
        with pytest.raises(ValueError):
            vehicle_offset("vehicle_flies", 10, 1.0, 0.0, 1, 3)

    @pytest.mark.parametrize("activity", VEHICLE_CLASSES)
    def test_box_center_follows_trajectory(self, activity):
        s = activity_script(activity, 5, n_frames=24)
        a = s.actors[0]
        for t in range(24):
            _, [(_, b)] = render_frame(s, t)
            cx, cy = actor_center(a, t)
            assert abs(b.center[0] - cx) <= 1.0 and abs(b.center[1] - cy) <= 1.0


class TestMirror:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_turns_left_flipped_equals_turns_right(self, seed):
        right = activity_script("vehicle_turns_right", seed, n_frames=16)
        left = mirror_script(right)
        assert left.actors[0].activity == "vehicle_turns_left"
        a, b = render_scene(right), render_scene(left)
        assert a.frames[:, :, ::-1].tobytes() == b.frames.tobytes()

    @pytest.mark.parametrize("activity", ALL_CLASSES)
    def test_every_class_mirrors(self, activity):
        s = activity_script(activity, 3, n_frames=8)
        m = mirror_script(s)
        a, b = render_scene(s), render_scene(m)
        np.testing.assert_array_equal(a.frames[:, :, ::-1], b.frames)
        assert mirror_script(m).actors[0].params == s.actors[0].params


class TestRender:
    def test_out_of_range(self):
        s = activity_script("person_walks", 0, n_frames=4)
        for t in (-1, 4):
            with pytest.raises(IndexError):
                render_frame(s, t)

    def test_no_actors(self):
        s = SceneScript(4, (32, 48), 3, [])
        f, boxes = render_frame(s, 1)
        assert boxes == [] and f.shape == (32, 48)
        assert abs(float(f.mean()) - BACKGROUND) < 4 * SIGMA / math.sqrt(f.size)
        assert float(np.std(f)) == pytest.approx(SIGMA, rel=0.1)
        assert np.all(render_frame(clean(s), 1)[0] == np.float32(BACKGROUND))

    def test_static_actor_same_box(self):
        s = SceneScript(0, (64, 64), 5, [Actor("vehicle", None, 0, 5, {"cx": 30.0, "cy": 30.0, "speed": 0.0, "heading": 0.0})])
        boxes = {render_frame(s, t)[1][0][1].x for t in range(5)} | {render_frame(s, t)[1][0][1].y for t in range(5)}
        assert len(boxes) <= 2

    @pytest.mark.parametrize("activity", ALL_CLASSES)
    def test_boxes_are_tight(self, activity):
        s = clean(activity_script(activity, 11, n_frames=12))
        for t in range(12):
            f, [(_, b)] = render_frame(s, t)
            ys, xs = np.nonzero(np.abs(f - BACKGROUND) > 1e-6)
            assert abs(ys.min() - b.y) <= 1 and abs(ys.max() + 1 - b.y2) <= 1
            assert abs(xs.min() - b.x) <= 1 and abs(xs.max() + 1 - b.x2) <= 1

    def test_frames_in_unit_range_with_noise(self):
        sc = render_scene(activity_script("person_runs", 2, n_frames=6))
        assert sc.frames.dtype == np.float32 and sc.frames.min() > 0 and sc.frames.max() < 1.05
        assert len(sc.ground_truth) == 1 and sc.ground_truth[0]["class"] == "person_runs"


class TestAppearance:
    def test_vehicle_crops_match_within_three_sigma(self):
        clips = {}
        for activity in VEHICLE_CLASSES:
            sc = render_scene(activity_script(activity, 21, n_frames=16))
            traj = Trajectory(0, "vehicle", sc.detections)
            (p,) = make_proposals(traj, 16, 16, resized_hw=(32, 32))
            rgb, _ = proposal_clips(sc.frames, p, "track", 1.5, (4.0, 4.0))
            clips[activity] = (rgb.data + 1) / 2
        for a, b in itertools.combinations(VEHICLE_CLASSES, 2):
            mad = float(np.mean(np.abs(clips[a] - clips[b])))
            assert mad < 3 * SIGMA, (a, b, mad)

    def test_person_textures_differ_by_band(self):
        frames = {a: render_frame(clean(activity_script(a, 1, n_frames=2)), 0) for a in PERSON_CLASSES}
        stands_f, [(_, b)] = frames["person_stands"]
        base = stands_f[int(b.y) : int(b.y2), int(b.x) : int(b.x2)]
        for a in ("person_talks_on_phone", "person_gestures"):
            f, [(_, b)] = frames[a]
            diff = f[int(b.y) : int(b.y2), int(b.x) : int(b.x2)] != base
            assert diff[:12].any() and not diff[12:].any()
        for a in ("person_runs", "person_crouches", "person_walks"):
            f, [(_, b)] = frames[a]
            diff = f[int(b.y) : int(b.y2), int(b.x) : int(b.x2)] != base
            assert diff[12:].any() and not diff[:12].any()


class TestDataset:
    def test_invalid_class(self):
        with pytest.raises(ValueError):
            generate_dataset(SynthConfig(classes=("vehicle_flies",)))

    def test_class_weights_and_split(self):
        ds = generate_dataset(SynthConfig(n_videos=40, classes=("vehicle_turns_left", "vehicle_turns_right"), class_weights={"vehicle_turns_right": 0.25}, val_fraction=0.25))
        labels = ds.labels()
        assert labels.count("vehicle_turns_right") == 8 and labels.count("vehicle_turns_left") == 32
        assert len(ds.val_idx) == 10 and sorted(ds.train_idx + ds.val_idx) == list(range(40))

    def test_scripts_round_trip(self, tmp_path):
        scripts = generate_dataset(SynthConfig(n_videos=3)).scripts
        save_scripts(tmp_path / "s.json", scripts)
        back = load_scripts(tmp_path / "s.json")
        for a, b in zip(scripts, back):
            assert render_scene(a).frames.tobytes() == render_scene(b).frames.tobytes()


class TestSurveillance:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31))
    def test_actors_in_bounds_and_clear_while_coexisting(self, seed):
        acts = ("vehicle_moves", "person_walks", "vehicle_u_turn", "person_runs")
        s = surveillance_script(seed, acts, n_frames=160, burn_in=100)
        assert s.actors[0].activity is None and s.actors[0].t_start == 0
        assert [a.activity for a in s.actors[1:]] == list(acts)
        rects = [swept_rect(a, s.frame_hw) for a in s.actors]
        for r in rects:
            assert r[0] >= 0 and r[1] >= 0 and r[2] <= 128 and r[3] <= 128
        for (a, ra), (b, rb) in itertools.combinations(zip(s.actors, rects), 2):
            if a.t_start < b.t_end and b.t_start < a.t_end:
                assert ra[2] <= rb[0] or rb[2] <= ra[0] or ra[3] <= rb[1] or rb[3] <= ra[1]

    def test_too_short(self):
        with pytest.raises(ValueError):
            surveillance_script(0, ("vehicle_moves",), n_frames=50, burn_in=40)

    def test_jittered_boxes_keep_identity_keys(self):
        s = surveillance_script(1, ("vehicle_moves", "person_walks"), n_frames=60, burn_in=10, jitter=0.5)
        dets, truth = scene_boxes(s)
        assert len(dets) == len(truth)
        assert set(truth.values()) == {0, 1, 2}
