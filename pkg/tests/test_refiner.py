import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actdet.refiner import (
    Detection,
    FrameScoreProfile,
    merge_windows,
    refine,
    split_candidates,
    temporal_iou,
    temporal_nms,
)

from oracles import frame_average, greedy_nms, level_runs, tiou


def W(t0, t1, s, track=0, cls="c", video="v"):
    return Detection(video, cls, t0, t1, s, track)


def profile(values, start=0):
    return FrameScoreProfile("v", 0, "c", start, np.asarray(values, dtype=float))


windows_st = st.lists(
    st.tuples(st.integers(0, 40), st.integers(1, 20), st.floats(0, 1)).map(lambda t: (t[0], t[0] + t[1], t[2])),
    min_size=1,
    max_size=8,
)

cands_st = st.lists(
    st.tuples(st.integers(0, 30), st.integers(1, 15), st.floats(0, 1), st.integers(0, 1), st.sampled_from("ab")),
    max_size=10,
)


class TestMerge:
    def test_examples(self):
        p = merge_windows([W(0, 32, 0.6)])
        assert p.start == 0 and p.end == 32 and np.all(p.scores == 0.6)
        p = merge_windows([W(0, 32, 0.4), W(16, 48, 0.8)])
        assert np.all(p.scores[:16] == 0.4)
        np.testing.assert_allclose(p.scores[16:32], 0.6, atol=1e-15)
        assert np.all(p.scores[32:] == 0.8)

    def test_errors(self):
        with pytest.raises(ValueError):
            merge_windows([])
        with pytest.raises(ValueError):
            merge_windows([W(0, 4, 0.5), W(0, 4, 0.5, track=1)])

    def test_gap_is_nan(self):
        p = merge_windows([W(0, 2, 0.5), W(4, 6, 0.7)])
        assert np.isnan(p.scores[2:4]).all()

    @given(windows_st)
    def test_matches_oracle_exactly_and_bounded(self, ws):
        p = merge_windows([W(*w) for w in ws])
        ref = frame_average(ws)
        for f in range(p.start, p.end):
            v = p.scores[f - p.start]
            if f in ref:
                assert v == ref[f]
                covering = [s for t0, t1, s in ws if t0 <= f < t1]
                assert min(covering) <= v <= max(covering)
            else:
                assert math.isnan(v)


class TestSplit:
    def test_constant_profile(self):
        (d,) = split_candidates(profile([0.6] * 10), (0.3, 0.5, 0.7))
        assert (d.t0, d.t1) == (0, 10) and d.score == pytest.approx(0.6)

    def test_bimodal(self):
        vals = [0.9] * 5 + [0.1] * 3 + [0.9] * 4
        out = split_candidates(profile(vals, start=10), (0.5,))
        assert [(d.t0, d.t1) for d in out] == [(10, 15), (18, 22)]

    def test_bad_levels(self):
        with pytest.raises(ValueError):
            split_candidates(profile([0.5]), ())
        with pytest.raises(ValueError):
            split_candidates(profile([0.5]), (1.0,))

    @given(
        st.lists(st.one_of(st.floats(0, 1), st.just(math.nan)), min_size=1, max_size=30),
        st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4),
        st.integers(0, 50),
    )
    def test_matches_level_scan(self, vals, levels, start):
        out = split_candidates(profile(vals, start), levels)
        best = {}
        for lv in levels:
            for t0, t1, m in level_runs(vals, start, lv):
                best[(t0, t1)] = max(best.get((t0, t1), -1.0), m)
        assert {(d.t0, d.t1) for d in out} == set(best)
        for d in out:
            assert d.score == pytest.approx(best[(d.t0, d.t1)], abs=1e-12)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.01, 0.99))
    def test_single_level_covers_exactly(self, vals, lv):
        out = split_candidates(profile(vals), (lv,))
        covered = {f for d in out for f in range(d.t0, d.t1)}
        assert covered == {f for f, v in enumerate(vals) if v >= lv}


class TestNms:
    def test_examples(self):
        a, b = W(0, 5, 0.3), W(10, 15, 0.4)
        assert set(temporal_nms([a, b])) == {a, b}
        hi, lo = W(0, 5, 0.9), W(0, 5, 0.7)
        assert temporal_nms([lo, hi]) == [hi]

    def test_groups_are_independent(self):
        a = W(0, 5, 0.9, track=0)
        b = W(0, 5, 0.8, track=1)
        c = W(0, 5, 0.7, track=0, cls="d")
        assert temporal_nms([a, b, c]) == [a, b, c]

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            temporal_nms([], 1.0)

    @settings(max_examples=100)
    @given(cands_st, st.floats(0.05, 0.95))
    def test_oracle_idempotence_and_separation(self, raw, thr):
        cands = [W(t0, t0 + n, s, track=tr, cls=c) for t0, n, s, tr, c in raw]
        kept = temporal_nms(cands, thr)
        assert temporal_nms(kept, thr) == kept
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                if (a.cls, a.track) == (b.cls, b.track):
                    assert temporal_iou(a.t0, a.t1, b.t0, b.t1) < thr
        for key in {(d.cls, d.track) for d in cands}:
            group = [(d.score, d.t0, d.t1) for d in cands if (d.cls, d.track) == key]
            mine = [(d.score, d.t0, d.t1) for d in kept if (d.cls, d.track) == key]
            assert mine == greedy_nms(group, thr)


class TestRefine:
    def test_end_to_end(self):
        ws = [W(0, 16, 0.9), W(8, 24, 0.9), W(16, 32, 0.2), W(24, 40, 0.1), W(0, 16, 0.1, track=1)]
        out = refine(ws, (0.3, 0.5, 0.7), 0.5)
        # [0, 16) at 0.9 from the 0.7 level suppresses [0, 24) at 0.78 (tIoU 2/3)
        assert [(d.t0, d.t1, d.track) for d in out] == [(0, 16, 0)]
        assert out[0].score == pytest.approx(0.9)

    def test_json_round_trip(self):
        d = W(3, 9, 0.25, track=4)
        assert Detection.from_json(d.to_json()) == d

    def test_validation(self):
        with pytest.raises(ValueError):
            W(3, 3, 0.5)
        with pytest.raises(ValueError):
            W(3, 4, 1.5)


@given(st.integers(0, 20), st.integers(1, 10), st.integers(0, 20), st.integers(1, 10))
def test_temporal_iou_matches_oracle(a0, n, b0, m):
    assert temporal_iou(a0, a0 + n, b0, b0 + m) == tiou(a0, a0 + n, b0, b0 + m)
