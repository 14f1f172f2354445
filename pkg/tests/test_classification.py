import math

import numpy as np
import pytest

from gazestream.classification import (
    FixationCompleted,
    GapEnded,
    GapStarted,
    IvtClassifier,
    IvtConfig,
    SaccadeCompleted,
)
from gazestream.core import GazeSample
from gazestream.errors import ConfigError, MalformedStreamError

from conftest import GEOM, constant_stream, deg_to_px, planted_cluster_stream
from oracles import assert_events_equal, ivt_batch

CFG = IvtConfig()


def run_stream(samples, cfg=CFG, geom=GEOM):
    clf = IvtClassifier(cfg, geom)
    events = []
    for s in samples:
        events.extend(clf.step(s))
    events.extend(clf.finish())
    return events


def fixations(events):
    return [e.fixation for e in events if isinstance(e, FixationCompleted)]


def saccades(events):
    return [e.saccade for e in events if isinstance(e, SaccadeCompleted)]


class TestConfig:
    def test_rejects_non_positive(self):
        with pytest.raises(ConfigError):
            IvtConfig(velocity_threshold=0.0)
        with pytest.raises(ConfigError):
            IvtConfig(min_fixation_duration=-1.0)


class TestBasics:
    def test_single_stationary_fixation(self):
        samples = constant_stream(30, x=640.0, y=360.0, dt_ms=300.0 / 29.0)
        events = run_stream(samples)
        assert len(events) == 1
        (fix,) = fixations(events)
        assert fix.duration == pytest.approx(300.0, abs=1e-9)
        assert fix.centroid_x == pytest.approx(640.0)
        assert fix.centroid_y == pytest.approx(360.0)
        assert fix.id == 0

    def test_two_clusters_one_saccade(self):
        dx = deg_to_px(10.0)
        a = constant_stream(13, x=400.0, y=540.0, dt_ms=1000.0 / 60.0)
        jump = [
            GazeSample(t=a[-1].t + k * 1000.0 / 60.0, x=400.0 + dx * k / 4.0, y=540.0)
            for k in (1, 2, 3)
        ]
        b = [
            GazeSample(t=jump[-1].t + k * 1000.0 / 60.0, x=400.0 + dx, y=540.0)
            for k in range(1, 14)
        ]
        events = run_stream(a + jump + b)
        assert [type(e).__name__ for e in events] == [
            "FixationCompleted",
            "SaccadeCompleted",
            "FixationCompleted",
        ]
        (sac,) = saccades(events)
        assert sac.amplitude == pytest.approx(10.0, abs=1e-6)
        assert sac.peak_velocity > 0.0
        assert sac.peak_velocity >= sac.mean_velocity
        # streaming output equals the offline reference
        assert_events_equal(events, ivt_batch(a + jump + b, CFG, GEOM))

    def test_all_invalid_one_gap_started(self):
        samples = [
            GazeSample(t=i * 10.0, x=math.nan, y=math.nan, valid=False) for i in range(20)
        ]
        events = run_stream(samples)
        assert events == [GapStarted(t=0.0)]

    def test_out_of_order_rejected(self):
        clf = IvtClassifier(CFG, GEOM)
        clf.step(GazeSample(t=10.0, x=0.0, y=0.0))
        with pytest.raises(MalformedStreamError):
            clf.step(GazeSample(t=10.0, x=1.0, y=0.0))

    def test_mean_pupil_over_members(self):
        samples = [
            GazeSample(t=i * 10.0, x=100.0, y=100.0, pupil_left=4.0 + 0.1 * i)
            for i in range(10)
        ]
        events = run_stream(samples)
        (fix,) = fixations(events)
        assert fix.mean_pupil == pytest.approx(np.mean([4.0 + 0.1 * i for i in range(10)]))


class TestGapHandling:
    def test_short_invalid_run_bridged(self):
        before = constant_stream(10, x=500.0, y=500.0)
        gap = [
            GazeSample(t=100.0 + i * 10.0, x=math.nan, y=math.nan, valid=False)
            for i in range(3)
        ]
        after = constant_stream(10, x=500.0, y=500.0, t0=130.0)
        events = run_stream(before + gap + after)
        (fix,) = fixations(events)
        assert fix.duration == pytest.approx(220.0)  # bridged into one fixation
        assert not any(isinstance(e, (GapStarted, GapEnded)) for e in events)

    def test_long_invalid_run_splits(self):
        before = constant_stream(10, x=500.0, y=500.0)
        gap = [
            GazeSample(t=100.0 + i * 10.0, x=math.nan, y=math.nan, valid=False)
            for i in range(12)
        ]
        after = constant_stream(10, x=500.0, y=500.0, t0=230.0)
        events = run_stream(before + gap + after)
        kinds = [type(e).__name__ for e in events]
        assert kinds == ["FixationCompleted", "GapStarted", "GapEnded", "FixationCompleted"]
        gs = next(e for e in events if isinstance(e, GapStarted))
        ge = next(e for e in events if isinstance(e, GapEnded))
        assert gs.t == 100.0
        assert ge.t == 230.0

    def test_no_saccade_across_gap(self):
        dx = deg_to_px(8.0)
        before = constant_stream(10, x=400.0, y=400.0)
        gap = [
            GazeSample(t=100.0 + i * 10.0, x=math.nan, y=math.nan, valid=False)
            for i in range(12)
        ]
        after = constant_stream(10, x=400.0 + dx, y=400.0, t0=230.0)
        events = run_stream(before + gap + after)
        assert saccades(events) == []
        assert len(fixations(events)) == 2


class TestRefinementRules:
    def test_short_fixation_discarded_into_saccade(self):
        dt = 1000.0 / 60.0
        dx = deg_to_px(6.0)
        a = constant_stream(13, x=300.0, y=400.0, dt_ms=dt)
        t = a[-1].t
        mid = []
        # fast sweep, a 2-sample pause (33 ms < 60 ms minimum), fast sweep
        for k in (1, 2):
            mid.append(GazeSample(t=t + k * dt, x=300.0 + dx * k / 6.0, y=400.0))
        pause_x = 300.0 + dx * 0.5
        mid.append(GazeSample(t=t + 3 * dt, x=pause_x, y=400.0))
        mid.append(GazeSample(t=t + 4 * dt, x=pause_x + 1.0, y=400.0))
        for k in (5, 6):
            mid.append(GazeSample(t=t + k * dt, x=300.0 + dx * k / 6.0, y=400.0))
        b = [
            GazeSample(t=t + (6 + k) * dt, x=300.0 + dx, y=400.0) for k in range(1, 14)
        ]
        events = run_stream(a + mid + b)
        assert len(fixations(events)) == 2
        (sac,) = saccades(events)
        assert sac.amplitude == pytest.approx(6.0, abs=1e-6)
        # the pause's slow samples belong to the merged saccade interval
        assert sac.t_start == a[-1].t and sac.t_end == b[0].t

    def test_sub_amplitude_saccade_merges_fixations(self):
        dt = 1000.0 / 60.0
        dx = deg_to_px(0.3)  # below the 0.5 deg merge threshold
        a = constant_stream(13, x=500.0, y=500.0, dt_ms=dt)
        t = a[-1].t
        jump = [GazeSample(t=t + dt, x=500.0 + dx / 2.0, y=500.0)]
        b = [GazeSample(t=t + (1 + k) * dt, x=500.0 + dx, y=500.0) for k in range(1, 14)]
        # the jump must actually exceed the velocity threshold to split phases
        v = deg_to_px(0.3) / 2.0
        assert v > 0
        events = run_stream(a + jump + b)
        assert len(fixations(events)) == 1
        assert saccades(events) == []
        (fix,) = fixations(events)
        assert fix.t_start == a[0].t and fix.t_end == b[-1].t

    def test_leading_and_trailing_saccades_dropped(self):
        dt = 1000.0 / 60.0
        sweep_in = [GazeSample(t=k * dt, x=100.0 + 80.0 * k, y=300.0) for k in range(4)]
        t0 = sweep_in[-1].t
        hold = [
            GazeSample(t=t0 + k * dt, x=sweep_in[-1].x, y=300.0) for k in range(1, 14)
        ]
        t1 = hold[-1].t
        sweep_out = [
            GazeSample(t=t1 + k * dt, x=hold[-1].x + 80.0 * k, y=300.0) for k in range(1, 4)
        ]
        events = run_stream(sweep_in + hold + sweep_out)
        assert len(fixations(events)) == 1
        assert saccades(events) == []


class TestStreamingBatchEquivalence:
    @pytest.mark.parametrize("seed", range(24))
    def test_random_planted_streams(self, seed):
        rng = np.random.default_rng(seed)
        invalid = (2, 18) if seed % 2 else None
        samples = planted_cluster_stream(
            rng,
            n_clusters=int(rng.integers(2, 7)),
            noise_px=float(rng.uniform(0.0, 2.0)),
            invalid_run=invalid,
        )
        assert_events_equal(run_stream(samples), ivt_batch(samples, CFG, GEOM))

    @pytest.mark.parametrize("seed", range(6))
    def test_equivalence_with_low_rate_streams(self, seed):
        rng = np.random.default_rng(100 + seed)
        samples = planted_cluster_stream(rng, n_clusters=3, rate_hz=30.0, noise_px=1.0)
        assert_events_equal(run_stream(samples), ivt_batch(samples, CFG, GEOM))


class TestHypothesisEquivalence:
    """Streaming/batch equivalence on adversarial streams: random walks with
    arbitrary validity patterns and irregular sampling, not just planted
    clusters. Hypothesis shrinks any counterexample."""

    from hypothesis import given, settings, strategies as st

    step = st.tuples(
        st.floats(min_value=1.0, max_value=120.0),   # dt ms
        st.floats(min_value=-300.0, max_value=300.0),  # dx px
        st.floats(min_value=-200.0, max_value=200.0),  # dy px
        st.booleans(),                                # valid
    )

    @given(st.lists(step, min_size=0, max_size=120))
    @settings(max_examples=150, deadline=None)
    def test_random_walk_streams(self, steps):
        t, x, y = 0.0, 960.0, 540.0
        samples = []
        for dt, dx, dy, valid in steps:
            t += dt
            x = min(1920.0, max(0.0, x + dx))
            y = min(1080.0, max(0.0, y + dy))
            if valid:
                samples.append(GazeSample(t=t, x=x, y=y))
            else:
                samples.append(GazeSample(t=t, x=math.nan, y=math.nan, valid=False))
        assert_events_equal(run_stream(samples), ivt_batch(samples, CFG, GEOM))


class TestInvariants:
    def test_alternation_and_ordering(self):
        rng = np.random.default_rng(42)
        samples = planted_cluster_stream(rng, n_clusters=6, noise_px=1.5)
        events = run_stream(samples)
        last_kind = None
        last_t = -math.inf
        for e in events:
            if isinstance(e, FixationCompleted):
                assert last_kind in (None, "sacc", "gap")
                assert e.fixation.t_start >= last_t
                last_t = e.fixation.t_end
                last_kind = "fix"
            elif isinstance(e, SaccadeCompleted):
                assert last_kind == "fix"
                last_kind = "sacc"
            else:
                last_kind = "gap"

    def test_timeline_partition(self):
        """Within a gap-free region the emitted fixation and saccade
        intervals tile the span between the first and last event with no
        holes and no overlap."""
        rng = np.random.default_rng(11)
        samples = planted_cluster_stream(rng, n_clusters=8, noise_px=1.0)
        events = run_stream(samples)
        spans = []
        for e in events:
            if isinstance(e, FixationCompleted):
                spans.append((e.fixation.t_start, e.fixation.t_end))
            elif isinstance(e, SaccadeCompleted):
                spans.append((e.saccade.t_start, e.saccade.t_end))
        assert spans, "stream should produce events"
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            assert e0 == pytest.approx(s1, abs=1e-9), "events must abut exactly"
            assert s0 < e0 or s0 == e0

    def test_monotone_threshold_total_fixation_time(self):
        """On planted-cluster streams, raising the velocity threshold never
        decreases total fixation time."""
        rng = np.random.default_rng(21)
        samples = planted_cluster_stream(rng, n_clusters=6, noise_px=2.0)
        totals = []
        for thr in (15.0, 30.0, 60.0, 120.0, 100000.0):
            cfg = IvtConfig(velocity_threshold=thr)
            events = run_stream(samples, cfg=cfg)
            totals.append(sum(f.duration for f in fixations(events)))
        assert totals == sorted(totals)

    def test_planted_counts_recovered_noiseless(self):
        for seed in range(8):
            rng = np.random.default_rng(200 + seed)
            n = int(rng.integers(2, 9))
            samples = planted_cluster_stream(rng, n_clusters=n, noise_px=0.0)
            events = run_stream(samples)
            assert len(fixations(events)) == n
            assert len(saccades(events)) == n - 1
