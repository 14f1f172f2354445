"""Per-session analytics pipeline.

Feeds one raw sample at a time through clamping, pupillometry, the I-VT
classifier and every measure tracker, and returns the resulting stream
records as (stream, t_ms, payload) tuples in a fixed order. Both the live
session and the headless batch runner drive this same object, which is
what makes their outputs identical.
"""

from __future__ import annotations

from dataclasses import asdict
from typing import Optional

from ..classification import (
    FixationCompleted,
    GapEnded,
    GapStarted,
    IvtClassifier,
    SaccadeCompleted,
)
from ..core import Fixation, GazeSample, clamp_to_screen
from ..measures import KTracker, MainSequenceTracker, PositionalTracker
from ..pupillometry import GapBreak, PcpdTracker, PupilPreprocessor, RipaTracker
from ..transitions import TransitionTracker, aoi_hit
from .config import SessionConfig

Record = tuple[str, float, dict]


class AnalyticsPipeline:
    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.classifier = IvtClassifier(cfg.ivt, cfg.geometry)
        self.preprocessor = PupilPreprocessor(cfg.pupil.gap_ms)
        self.ripa = RipaTracker(cfg.pupil.sg_window, cfg.pupil.sg_order, cfg.pupil.epsilon)
        self.pcpd = PcpdTracker(cfg.pupil.baseline_ms)
        self.k = KTracker(cfg.std_mode)
        self.positional = PositionalTracker(cfg.std_mode)
        self.mainseq = MainSequenceTracker()
        self.transitions = TransitionTracker(
            cfg.aois, include_self=not cfg.exclude_self_transitions
        )
        self._last_fixation: Optional[Fixation] = None
        self._started = False

    def feed(self, sample: GazeSample) -> list[Record]:
        out: list[Record] = []
        sample = clamp_to_screen(sample, self.cfg.geometry)
        if not self._started:
            self.pcpd.note_stream_start(sample.t)
            self._started = True
        out.append(("samples", sample.t, asdict(sample)))
        self.positional.observe_sample(sample)

        for pupil_event in self.preprocessor.step(sample):
            if isinstance(pupil_event, GapBreak):
                self.ripa.gap_break()
                continue
            ripa = self.ripa.observe(pupil_event.t, pupil_event.value)
            pcpd = self.pcpd.observe(pupil_event.t, pupil_event.value)
            if ripa is not None or pcpd is not None:
                out.append(
                    (
                        "ripa",
                        pupil_event.t,
                        {
                            "t": pupil_event.t,
                            "pupil": pupil_event.value,
                            "ripa": ripa,
                            "pcpd": pcpd,
                            "interpolated": pupil_event.interpolated,
                        },
                    )
                )

        for event in self.classifier.step(sample):
            self._apply_event(event, out)
        return out

    def finish(self) -> list[Record]:
        """Flush end-of-stream events from the classifier."""
        out: list[Record] = []
        for event in self.classifier.finish():
            self._apply_event(event, out)
        return out

    def _apply_event(self, event, out: list[Record]) -> None:
        if isinstance(event, FixationCompleted):
            fixation = event.fixation
            out.append(("fixations", fixation.t_end, asdict(fixation)))
            out.append(("positional", fixation.t_end, asdict(self.positional.observe(fixation))))
            aoi = aoi_hit((fixation.centroid_x, fixation.centroid_y), self.cfg.aois)
            snapshot = self.transitions.observe_fixation(aoi)
            out.append(("transitions", fixation.t_end, {"aoi": aoi, **asdict(snapshot)}))
            self._last_fixation = fixation
        elif isinstance(event, SaccadeCompleted):
            saccade = event.saccade
            out.append(("saccades", saccade.t_end, asdict(saccade)))
            out.append(("positional", saccade.t_end, asdict(self.positional.observe(saccade))))
            if self._last_fixation is not None:
                k_sample = self.k.observe(self._last_fixation, saccade)
                if k_sample is not None:
                    out.append(("kcoef", k_sample.t, asdict(k_sample)))
            self.mainseq.push(saccade)
            fit = self.mainseq.fit()
            if fit is not None:
                out.append(("mainseq", saccade.t_end, asdict(fit)))
        elif isinstance(event, GapStarted):
            self.transitions.gap_break()
            self._last_fixation = None
        elif isinstance(event, GapEnded):
            pass
        else:
            raise TypeError(f"unexpected classifier event {type(event).__name__}")
