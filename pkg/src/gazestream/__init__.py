"""gazestream: a real-time gaze analytics engine.

Replays recorded eye-tracking trials as live streams, classifies fixations
and saccades incrementally (I-VT), computes advanced gaze measures -
ambient/focal coefficient K, RIPA, gaze-transition matrices and entropies,
main-sequence fits, positional statistics - and publishes everything as
typed message streams over websocket or to JSONL files.
"""

from .classification import (
    Event,
    FixationCompleted,
    GapEnded,
    GapStarted,
    IvtClassifier,
    IvtConfig,
    SaccadeCompleted,
)
from .core import (
    Fixation,
    GazeSample,
    Geometry,
    Saccade,
    angular_velocity,
    clamp_to_screen,
    combine_eyes,
    px_to_deg,
)
from .errors import (
    ConfigError,
    EmptyStreamError,
    GazeStreamError,
    IngestionError,
    MalformedStreamError,
    SinkClosed,
)
from .ingest import MAX_SPEED, ColumnMap, ReplayClock, ReplayReport, parse, replay
from .measures import (
    KSample,
    KTracker,
    MainSequenceFit,
    MainSequenceTracker,
    PositionalStats,
    PositionalTracker,
    RunningStats,
    coefficient_k,
)
from .pupillometry import (
    GapBreak,
    P2Quantile,
    PcpdTracker,
    PupilPreprocessor,
    PupilValue,
    RipaTracker,
    SgFilter,
    pcpd,
    sg_coefficients,
)
from .transitions import (
    Aoi,
    AoiSet,
    TransitionSnapshot,
    TransitionTracker,
    aoi_hit,
    stationary_entropy,
    transition_entropy,
)

__version__ = "0.1.0"
