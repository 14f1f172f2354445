from .config import PupilConfig, SessionConfig, build_session_config, load_session_config
from .envelope import PROTOCOL_VERSION, STREAMS, EnvelopeStamper, MeasureEnvelope
from .pipeline import AnalyticsPipeline
from .runtime import GazeServer, Hub, Session, Subscriber, prepare_samples, run_batch

__all__ = [
    "AnalyticsPipeline",
    "EnvelopeStamper",
    "GazeServer",
    "Hub",
    "MeasureEnvelope",
    "PROTOCOL_VERSION",
    "PupilConfig",
    "STREAMS",
    "Session",
    "SessionConfig",
    "Subscriber",
    "build_session_config",
    "load_session_config",
    "prepare_samples",
    "run_batch",
]
