"""jamloop: frame-synchronized live accompaniment.

A user plays melody; a pluggable agent answers with chords a few beats
ahead of time. The pieces: a frame clock (core), token codecs (codec),
stand-in agents (agents), the stateless request handler (server), the
wire format and service (wire, service), the client-side engine
(engine), and a deterministic virtual-time latency harness (simharness).
"""

from .core import FRAMES_PER_BEAT, FrameClock, SessionSettings, frame_duration_ms
from .engine import JamEngine, SessionRecord
from .server import JamRequest, JamResponse, WireError, handle_request
from .simharness import LatencyModel, ScriptedMelody, SimReport, compare_runs, run_sim

__all__ = [
    "FRAMES_PER_BEAT",
    "FrameClock",
    "SessionSettings",
    "frame_duration_ms",
    "JamEngine",
    "SessionRecord",
    "JamRequest",
    "JamResponse",
    "WireError",
    "handle_request",
    "LatencyModel",
    "ScriptedMelody",
    "SimReport",
    "compare_runs",
    "run_sim",
]

__version__ = "0.1.0"
