"""Deterministic virtual-time harness wiring engine <-> server.

No sleeping and no sockets: a single event heap advances virtual
milliseconds, scripted notes stand in for the human, each wire leg is
delayed by an injected latency model, and the real request handler runs
in-process (requests and responses still round-trip through the wire
codec so the sim exercises the actual format). Given identical inputs a
run is bit-reproducible, which turns the latency-robustness claims into
fast tests.

Latency model values are per-leg delays (request leg and response leg
drawn independently); use fixed_rtt_beats / "fixed-rtt:2beats" to express
a round-trip budget, which is split evenly across the legs and converted
through the frame clock so scenarios stay BPM-portable.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import agents, codec, wire
from .core import FRAMES_PER_BEAT, FrameClock, SessionSettings
from .engine import EmittedEvent, JamEngine, SessionRecord
from .server import JamRequest, JamResponse, WireError, handle_request


class SimError(RuntimeError):
    """The simulation hit an invalid configuration or a protocol error."""


# ---------------------------------------------------------------------------
# Latency models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyModel:
    """Injected one-way delay, applied independently to each wire leg.

    kinds: fixed(ms) | uniform(lo_ms, hi_ms) | spike(base_ms, spike_ms,
    period_n) where every period_n-th draw on a leg is a spike. Values
    may be denominated in beats; they resolve against the session clock.
    """

    kind: str
    params: tuple[float, ...]
    unit: str = "ms"  # "ms" | "beats"

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform", "spike"):
            raise SimError(f"unknown latency kind {self.kind!r}")
        if any(p < 0 for p in self.params):
            raise SimError("latency delays must be non-negative")
        if self.kind == "spike" and self.params[2] < 1:
            raise SimError("spike period must be >= 1")
        if self.kind == "uniform" and self.params[1] < self.params[0]:
            raise SimError("uniform latency needs lo <= hi")

    @classmethod
    def fixed(cls, ms: float) -> "LatencyModel":
        return cls("fixed", (float(ms),))

    @classmethod
    def uniform(cls, lo_ms: float, hi_ms: float) -> "LatencyModel":
        if hi_ms < lo_ms:
            raise SimError("uniform latency needs lo <= hi")
        return cls("uniform", (float(lo_ms), float(hi_ms)))

    @classmethod
    def spike(cls, base_ms: float, spike_ms: float, period_n: int) -> "LatencyModel":
        if period_n < 1:
            raise SimError("spike period must be >= 1")
        return cls("spike", (float(base_ms), float(spike_ms), float(period_n)))

    @classmethod
    def fixed_rtt_beats(cls, beats: float) -> "LatencyModel":
        """Fixed round trip of `beats`, half on each leg."""
        return cls("fixed", (beats / 2.0,), unit="beats")

    @classmethod
    def parse(cls, spec: str) -> "LatencyModel":
        """Parse CLI specs: none | fixed:800ms | fixed:1beat |
        fixed-rtt:2beats | uniform:20ms:80ms | spike:50ms:900ms:8"""
        spec = spec.strip().lower()
        if spec in ("none", "0", "zero"):
            return cls.fixed(0.0)
        head, _, rest = spec.partition(":")
        parts = rest.split(":") if rest else []

        def value(p: str) -> tuple[float, str]:
            for suffix, unit in (("ms", "ms"), ("beats", "beats"), ("beat", "beats")):
                if p.endswith(suffix):
                    return float(p[:-len(suffix)]), unit
            return float(p), "ms"

        try:
            if head == "fixed" and len(parts) == 1:
                v, unit = value(parts[0])
                return cls("fixed", (v,), unit)
            if head == "fixed-rtt" and len(parts) == 1:
                v, unit = value(parts[0])
                return cls("fixed", (v / 2.0,), unit)
            if head == "uniform" and len(parts) == 2:
                (lo, u1), (hi, u2) = value(parts[0]), value(parts[1])
                if u1 != u2:
                    raise SimError("uniform bounds must share a unit")
                return cls("uniform", (lo, hi), u1)
            if head == "spike" and len(parts) == 3:
                (b, u1), (s, u2) = value(parts[0]), value(parts[1])
                if u1 != u2:
                    raise SimError("spike values must share a unit")
                return cls("spike", (b, s, float(int(parts[2]))), u1)
        except ValueError as e:
            raise SimError(f"bad latency spec {spec!r}: {e}") from None
        raise SimError(f"bad latency spec {spec!r}")

    def resolve(self, clock: FrameClock) -> "_ResolvedLatency":
        params = self.params
        if self.unit == "beats":
            params = tuple(p * FRAMES_PER_BEAT * clock.frame_ms for p in params)
        return _ResolvedLatency(self.kind, params)

    def max_delay_ms(self, clock: FrameClock) -> float:
        """Worst-case one-way delay, for lookahead-vs-waiting arithmetic."""
        params = self.resolve(clock).params
        if self.kind == "fixed":
            return params[0]
        if self.kind == "uniform":
            return params[1]
        return max(params[0], params[1])


class _ResolvedLatency:
    def __init__(self, kind: str, params: tuple[float, ...]):
        self.kind = kind
        self.params = params
        self._counts = {"req": 0, "resp": 0}

    def draw(self, leg: str, rng: np.random.Generator) -> float:
        n = self._counts[leg]
        self._counts[leg] = n + 1
        if self.kind == "fixed":
            return self.params[0]
        if self.kind == "uniform":
            lo, hi = self.params
            return float(rng.uniform(lo, hi))
        base, spike, period = self.params
        return spike if (n + 1) % int(period) == 0 else base


class _ReplayLatency:
    """Feeds back the round trips recorded in a session log, half per leg;
    unanswered requests become effectively infinite delays."""

    def __init__(self, rtts_ms: list[float]):
        self._rtts = rtts_ms
        self._i = 0

    def draw(self, leg: str, rng: np.random.Generator) -> float:
        i = self._i
        if leg == "resp":
            self._i += 1
        if i >= len(self._rtts):
            return math.inf
        rtt = self._rtts[i]
        return math.inf if rtt < 0 else rtt / 2.0


# ---------------------------------------------------------------------------
# Scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScriptedMelody:
    """(frame, pitch, duration_frames) entries standing in for the human."""

    notes: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        for frame, pitch, dur in self.notes:
            if frame < 0:
                raise SimError(f"script frame {frame} is negative")
            if not 0 <= pitch <= 127:
                raise SimError(f"script pitch {pitch} outside 0..127")
            if dur < 1:
                raise SimError(f"script duration {dur} must be >= 1 frame")

    def normalized(self) -> "ScriptedMelody":
        """Shift so the first note lands on frame 0 (frame 0 is defined as
        the frame of the user's first note)."""
        if not self.notes:
            return self
        lo = min(f for f, _, _ in self.notes)
        if lo == 0:
            return self
        return ScriptedMelody(tuple((f - lo, p, d) for f, p, d in self.notes))

    def last_frame(self) -> int:
        return max((f for f, _, _ in self.notes), default=-1)

    def to_text(self) -> str:
        lines = ["# frame pitch duration_frames"]
        lines += [f"{f} {p} {d}" for f, p, d in self.notes]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ScriptedMelody":
        notes = []
        for ln, line in enumerate(text.splitlines()):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise SimError(f"script line {ln}: expected 'frame pitch duration'")
            notes.append((int(parts[0]), int(parts[1]), int(parts[2])))
        return cls(tuple(notes))


def arpeggio_script(beats: int = 8) -> ScriptedMelody:
    """Quarter-note C-major arpeggio (the 8-beat pattern tiles)."""
    pattern = (60, 64, 67, 72, 67, 64, 60, 64)
    notes = [(b * 4, pattern[b % 8], 3) for b in range(beats)]
    return ScriptedMelody(tuple(notes))


def chromatic_script(beats: int = 8) -> ScriptedMelody:
    """1/16th-note chromatic run, one octave up and wrapping."""
    notes = [(f, 60 + f % 12, 1) for f in range(beats * 4)]
    return ScriptedMelody(tuple(notes))


def sparse_script(beats: int = 8) -> ScriptedMelody:
    """Long tones with long rests: two beats on, two beats off."""
    pitches = (67, 64, 69, 60)
    notes = [((4 * i) * 4, pitches[i % 4], 8) for i in range((beats + 3) // 4)]
    return ScriptedMelody(tuple(n for n in notes if n[0] < beats * 4))


FIXTURE_SCRIPTS: dict[str, Callable[[int], ScriptedMelody]] = {
    "arpeggio": arpeggio_script,
    "chromatic": chromatic_script,
    "sparse": sparse_script,
}


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class SimReport:
    underruns: int
    commit_violations: int
    plan_churn: float
    plan_compared: int
    plan_changed: int
    response_p50_ms: float
    response_p95_ms: float
    response_max_ms: float
    requests_sent: int
    requests_answered: int
    chords_played: list[str]
    frames_simulated: int
    warm_start_targets: list[int]
    max_context_tokens: int
    underrun_frames: list[int]
    record: Optional[SessionRecord] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "record"}
        return d


def compare_runs(a: SimReport, b: SimReport) -> dict:
    """Signed per-metric deltas (b minus a). Reports over different
    horizons are not comparable."""
    if a.frames_simulated != b.frames_simulated:
        raise SimError(
            f"cannot compare runs over different horizons "
            f"({a.frames_simulated} vs {b.frames_simulated} frames)")
    metrics = (
        "underruns", "commit_violations", "plan_churn", "plan_compared",
        "plan_changed", "response_p50_ms", "response_p95_ms", "response_max_ms",
        "requests_sent", "requests_answered",
    )
    diff = {m: getattr(b, m) - getattr(a, m) for m in metrics}
    diff["chords_changed"] = sum(
        1 for x, y in zip(a.chords_played, b.chords_played) if x != y)
    return diff


@dataclass
class SimTrace:
    requests: list[tuple[float, JamRequest]] = field(default_factory=list)
    responses: list[tuple[float, JamResponse]] = field(default_factory=list)
    emitted: list[EmittedEvent] = field(default_factory=list)


# ---------------------------------------------------------------------------
# The simulator
# ---------------------------------------------------------------------------

def run_sim(script: ScriptedMelody, settings: SessionSettings, latency: LatencyModel,
            seed: Optional[int] = None, beats: int = 32, frames: Optional[int] = None,
            keep_trace: bool = False,
            handler: Callable[[JamRequest], "JamResponse | WireError"] = handle_request,
            ) -> "SimReport | tuple[SimReport, SimTrace]":
    """Advance virtual time frame by frame and report protocol health.

    Fully deterministic given (script, settings, latency, seed): the seed
    overrides settings.seed and also feeds the latency model's generator.
    """
    if seed is not None:
        settings = settings.with_changes(seed=seed)
    settings.validate()
    horizon = frames if frames is not None else beats * FRAMES_PER_BEAT
    script = script.normalized()
    if not script.notes:
        raise SimError("script must contain at least one note")
    if script.last_frame() >= horizon:
        raise SimError(
            f"script frame {script.last_frame()} is beyond the {horizon}-frame horizon")

    clock = FrameClock(settings.bpm, session_start_ms=0.0)
    lat = latency.resolve(clock) if isinstance(latency, LatencyModel) else latency
    lat_rng = np.random.default_rng([settings.seed & (1 << 64) - 1, 0xFA11])
    engine = JamEngine(settings, session_id="sim")
    trace = SimTrace()
    agents.instrumentation.reset()

    heap: list[tuple[float, int, str, object]] = []
    seq = 0

    def push(t: float, kind: str, payload: object = None) -> None:
        nonlocal seq
        if math.isfinite(t):
            heapq.heappush(heap, (t, seq, kind, payload))
        seq += 1

    for frame, pitch, dur in script.notes:
        push(clock.time_of_frame(frame), "note_on", pitch)
        push(clock.time_of_frame(frame + dur), "note_off", pitch)
    for f in range(horizon):
        push(clock.time_of_frame(f), "frame", f)
    end_time = clock.time_of_frame(horizon)
    push(end_time, "end")

    warm_targets: list[int] = []

    def dispatch(req: JamRequest, now: float) -> None:
        req_delay = lat.draw("req", lat_rng)
        resp_delay = lat.draw("resp", lat_rng)
        if keep_trace:
            trace.requests.append((now, req))
        decoded = wire.decode_request(wire.encode_request(req))
        if isinstance(decoded, WireError):
            raise SimError(f"request failed wire roundtrip: {decoded.code}: {decoded.detail}")
        result = handler(decoded)
        if isinstance(result, WireError):
            raise SimError(f"server rejected sim request: {result.code}: {result.detail}")
        result.gen_ms = 0.0  # wall time is noise under virtual time
        push(now + req_delay + resp_delay, "resp", wire.encode_response(result))

    def pump(now: float) -> None:
        req = engine.maybe_build_request(now)
        if req is not None:
            dispatch(req, now)

    while heap:
        now, _, kind, payload = heapq.heappop(heap)
        if now > end_time:
            break
        if kind == "note_on":
            engine.on_user_note(payload, True, now)
        elif kind == "note_off":
            engine.on_user_note(payload, False, now)
        elif kind == "frame":
            events = engine.play_due(now)
            if keep_trace:
                trace.emitted.extend(events)
            pump(now)
        elif kind == "resp":
            resp = wire.decode_response(payload)
            if isinstance(resp, WireError):
                raise SimError(f"response failed wire roundtrip: {resp.code}")
            if resp.warm_start is not None:
                warm_targets.append(resp.target_frame)
            if keep_trace:
                trace.responses.append((now, resp))
            events = engine.play_due(now)
            if keep_trace:
                trace.emitted.extend(events)
            engine.apply_response(resp, now)
            pump(now)
        elif kind == "end":
            events = engine.stop(now)
            if keep_trace:
                trace.emitted.extend(events)
            break

    record = engine.export_record()
    rtts = [r.recv_ms - r.sent_ms for r in engine.request_log if r.recv_ms >= 0]
    answered = len(rtts)
    report = SimReport(
        underruns=engine.underruns,
        commit_violations=engine.commit_violations,
        plan_churn=(engine.plan_changed / engine.plan_compared) if engine.plan_compared else 0.0,
        plan_compared=engine.plan_compared,
        plan_changed=engine.plan_changed,
        response_p50_ms=float(np.percentile(rtts, 50)) if rtts else 0.0,
        response_p95_ms=float(np.percentile(rtts, 95)) if rtts else 0.0,
        response_max_ms=max(rtts) if rtts else 0.0,
        requests_sent=len(engine.request_log),
        requests_answered=answered,
        chords_played=record.chords,
        frames_simulated=horizon,
        warm_start_targets=warm_targets,
        max_context_tokens=agents.instrumentation.max_tokens,
        underrun_frames=list(engine.underrun_frames),
        record=record,
    )
    if keep_trace:
        return report, trace
    return report


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def record_to_script(record: SessionRecord) -> ScriptedMelody:
    """Reconstruct the scripted melody from a record's (monophonic) grid."""
    codes = codec.parse_melody_tokens(record.melody)
    notes = []
    f = 0
    while f < len(codes):
        if codes[f] >= 2:
            dur = 1
            while f + dur < len(codes) and codes[f + dur] == codec.MELODY_HOLD:
                dur += 1
            notes.append((f, int(codes[f]) - 2, dur))
            f += dur
        else:
            f += 1
    return ScriptedMelody(tuple(notes))


def replay_record(record: SessionRecord, as_recorded_latency: bool = True,
                  ) -> tuple[SimReport, bool]:
    """Re-run a session record through the sim; True when the replay's
    played chords match the record exactly.

    With as_recorded_latency the request log's round trips are injected
    back (so even latency-shaped runs reproduce); otherwise a zero-latency
    loopback is used, which matches records produced at zero latency."""
    if not record.epochs:
        raise SimError("record has no settings epochs")
    if len(record.epochs) > 1:
        raise SimError("replay supports single-epoch records only")
    settings = record.epochs[0].settings
    script = record_to_script(record)
    if as_recorded_latency:
        lat = _ReplayLatency([r.recv_ms - r.sent_ms if r.recv_ms >= 0 else -1.0
                              for r in record.requests])
    else:
        lat = LatencyModel.fixed(0.0).resolve(FrameClock(settings.bpm, 0.0))
    report = run_sim(script, settings, lat, frames=record.frames)
    return report, report.chords_played == record.chords
