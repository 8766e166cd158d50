"""Client-side session engine: canonical history, request loop, scheduling.

The engine is a passive state machine driven by explicit timestamps, so
the virtual-time harness and a wall-clock driver share every code path.
A driver is expected to, per frame boundary: call play_due(now), then
maybe_build_request(now) and dispatch whatever it returns; and to call
apply_response / on_user_note as those events arrive. All mutation goes
through these entry points (one serialized event queue in the live app).

Scheduling contract:
  * One request per frame, targets strictly increasing. Several may be in
    flight at once: with a round trip of W frames and a lookahead of K,
    each response still contributes K-W future frames, which keeps
    playback gapless whenever W < K. Stale responses (target at or below
    the last applied one) are discarded.
  * Commit protection is a sliding window: once a frame lies within
    commit_frames of the playhead and has a scheduled chord, that chord
    is frozen; later responses may not change it (mismatches are kept out
    and logged). This is what makes committed chords audible exactly as
    promised regardless of latency.
  * Underrun policy: a live frame with no scheduled entry sustains the
    current sound (no new onset), is recorded as HOLD, and bumps the
    underrun counter.
  * HOLD resolution: when a plan is scheduled, each HOLD token is
    resolved to the chord it continues within that same response. At
    play time an unresolved HOLD just extends whatever is sounding, but
    a HOLD whose resolved chord is not ringing starts it: plans whose
    chord onset fell inside the silence period (or was dropped by a late
    response) still become audible at the first playable frame.
  * Warm-start chords are stored for history substitution only; they are
    never scheduled and never played.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import codec, wire
from .codec import CHORD_HOLD, CHORD_NC, NoteEvent
from .core import FrameClock, SessionSettings, SettingsError
from .server import JamRequest, JamResponse

METRONOME_TICK_PITCH = 76
METRONOME_ACCENT_PITCH = 88

IDLE, SILENCE, LIVE, STOPPED = "idle", "silence", "live", "stopped"


class StateError(RuntimeError):
    """Operation not valid in the engine's current phase."""


@dataclass(frozen=True)
class EmittedEvent:
    """Boundary to the audio/UI layer. due == time_of_frame(frame) for
    frame-aligned kinds (chords, metronome)."""

    kind: str  # chord_on | chord_off | note_echo | metronome_tick
    pitches: tuple[int, ...]
    frame: int
    due: float


@dataclass
class RequestLog:
    target: int
    sent_ms: float
    commit_frames: int
    recv_ms: float = -1.0
    gen_ms: float = -1.0


@dataclass
class SettingsEpoch:
    from_frame: int
    settings: SessionSettings


class JamEngine:
    def __init__(self, settings: SessionSettings, session_id: str = "local"):
        settings.validate()
        self.session_id = session_id
        self.settings = settings
        self.phase = IDLE
        self.clock: Optional[FrameClock] = None

        self.events: list[NoteEvent] = []
        self._open_notes: dict[int, int] = {}

        self.played: list[int] = []          # chord code per consumed frame
        # frame -> (token code, resolved sounding code or None, voicing)
        self.pending: dict[int, tuple[int, Optional[int], tuple[int, ...]]] = {}
        self.committed_value: dict[int, int] = {}
        self.committed_horizon = 0
        self.warm: Optional[tuple[int, np.ndarray]] = None

        self.underruns = 0
        self.underrun_frames: list[int] = []
        self.commit_violations = 0
        self.plan_compared = 0
        self.plan_changed = 0

        self.request_log: list[RequestLog] = []
        self._log_by_target: dict[int, RequestLog] = {}
        self.notes_log: list[str] = []

        self.epochs: list[SettingsEpoch] = []
        self._last_built_target = 0
        self._last_applied_target = -1
        self._next_frame = 0
        self._sounding: Optional[int] = None  # symbol code currently on
        self._outbox: list[EmittedEvent] = []
        self.total_frames: Optional[int] = None

    # ------------------------------------------------------------------
    # Input
    # ------------------------------------------------------------------

    def on_user_note(self, pitch: int, is_on: bool, now: float) -> None:
        """Record a note on/off. The first note-on starts the session:
        its timestamp becomes frame 0 and the silence period begins."""
        if self.phase == STOPPED:
            self.notes_log.append(f"note after stop ignored (pitch {pitch})")
            return
        if self.phase == IDLE:
            if not is_on:
                self.notes_log.append(f"note-off before session start ignored (pitch {pitch})")
                return
            self.clock = FrameClock(self.settings.bpm, session_start_ms=now)
            self.phase = SILENCE if self.settings.silence_frames > 0 else LIVE
            self.epochs.append(SettingsEpoch(0, self.settings))
        if is_on:
            if pitch in self._open_notes:
                self._close_note(pitch, now)  # retrigger implies release
            self._open_notes[pitch] = len(self.events)
            self.events.append(NoteEvent(pitch, now))
            self._outbox.append(EmittedEvent(
                "note_echo", (pitch,), self.clock.frame_at(now), now))
        else:
            if pitch not in self._open_notes:
                self.notes_log.append(f"unmatched note-off ignored (pitch {pitch})")
                return
            self._close_note(pitch, now)

    def _close_note(self, pitch: int, now: float) -> None:
        idx = self._open_notes.pop(pitch)
        ev = self.events[idx]
        off = now if now > ev.on_ms else ev.on_ms + 1e-3  # zero-length guard
        self.events[idx] = replace(ev, off_ms=off)

    # ------------------------------------------------------------------
    # Settings
    # ------------------------------------------------------------------

    def update_settings(self, **changes) -> None:
        """Apply mid-session setting changes; they take effect on the next
        request. BPM is immutable once the session has started."""
        new = self.settings.with_changes(**changes)
        new.validate()
        if self.phase != IDLE and new.bpm != self.settings.bpm:
            raise SettingsError("bpm cannot change once a session has started")
        self.settings = new
        if self.phase in (SILENCE, LIVE):
            self.epochs.append(SettingsEpoch(self._next_frame, new))

    # ------------------------------------------------------------------
    # Request loop
    # ------------------------------------------------------------------

    def maybe_build_request(self, now: float) -> Optional[JamRequest]:
        """The next request, or None when the target frame has not advanced
        yet (one request per frame, targets strictly increasing)."""
        if self.phase not in (SILENCE, LIVE):
            return None
        target = self.clock.frame_at(now) + 1
        if target <= self._last_built_target:
            return None
        if self._next_frame < target:
            raise StateError(
                f"play_due must reach frame {target - 1} before building a request for {target}")
        self._freeze_window(target - 1)

        melody = codec.melody_strings(codec.monophonize(self.events, self.clock, target))
        history = list(self.played[:target])
        if self.warm is not None:
            start, warm_codes = self.warm
            for f in range(start, min(len(warm_codes) + start, target)):
                if history[f] == CHORD_NC:
                    history[f] = int(warm_codes[f - start])
        chords = codec.chord_strings(np.asarray(history, dtype=np.int16))

        committed: list[tuple[int, str]] = []
        for f in range(target, target + self.settings.commit_frames):
            if f not in self.pending:
                break
            committed.append((f, codec.CHORD_CODE_TO_STR[self.pending[f][0]]))

        entry = RequestLog(target, now, self.settings.commit_frames)
        self.request_log.append(entry)
        self._log_by_target[target] = entry
        self._last_built_target = target
        return JamRequest(
            session_id=self.session_id,
            target_frame=target,
            settings=self.settings,
            melody=melody,
            chords=chords,
            committed=committed,
        )

    def apply_response(self, resp: JamResponse, now: float) -> bool:
        """Cancel-and-replace the scheduled plan with a response.

        Frames already past are dropped; frames inside the commit horizon
        keep their frozen chord (a differing echo is logged, not played);
        everything else is replaced. Stale responses (target not beyond
        the last applied) are discarded. Returns True when applied."""
        if self.phase not in (SILENCE, LIVE):
            return False
        if resp.target_frame <= self._last_applied_target:
            self.notes_log.append(f"stale response for target {resp.target_frame} discarded")
            return False
        entry = self._log_by_target.get(resp.target_frame)
        if entry is not None:
            entry.recv_ms = now
            entry.gen_ms = resp.gen_ms
        else:
            self.notes_log.append(f"response for unrequested target {resp.target_frame}")

        cur = self.clock.frame_at(now)
        self._freeze_window(cur)
        try:
            new_codes = codec.parse_chord_tokens(resp.chords)
        except codec.TokenError as e:
            self.notes_log.append(f"response with bad chords dropped: {e}")
            return False

        commit_frames = entry.commit_frames if entry is not None else self.settings.commit_frames
        churn_start = resp.target_frame + commit_frames
        for i, code in enumerate(new_codes):
            f = resp.target_frame + i
            if f > cur and f >= churn_start and f in self.pending:
                self.plan_compared += 1
                if self.pending[f][0] != int(code):
                    self.plan_changed += 1

        for f in list(self.pending):
            if f > cur and f not in self.committed_value:
                del self.pending[f]
        carry: Optional[int] = None  # chord each HOLD continues, plan-internal
        for i, code in enumerate(new_codes):
            f = resp.target_frame + i
            code = int(code)
            if code != CHORD_HOLD:
                carry = code
            if f <= cur or f < self.settings.silence_frames:
                continue
            if f in self.committed_value:
                if self.committed_value[f] != code:
                    self.notes_log.append(
                        f"response disagrees with committed chord at frame {f}; keeping commitment")
                continue
            sounding = carry if code == CHORD_HOLD else code
            voicing = (tuple(codec.voice_chord(sounding))
                       if sounding is not None and sounding >= 2 else ())
            self.pending[f] = (code, sounding, voicing)

        if resp.warm_start is not None:
            if self.warm is None:
                try:
                    self.warm = (resp.warm_start.start_frame,
                                 codec.parse_chord_tokens(resp.warm_start.chords))
                except codec.TokenError as e:
                    self.notes_log.append(f"bad warm start ignored: {e}")
            else:
                self.notes_log.append(
                    f"duplicate warm start (target {resp.target_frame}) ignored")

        self._freeze_window(cur)
        self._last_applied_target = resp.target_frame
        return True

    def _freeze_window(self, cur: int) -> None:
        """Frames in (cur, cur + 1 + commit_frames) are committed: pin the
        scheduled chord for any of them that has one."""
        horizon = cur + 1 + self.settings.commit_frames
        if horizon > self.committed_horizon:
            self.committed_horizon = horizon
        for f in range(cur + 1, horizon):
            if f in self.pending and f not in self.committed_value:
                self.committed_value[f] = self.pending[f][0]

    # ------------------------------------------------------------------
    # Playback
    # ------------------------------------------------------------------

    def play_due(self, now: float) -> list[EmittedEvent]:
        """Emit everything due at or before `now`: queued note echoes,
        metronome ticks, and the chord for every elapsed frame."""
        out = self._outbox
        self._outbox = []
        if self.phase not in (SILENCE, LIVE):
            return out
        cur = self.clock.frame_at(now)
        while self._next_frame <= cur:
            f = self._next_frame
            self._consume_frame(f, out)
            self._next_frame += 1
        return out

    def _consume_frame(self, f: int, out: list[EmittedEvent]) -> None:
        due = self.clock.time_of_frame(f)
        settings = self.settings
        if self.phase == SILENCE and f >= settings.silence_frames:
            self.phase = LIVE
        self._freeze_window(f)

        if settings.metronome_on and f % 4 == 0:
            accent = f % (4 * settings.beats_per_measure) == 0
            pitch = METRONOME_ACCENT_PITCH if accent else METRONOME_TICK_PITCH
            out.append(EmittedEvent("metronome_tick", (pitch,), f, due))

        item = self.pending.pop(f, None)
        if item is None:
            if f < settings.silence_frames:
                played = CHORD_NC
            else:
                self.underruns += 1
                self.underrun_frames.append(f)
                played = CHORD_HOLD if f > 0 else CHORD_NC
        else:
            code, sounding, voicing = item
            if code >= 2:
                # explicit strike, even when the same chord already rings
                if self._sounding is not None:
                    out.append(EmittedEvent("chord_off", (), f, due))
                out.append(EmittedEvent("chord_on", voicing, f, due))
                self._sounding = code
            elif sounding is None or sounding == self._sounding:
                pass  # HOLD of whatever is (or is not) ringing
            elif sounding == CHORD_NC:
                if self._sounding is not None:
                    out.append(EmittedEvent("chord_off", (), f, due))
                self._sounding = None
            else:
                # HOLD of a chord that never started (onset fell in the
                # silence period or was dropped): start it now
                if self._sounding is not None:
                    out.append(EmittedEvent("chord_off", (), f, due))
                out.append(EmittedEvent("chord_on", voicing, f, due))
                self._sounding = sounding
            played = code

        expected = self.committed_value.pop(f, None)
        if expected is not None and expected != played:
            self.commit_violations += 1
        self.played.append(played)

    # ------------------------------------------------------------------
    # Shutdown and export
    # ------------------------------------------------------------------

    def stop(self, now: float) -> list[EmittedEvent]:
        """Consume through `now`, silence the synth, freeze the session."""
        if self.phase not in (SILENCE, LIVE):
            return []
        out = self.play_due(now)
        n = self.clock.frame_at(now)
        if self._sounding is not None:
            out.append(EmittedEvent("chord_off", (), n, now))
            self._sounding = None
        self.total_frames = n
        del self.played[n:]
        self.phase = STOPPED
        return out

    def export_record(self) -> "SessionRecord":
        if self.phase != STOPPED:
            raise StateError("export requires a stopped session")
        n = self.total_frames or 0
        melody = codec.melody_strings(codec.monophonize(self.events, self.clock, n))
        warm_frame, warm_chords = -1, []
        if self.warm is not None:
            warm_frame = self.warm[0]
            warm_chords = codec.chord_strings(self.warm[1])
        return SessionRecord(
            bpm=self.clock.bpm,
            session_start_ms=self.clock.session_start_ms,
            frames=n,
            melody=melody,
            chords=codec.chord_strings(np.asarray(self.played, dtype=np.int16)),
            warm_start_frame=warm_frame,
            warm_start_chords=warm_chords,
            epochs=list(self.epochs),
            requests=list(self.request_log),
            underruns=self.underruns,
            underrun_frames=list(self.underrun_frames),
        )


# ---------------------------------------------------------------------------
# Session records (.jam files)
# ---------------------------------------------------------------------------

@dataclass
class SessionRecord:
    """Everything needed to inspect or replay a finished session."""

    bpm: float
    session_start_ms: float
    frames: int
    melody: list[str]
    chords: list[str]
    warm_start_frame: int
    warm_start_chords: list[str]
    epochs: list[SettingsEpoch]
    requests: list[RequestLog]
    underruns: int
    underrun_frames: list[int] = field(default_factory=list)

    def to_text(self) -> str:
        eps = self.epochs
        items = [
            ("kind", "session"),
            ("format", "1"),
            ("bpm", repr(float(self.bpm))),
            ("frames_per_beat", "4"),
            ("session_start_ms", repr(float(self.session_start_ms))),
            ("frames", str(self.frames)),
            ("underruns", str(self.underruns)),
            ("melody", " ".join(self.melody)),
            ("chords", " ".join(self.chords)),
            ("warm_start_frame", str(self.warm_start_frame)),
            ("warm_start_chords", " ".join(self.warm_start_chords)),
            ("epoch_from_frame", " ".join(str(e.from_frame) for e in eps)),
            ("epoch_beats_per_measure", " ".join(str(e.settings.beats_per_measure) for e in eps)),
            ("epoch_silence_beats", " ".join(str(e.settings.silence_beats) for e in eps)),
            ("epoch_lookahead_beats", " ".join(str(e.settings.lookahead_beats) for e in eps)),
            ("epoch_commit_beats", " ".join(str(e.settings.commit_beats) for e in eps)),
            ("epoch_temperature", " ".join(repr(float(e.settings.temperature)) for e in eps)),
            ("epoch_model_id", " ".join(e.settings.model_id for e in eps)),
            ("epoch_metronome_on", " ".join("1" if e.settings.metronome_on else "0" for e in eps)),
            ("epoch_show_incoming_chords", " ".join("1" if e.settings.show_incoming_chords else "0" for e in eps)),
            ("epoch_seed", " ".join(str(e.settings.seed) for e in eps)),
            ("req_target", " ".join(str(r.target) for r in self.requests)),
            ("req_commit_frames", " ".join(str(r.commit_frames) for r in self.requests)),
            ("req_sent_ms", " ".join(repr(float(r.sent_ms)) for r in self.requests)),
            ("req_recv_ms", " ".join(repr(float(r.recv_ms)) for r in self.requests)),
            ("req_gen_ms", " ".join(repr(float(r.gen_ms)) for r in self.requests)),
            ("underrun_frames", " ".join(str(f) for f in self.underrun_frames)),
        ]
        return wire.encode_lines(items)

    @classmethod
    def from_text(cls, text: str) -> "SessionRecord":
        doc = wire.parse_lines(text)
        if doc.get("kind") != "session" or doc.get("format") != "1":
            raise ValueError("not a format-1 session record")

        def ints(key: str) -> list[int]:
            return [int(x) for x in doc.get(key, "").split()]

        def floats(key: str) -> list[float]:
            return [float(x) for x in doc.get(key, "").split()]

        n_ep = len(ints("epoch_from_frame"))
        epochs = []
        for i in range(n_ep):
            epochs.append(SettingsEpoch(
                from_frame=ints("epoch_from_frame")[i],
                settings=SessionSettings(
                    bpm=float(doc["bpm"]),
                    beats_per_measure=ints("epoch_beats_per_measure")[i],
                    silence_beats=ints("epoch_silence_beats")[i],
                    lookahead_beats=ints("epoch_lookahead_beats")[i],
                    commit_beats=ints("epoch_commit_beats")[i],
                    temperature=floats("epoch_temperature")[i],
                    model_id=doc["epoch_model_id"].split()[i],
                    metronome_on=doc["epoch_metronome_on"].split()[i] == "1",
                    show_incoming_chords=doc["epoch_show_incoming_chords"].split()[i] == "1",
                    seed=ints("epoch_seed")[i],
                ),
            ))
        requests = []
        for i in range(len(ints("req_target"))):
            requests.append(RequestLog(
                target=ints("req_target")[i],
                sent_ms=floats("req_sent_ms")[i],
                commit_frames=ints("req_commit_frames")[i],
                recv_ms=floats("req_recv_ms")[i],
                gen_ms=floats("req_gen_ms")[i],
            ))
        return cls(
            bpm=float(doc["bpm"]),
            session_start_ms=float(doc["session_start_ms"]),
            frames=int(doc["frames"]),
            melody=doc.get("melody", "").split(),
            chords=doc.get("chords", "").split(),
            warm_start_frame=int(doc["warm_start_frame"]),
            warm_start_chords=doc.get("warm_start_chords", "").split(),
            epochs=epochs,
            requests=requests,
            underruns=int(doc["underruns"]),
            underrun_frames=ints("underrun_frames"),
        )
