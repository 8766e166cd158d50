"""Frame clock and session settings shared by every other module.

Time is discretized into frames of one 1/16th note: 4 frames per
quarter-note beat, so one frame lasts 60000/(bpm*4) milliseconds. All
protocol math (history lengths, lookahead windows, scheduling) is done in
frame indices; wall-clock time enters only through FrameClock, which is
the single authority for mapping between the two.

Everything here is an immutable value. BPM is fixed for the lifetime of a
session (remapping frames mid-session would move every scheduled event);
all other settings may change between requests. Clocks are injectable:
the simulation harness drives virtual milliseconds through the same code
paths the live client uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

FRAMES_PER_BEAT = 4


class SettingsError(ValueError):
    """A session/clock parameter violates its contract."""


def frame_duration_ms(bpm: float) -> float:
    """Length of one 1/16th-note frame in milliseconds.

    At 150 BPM a frame lasts exactly 100 ms, which is what makes
    sub-100ms responses good enough for single-frame round trips.
    """
    if not (isinstance(bpm, (int, float)) and math.isfinite(bpm) and bpm > 0):
        raise SettingsError(f"bpm must be a positive finite number, got {bpm!r}")
    return 60000.0 / (bpm * FRAMES_PER_BEAT)


@dataclass(frozen=True)
class FrameClock:
    """Maps wall-clock milliseconds to frame indices and back.

    frame 0 starts at session_start_ms (the instant of the user's first
    note). A timestamp exactly on a frame boundary belongs to the frame
    that starts there.
    """

    bpm: float
    session_start_ms: float
    frames_per_beat: int = FRAMES_PER_BEAT

    def __post_init__(self) -> None:
        frame_duration_ms(self.bpm)  # validates bpm
        if self.frames_per_beat != FRAMES_PER_BEAT:
            raise SettingsError("frames_per_beat is fixed at 4 (one frame per 1/16th note)")
        if not math.isfinite(self.session_start_ms):
            raise SettingsError("session_start_ms must be finite")

    @property
    def frame_ms(self) -> float:
        return frame_duration_ms(self.bpm)

    def time_of_frame(self, frame: int) -> float:
        """Wall-clock start time of `frame` in ms."""
        return self.session_start_ms + frame * self.frame_ms

    def frame_at(self, now_ms: float) -> int:
        """Index of the frame containing `now_ms`.

        Robust against float rounding: the result f is the unique index
        with time_of_frame(f) <= now_ms < time_of_frame(f+1), so
        frame_at(time_of_frame(f)) == f for every f.
        """
        if now_ms < self.session_start_ms:
            raise SettingsError(
                f"timestamp {now_ms} precedes session start {self.session_start_ms}"
            )
        f = int((now_ms - self.session_start_ms) // self.frame_ms)
        # Nudge across boundaries the float division got wrong.
        while self.time_of_frame(f + 1) <= now_ms:
            f += 1
        while f > 0 and self.time_of_frame(f) > now_ms:
            f -= 1
        return f


# Baseline configuration: lookahead 4 beats, commit 4 beats, 8 beats of
# initial silence, temperature 1, metronome and incoming chords on.
#
# Deliberately not self-validating: requests arrive off the wire carrying
# arbitrary values, and the request validator needs an instance to inspect
# before it can reject it. Call validate() at trust boundaries.
@dataclass(frozen=True)
class SessionSettings:
    """Per-session knobs carried in every request (the server is stateless)."""

    bpm: float = 120.0
    beats_per_measure: int = 4
    silence_beats: int = 8
    lookahead_beats: int = 4
    commit_beats: int = 4
    temperature: float = 1.0
    model_id: str = "markov-online"
    metronome_on: bool = True
    show_incoming_chords: bool = True
    seed: int = 0

    def validate(self) -> None:
        frame_duration_ms(self.bpm)
        if not (isinstance(self.beats_per_measure, int) and self.beats_per_measure >= 1):
            raise SettingsError(f"beats_per_measure must be a positive integer, got {self.beats_per_measure!r}")
        if not (isinstance(self.silence_beats, int) and self.silence_beats >= 0):
            raise SettingsError(f"silence_beats must be a non-negative integer, got {self.silence_beats!r}")
        if not (isinstance(self.lookahead_beats, int) and self.lookahead_beats >= 1):
            raise SettingsError(f"lookahead_beats must be a positive integer, got {self.lookahead_beats!r}")
        if not (isinstance(self.commit_beats, int) and self.commit_beats >= 0):
            raise SettingsError(f"commit_beats must be a non-negative integer, got {self.commit_beats!r}")
        if self.commit_beats > self.lookahead_beats:
            raise SettingsError(
                f"commit_beats ({self.commit_beats}) must not exceed lookahead_beats ({self.lookahead_beats})"
            )
        if not (isinstance(self.temperature, (int, float)) and math.isfinite(self.temperature)
                and self.temperature >= 0):
            raise SettingsError(f"temperature must be a non-negative finite number, got {self.temperature!r}")
        if not isinstance(self.model_id, str) or not self.model_id:
            raise SettingsError("model_id must be a non-empty string")
        if not isinstance(self.seed, int):
            raise SettingsError(f"seed must be an integer, got {self.seed!r}")

    # Frame-denominated quantities are exact integers by construction.
    @property
    def silence_frames(self) -> int:
        return FRAMES_PER_BEAT * self.silence_beats

    @property
    def lookahead_frames(self) -> int:
        return FRAMES_PER_BEAT * self.lookahead_beats

    @property
    def commit_frames(self) -> int:
        return FRAMES_PER_BEAT * self.commit_beats

    def with_changes(self, **changes) -> "SessionSettings":
        return replace(self, **changes)
