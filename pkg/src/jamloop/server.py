"""Stateless request handler: validate, warm-start, commit fill, adaptive fill.

A request carries the entire session history plus the chords currently in
the lookahead, so the handler is a pure function of the request (and the
seed embedded in its settings). Identical requests produce byte-identical
responses; nothing is stored between calls.

Handler steps, in order: validate (including re-checking that the melody
token stream is a well-formed monophony), infer and run the one-shot
offline warm start, generate the commit period (anticipating melody,
then pinning the committed chords from the request), generate the
adaptive period, voice every symbol, assemble the response.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import codec, kernels
from .agents import (
    KNOWN_MODELS,
    ONLINE_SPECS,
    AgentContext,
    offline_harmonize,
    online_chord_dist,
    online_melody_dist,
    request_rng,
    sample,
)
from .codec import MELODY_HOLD, TokenError
from .core import SessionSettings, SettingsError

SESSION_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,64}$")

WARM_START_LEAD_FRAMES = 4

MALFORMED = "MALFORMED"
BAD_SETTINGS = "BAD_SETTINGS"
UNKNOWN_MODEL = "UNKNOWN_MODEL"
INCONSISTENT_HISTORY = "INCONSISTENT_HISTORY"


@dataclass
class WireError:
    code: str
    detail: str


@dataclass
class WarmStart:
    """Offline-harmonized chords for frames [start_frame, start_frame+len);
    echoed into future histories but never played."""

    start_frame: int
    chords: list[str]


@dataclass
class JamRequest:
    session_id: str
    target_frame: int
    settings: SessionSettings
    melody: list[str]          # frames [0, target_frame)
    chords: list[str]          # frames [0, target_frame), as actually played
    committed: list[tuple[int, str]]  # contiguous from target_frame


@dataclass
class JamResponse:
    session_id: str
    target_frame: int
    chords: list[str]          # frames [target, target + lookahead_frames)
    voicings: list[list[int]]  # parallel; empty for HOLD / NO_CHORD
    warm_start: Optional[WarmStart] = None
    gen_ms: float = 0.0


@dataclass
class _Parsed:
    melody: np.ndarray
    chords: np.ndarray
    committed: dict[int, int] = field(default_factory=dict)


def _validate_and_parse(req: JamRequest) -> tuple[Optional[WireError], Optional[_Parsed]]:
    if not isinstance(req.session_id, str) or not SESSION_ID_RE.match(req.session_id):
        return WireError(MALFORMED, "session_id must match [A-Za-z0-9._-]{1,64}"), None
    if not isinstance(req.target_frame, int) or req.target_frame < 0:
        return WireError(MALFORMED, f"target_frame must be a non-negative integer, got {req.target_frame!r}"), None

    try:
        req.settings.validate()
    except SettingsError as e:
        return WireError(BAD_SETTINGS, str(e)), None
    if req.settings.model_id not in KNOWN_MODELS:
        return WireError(UNKNOWN_MODEL, f"model_id {req.settings.model_id!r} is not registered"), None

    t = req.target_frame
    if len(req.melody) != t or len(req.chords) != t:
        return WireError(
            INCONSISTENT_HISTORY,
            f"history arrays must cover frames [0, {t}): melody has {len(req.melody)}, chords {len(req.chords)}",
        ), None
    try:
        mel = codec.parse_melody_tokens(req.melody)
        cho = codec.parse_chord_tokens(req.chords)
    except TokenError as e:
        return WireError(MALFORMED, str(e)), None

    bad = codec.first_melody_violation(mel)
    if bad >= 0:
        return WireError(INCONSISTENT_HISTORY, f"melody HOLD with nothing sounding at frame {bad}"), None
    bad = codec.first_chord_violation(cho)
    if bad >= 0:
        return WireError(INCONSISTENT_HISTORY, f"chord HOLD at stream start (frame {bad})"), None

    committed: dict[int, int] = {}
    if len(req.committed) > req.settings.commit_frames:
        return WireError(
            INCONSISTENT_HISTORY,
            f"{len(req.committed)} committed entries exceed commit window of {req.settings.commit_frames}",
        ), None
    for i, (frame, tok) in enumerate(req.committed):
        if frame != t + i:
            return WireError(
                INCONSISTENT_HISTORY,
                f"committed frames must be contiguous from {t}; entry {i} is frame {frame}",
            ), None
        code = codec.CHORD_STR_TO_CODE.get(tok)
        if code is None:
            return WireError(MALFORMED, f"bad committed chord token {tok!r} at frame {frame}"), None
        committed[frame] = code
    return None, _Parsed(mel, cho, committed)


def validate_request(req: JamRequest) -> Optional[WireError]:
    """None when the request is acceptable, else the specific WireError.
    No generation happens on failure."""
    err, _ = _validate_and_parse(req)
    return err


def _warm_start_codes(req: JamRequest, parsed: _Parsed) -> Optional[np.ndarray]:
    """Offline chords for [0, target) iff the warm-start trigger holds.

    "Once per session" is inferred, never stored: the trigger needs the
    target to sit in the 4 frames before the silence period ends AND the
    played-chord history to be all NO_CHORD. Once any chord (including an
    echoed warm start) reaches the history, the trigger can no longer
    fire. The window, rather than a single frame, tolerates dropped
    requests.
    """
    sf = req.settings.silence_frames
    if sf < WARM_START_LEAD_FRAMES:
        return None
    if not sf - WARM_START_LEAD_FRAMES <= req.target_frame < sf:
        return None
    if req.target_frame == 0 or np.any(parsed.chords != codec.CHORD_NC):
        return None
    return offline_harmonize(parsed.melody, 0, req.target_frame)


def maybe_warm_start(req: JamRequest) -> Optional[list[str]]:
    """Public trigger check; token strings for frames [0, target) or None."""
    err, parsed = _validate_and_parse(req)
    if err is not None:
        raise ValueError(f"invalid request: {err.code}: {err.detail}")
    codes = _warm_start_codes(req, parsed)
    return None if codes is None else codec.chord_strings(codes)


class _Generation:
    """Autoregressive interleaved generation for one request.

    Holds the extended (history + generated) streams; melody anticipation
    and chord prediction advance one frame at a time through contexts
    capped at 512 tokens.
    """

    def __init__(self, melody: np.ndarray, chords: np.ndarray, settings: SessionSettings,
                 target: int, rng: np.random.Generator):
        lookahead = settings.lookahead_frames
        self.target = target
        self.settings = settings
        self.spec = ONLINE_SPECS[settings.model_id]
        self.rng = rng
        self.melody = np.concatenate([melody, np.zeros(lookahead, dtype=np.int16)])
        self.chords = np.concatenate([chords, np.zeros(lookahead, dtype=np.int16)])
        self.sounding = np.concatenate([
            kernels.sounding_pitch(melody).astype(np.int32),
            np.zeros(lookahead, dtype=np.int32),
        ])

    def gen_frame(self, f: int) -> None:
        temp = self.settings.temperature
        ctx = AgentContext.for_melody(self.sounding, self.chords, f, self.rng)
        mcode = sample(online_melody_dist(ctx), temp, self.rng)
        self.melody[f] = mcode
        self.sounding[f] = self.sounding[f - 1] if mcode == MELODY_HOLD else -1
        ctx = AgentContext.for_chord(self.sounding, self.chords, f, self.rng)
        self.chords[f] = sample(online_chord_dist(ctx, self.spec), temp, self.rng)

    def run_commit_period(self, committed: dict[int, int]) -> None:
        """Generate [target, target+commit) freely, then pin the chords the
        request committed. Frames without a committed entry (first
        requests, or a commit window raised mid-session) keep the
        generated chord."""
        t, c = self.target, self.settings.commit_frames
        end = t + min(c, self.settings.lookahead_frames)
        for f in range(t, end):
            self.gen_frame(f)
        for f in range(t, end):
            if f in committed:
                self.chords[f] = committed[f]

    def run_adaptive_period(self) -> None:
        start = self.target + min(self.settings.commit_frames, self.settings.lookahead_frames)
        for f in range(start, self.target + self.settings.lookahead_frames):
            self.gen_frame(f)

    def lookahead_chords(self) -> np.ndarray:
        return self.chords[self.target:self.target + self.settings.lookahead_frames]

    def anticipated_melody(self, upto: int) -> np.ndarray:
        return self.melody[self.target:upto]


def fill_commit_period(req: JamRequest, history: codec.FrameGrid,
                       rng: Optional[np.random.Generator] = None
                       ) -> tuple[list[str], list[str]]:
    """(anticipated melody tokens, fixed chord tokens) for the commit period.

    `history` is the grid for frames [0, target) with warm-start chords
    already substituted where applicable. The anticipated melody is
    ephemeral: callers must not persist it as session history.
    """
    err, parsed = _validate_and_parse(req)
    if err is not None:
        raise ValueError(f"invalid request: {err.code}: {err.detail}")
    rng = rng if rng is not None else request_rng(req.settings.seed, req.target_frame)
    gen = _Generation(history.melody, history.chords, req.settings, req.target_frame, rng)
    gen.run_commit_period(parsed.committed)
    end = req.target_frame + min(req.settings.commit_frames, req.settings.lookahead_frames)
    return (codec.melody_strings(gen.anticipated_melody(end)),
            codec.chord_strings(gen.chords[req.target_frame:end]))


def fill_adaptive_period(req: JamRequest, extended: codec.FrameGrid,
                         rng: Optional[np.random.Generator] = None) -> list[str]:
    """Chord tokens for the adaptive period, conditioned on history +
    committed chords + anticipated melody (the `extended` grid covers
    frames [0, target+commit)). Anticipated melody from this phase is
    discarded."""
    t = req.target_frame
    c = min(req.settings.commit_frames, req.settings.lookahead_frames)
    if len(extended) != t + c:
        raise ValueError(f"extended grid must cover frames [0, {t + c}), got {len(extended)}")
    rng = rng if rng is not None else request_rng(req.settings.seed, t)
    gen = _Generation(extended.melody, extended.chords, req.settings, t, rng)
    start = t + c
    for f in range(start, t + req.settings.lookahead_frames):
        gen.gen_frame(f)
    return codec.chord_strings(gen.chords[start:t + req.settings.lookahead_frames])


def handle_request(req: JamRequest) -> "JamResponse | WireError":
    """Run the full server pipeline for one request. Pure function of the
    request: no state survives between calls."""
    t0 = time.perf_counter()
    err, parsed = _validate_and_parse(req)
    if err is not None:
        return err

    warm_codes = _warm_start_codes(req, parsed)
    history_chords = parsed.chords if warm_codes is None else warm_codes

    rng = request_rng(req.settings.seed, req.target_frame)
    gen = _Generation(parsed.melody, history_chords, req.settings, req.target_frame, rng)
    gen.run_commit_period(parsed.committed)
    gen.run_adaptive_period()

    out_codes = gen.lookahead_chords()
    chords = codec.chord_strings(out_codes)
    voicings = [codec.voice_chord(int(c)) if c >= 2 else [] for c in out_codes]
    warm = None
    if warm_codes is not None:
        warm = WarmStart(0, codec.chord_strings(warm_codes))
    return JamResponse(
        session_id=req.session_id,
        target_frame=req.target_frame,
        chords=chords,
        voicings=voicings,
        warm_start=warm,
        gen_ms=(time.perf_counter() - t0) * 1000.0,
    )
