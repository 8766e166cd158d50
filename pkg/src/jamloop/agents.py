"""Pluggable accompaniment agents: online (incremental) and offline roles.

These are deterministic/stochastic stand-ins that preserve the interface
a learned model would sit behind: incremental interleaved token
generation, a conditioning window capped at 512 tokens, temperature
control, and the online/offline asymmetry (online sees only the past,
offline sees the whole melody). A real model can replace them without
touching the protocol.

Registry ids:
  markov-online  chord transitions biased toward holds and fifth-related
                 roots, weighted by melody compatibility
  naive-online   same transitions with compatibility weighting disabled
                 (plays incoherently on purpose, for contrast)
  rule-offline   the warm-start harmonizer; its live surface weighs beat
                 chords by compatibility alone

The melody anticipator is deliberately the weakest piece: it sustains
whatever is sounding at the context frontier and never invents onsets.

Randomness: each request gets its own generator seeded by (session seed,
target frame), so retried requests are idempotent and sessions are
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .codec import (
    CHORD_HOLD,
    CHORD_MEMBERSHIP,
    CHORD_NC,
    MELODY_HOLD,
    MELODY_REST,
    N_SYMBOLS,
)

MAX_CONTEXT_TOKENS = 512
COMPAT_WINDOW_FRAMES = 8
BEAT_FRAMES = 4

_SEED_MASK = (1 << 64) - 1


class AgentError(ValueError):
    """Malformed context or distribution."""


@dataclass
class ContextStats:
    """Process-wide conditioning-window instrumentation."""

    calls: int = 0
    max_tokens: int = 0

    def record(self, token_count: int) -> None:
        assert token_count <= MAX_CONTEXT_TOKENS, (
            f"agent call saw {token_count} context tokens (cap {MAX_CONTEXT_TOKENS})"
        )
        self.calls += 1
        if token_count > self.max_tokens:
            self.max_tokens = token_count

    def reset(self) -> None:
        self.calls = 0
        self.max_tokens = 0


instrumentation = ContextStats()


@dataclass
class AgentContext:
    """Sliding window over the interleaved session history.

    sounding: resolved sounding pitch per context frame (-1 = rest);
      includes the current frame's melody when predicting a chord.
    chords: chord codes per fully generated context frame.
    current_frame: absolute index of the frame being generated.
    token_count: interleaved tokens in the window (instrumented <= 512).
    """

    sounding: np.ndarray
    chords: np.ndarray
    current_frame: int
    rng: np.random.Generator
    token_count: int

    @classmethod
    def for_melody(cls, sounding_full: np.ndarray, chords_full: np.ndarray,
                   frame: int, rng: np.random.Generator) -> "AgentContext":
        """Context for predicting the melody token of `frame`: both streams
        complete through frame-1 (a whole number of frame pairs)."""
        lo = max(0, frame - MAX_CONTEXT_TOKENS // 2)
        ctx = cls(sounding_full[lo:frame], chords_full[lo:frame], frame, rng,
                  2 * (frame - lo))
        instrumentation.record(ctx.token_count)
        return ctx

    @classmethod
    def for_chord(cls, sounding_full: np.ndarray, chords_full: np.ndarray,
                  frame: int, rng: np.random.Generator) -> "AgentContext":
        """Context for predicting the chord token of `frame`: melody is
        known through `frame` inclusive, chords through frame-1."""
        lo = max(0, frame - (MAX_CONTEXT_TOKENS // 2 - 1))
        ctx = cls(sounding_full[lo:frame + 1], chords_full[lo:frame], frame, rng,
                  2 * (frame - lo) + 1)
        instrumentation.record(ctx.token_count)
        return ctx


@dataclass
class TokenDistribution:
    """Weights over candidate tokens of one kind, codes strictly ascending."""

    kind: str  # "melody" | "chord"
    codes: np.ndarray
    weights: np.ndarray

    def validate(self) -> None:
        if self.codes.size == 0 or self.codes.size != self.weights.size:
            raise AgentError("distribution needs matching, non-empty codes/weights")
        if np.any(np.diff(self.codes) <= 0):
            raise AgentError("candidate codes must be strictly ascending")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise AgentError("weights must be finite and non-negative")
        if not np.any(self.weights > 0):
            raise AgentError("all-zero weights")


def sample(dist: TokenDistribution, temperature: float, rng: np.random.Generator) -> int:
    """Draw one token code.

    temperature 0 is a pure argmax (ties to the lowest code, which is the
    first occurrence since codes ascend); temperature t > 0 samples
    proportional to weight**(1/t), consuming exactly one rng draw.
    """
    dist.validate()
    if temperature < 0 or not math.isfinite(temperature):
        raise AgentError(f"temperature must be a non-negative finite number, got {temperature}")
    w = dist.weights
    if temperature == 0:
        return int(dist.codes[int(np.argmax(w))])
    with np.errstate(divide="ignore"):
        logw = np.where(w > 0, np.log(w), -np.inf)
    # Normalize before dividing so tiny temperatures stay finite.
    p = np.exp((logw - logw.max()) / temperature)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return int(dist.codes[min(idx, len(cdf) - 1)])


def request_rng(seed: int, target_frame: int) -> np.random.Generator:
    """Per-request stream keyed by (session seed, target frame)."""
    return np.random.default_rng([seed & _SEED_MASK, int(target_frame)])


# ---------------------------------------------------------------------------
# Online stand-ins
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OnlineSpec:
    """Knobs distinguishing the registered online stand-ins."""

    transition_bias: bool
    compat_weight: bool


ONLINE_SPECS = {
    "markov-online": OnlineSpec(transition_bias=True, compat_weight=True),
    "naive-online": OnlineSpec(transition_bias=True, compat_weight=False),
    "rule-offline": OnlineSpec(transition_bias=False, compat_weight=True),
}

KNOWN_MODELS = tuple(ONLINE_SPECS)

_HOLD_SAME_BASE = 3.0
_FIFTH_BASE = 2.0


def _prev_sounding_chord(chords: np.ndarray) -> int:
    """Symbol code sounding at the frontier, or -1 for silence.

    HOLD extends; NO_CHORD resets. Truncated-away history (window starts
    mid-hold) resolves to silence.
    """
    nonhold = np.flatnonzero(chords != CHORD_HOLD)
    if nonhold.size == 0:
        return -1
    code = int(chords[nonhold[-1]])
    return code if code >= 2 else -1


def _window_pcs(sounding: np.ndarray) -> np.ndarray:
    tail = sounding[-COMPAT_WINDOW_FRAMES:]
    return np.where(tail >= 0, tail % 12, -1).astype(np.int64)


def online_chord_dist(ctx: AgentContext, spec: OnlineSpec) -> TokenDistribution:
    """Chord distribution at the context frontier.

    Off-beat frames sustain (HOLD, or NO_CHORD while nothing has sounded).
    On beat frames every symbol competes with weight
    base(prev -> c) * exp(compat(c, last 8 melody frames)); the sustain
    candidate scores a neutral compat of 0 (it has no pitch classes), so
    holds win through rests but defer to any positively matching symbol.
    That keeps the stand-in audible: a plan crossing the silence boundary
    re-onsets instead of holding a chord the client never played.
    """
    prev = _prev_sounding_chord(ctx.chords)
    sustain_code = CHORD_HOLD if prev >= 0 else CHORD_NC
    if ctx.current_frame % BEAT_FRAMES != 0:
        return TokenDistribution(
            "chord", np.array([sustain_code], dtype=np.int16), np.ones(1))

    codes = np.empty(1 + N_SYMBOLS, dtype=np.int16)
    codes[0] = sustain_code
    codes[1:] = 2 + np.arange(N_SYMBOLS, dtype=np.int16)

    base = np.ones(1 + N_SYMBOLS)
    if spec.transition_bias and prev >= 0:
        base[0] = _HOLD_SAME_BASE
        root_diff = (np.arange(N_SYMBOLS) // 7 - (prev - 2) // 7) % 12
        base[1:][(root_diff == 7) | (root_diff == 5)] = _FIFTH_BASE
        base[1 + (prev - 2)] = _HOLD_SAME_BASE

    scores = np.zeros(1 + N_SYMBOLS)
    if spec.compat_weight:
        scores[1:] = kernels.compat_scores(_window_pcs(ctx.sounding), CHORD_MEMBERSHIP)
    weights = base * np.exp(scores)
    return TokenDistribution("chord", codes, weights)


def online_melody_dist(ctx: AgentContext) -> TokenDistribution:
    """Sustain anticipation: HOLD while a note sounds at the frontier,
    REST otherwise. Never invents onsets."""
    sounding = ctx.sounding.size > 0 and int(ctx.sounding[-1]) >= 0
    code = MELODY_HOLD if sounding else MELODY_REST
    return TokenDistribution("melody", np.array([code], dtype=np.int16), np.ones(1))


# ---------------------------------------------------------------------------
# Offline harmonizer
# ---------------------------------------------------------------------------

def offline_harmonize(melody_codes: np.ndarray, start: int, end: int) -> np.ndarray:
    """Deterministic whole-melody harmonization over frames [start, end).

    The span is cut into beat-aligned 4-frame windows (aligned to the
    global frame grid, so partial windows can occur at the edges). Each
    window takes the symbol with the best compatibility over its sounding
    pitch classes, ties broken by (root asc, quality order); all-rest
    windows get NO_CHORD. The winner is emitted on the window's first
    frame with HOLD after.
    """
    if not 0 <= start < end <= len(melody_codes):
        raise AgentError(f"bad harmonize span [{start}, {end}) for melody of {len(melody_codes)} frames")
    sounding = kernels.sounding_pitch(np.asarray(melody_codes, dtype=np.int16))
    pcs = np.where(sounding >= 0, sounding % 12, -1).astype(np.int64)
    out = np.empty(end - start, dtype=np.int16)
    w = start - start % BEAT_FRAMES
    while w < end:
        lo = max(w, start)
        hi = min(w + BEAT_FRAMES, end)
        window = pcs[lo:hi]
        if np.all(window < 0):
            head = CHORD_NC
        else:
            scores = kernels.compat_scores(window, CHORD_MEMBERSHIP)
            head = 2 + int(np.argmax(scores))
        out[lo - start] = head
        out[lo - start + 1:hi - start] = CHORD_HOLD
        w += BEAT_FRAMES
    return out
