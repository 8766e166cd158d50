"""Frame-grid tokenization of melody and chords.

Both streams carry exactly one token per frame. Melody tokens are REST,
HOLD, or ONSET(pitch 0..127); chord tokens are NO_CHORD, HOLD, or
SYMBOL(root pitch class 0..11, one of 7 qualities). HOLD always means
"extend the previous frame's state", so change rates are measurable
straight off the token stream; a HOLD at frame 0, or a melody HOLD right
after a REST, is invalid.

Internally tokens are small integer codes held in numpy arrays (see
jamloop.kernels for the layout); the string grammar below is what goes on
the wire and into session exports, bit-exact:

    melody: "R" | "H" | "N<pitch>"            e.g. "N60"
    chord:  "NC" | "H" | "<root>:<quality>"   e.g. "0:maj", "9:min7"
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .core import FrameClock

MELODY_REST = 0
MELODY_HOLD = 1
CHORD_NC = 0
CHORD_HOLD = 1

QUALITIES = ("maj", "min", "dim", "aug", "maj7", "min7", "dom7")
QUALITY_TEMPLATES = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
    "dom7": (0, 4, 7, 10),
}

N_MELODY_TOKENS = 130  # R, H, 128 onsets
N_CHORD_TOKENS = 86    # NC, H, 84 symbols
N_SYMBOLS = 84


class TokenError(ValueError):
    """A token string or stream violates the grammar."""


def melody_onset(pitch: int) -> int:
    if not 0 <= pitch <= 127:
        raise TokenError(f"pitch {pitch} outside 0..127")
    return 2 + pitch


def chord_symbol(root: int, quality: str) -> int:
    if not 0 <= root <= 11:
        raise TokenError(f"chord root {root} outside 0..11")
    try:
        qi = QUALITIES.index(quality)
    except ValueError:
        raise TokenError(f"unknown chord quality {quality!r}") from None
    return 2 + root * 7 + qi


def symbol_root_quality(code: int) -> tuple[int, str]:
    if not 2 <= code < N_CHORD_TOKENS:
        raise TokenError(f"chord code {code} is not a symbol")
    sym = code - 2
    return sym // 7, QUALITIES[sym % 7]


# String <-> code lookup tables cover the whole vocabulary, so a plain
# dict hit doubles as grammar validation.
MELODY_STR_TO_CODE = {"R": MELODY_REST, "H": MELODY_HOLD}
MELODY_STR_TO_CODE.update({f"N{p}": 2 + p for p in range(128)})
MELODY_CODE_TO_STR = {v: k for k, v in MELODY_STR_TO_CODE.items()}

CHORD_STR_TO_CODE = {"NC": CHORD_NC, "H": CHORD_HOLD}
CHORD_STR_TO_CODE.update({
    f"{root}:{q}": chord_symbol(root, q) for root in range(12) for q in QUALITIES
})
CHORD_CODE_TO_STR = {v: k for k, v in CHORD_STR_TO_CODE.items()}

# membership[s, pc] == 1 iff pc is a tone of symbol code s+2.
CHORD_MEMBERSHIP = np.zeros((N_SYMBOLS, 12), dtype=np.uint8)
for _root in range(12):
    for _qi, _q in enumerate(QUALITIES):
        for _iv in QUALITY_TEMPLATES[_q]:
            CHORD_MEMBERSHIP[_root * 7 + _qi, (_root + _iv) % 12] = 1


def parse_melody_tokens(tokens: Sequence[str]) -> np.ndarray:
    try:
        codes = list(map(MELODY_STR_TO_CODE.__getitem__, tokens))
    except KeyError:
        for i, t in enumerate(tokens):
            if t not in MELODY_STR_TO_CODE:
                raise TokenError(f"bad melody token {t!r} at position {i}") from None
        raise
    return np.asarray(codes, dtype=np.int16)


def parse_chord_tokens(tokens: Sequence[str]) -> np.ndarray:
    try:
        codes = list(map(CHORD_STR_TO_CODE.__getitem__, tokens))
    except KeyError:
        for i, t in enumerate(tokens):
            if t not in CHORD_STR_TO_CODE:
                raise TokenError(f"bad chord token {t!r} at position {i}") from None
        raise
    return np.asarray(codes, dtype=np.int16)


def melody_strings(codes: np.ndarray) -> list[str]:
    return [MELODY_CODE_TO_STR[int(c)] for c in codes]


def chord_strings(codes: np.ndarray) -> list[str]:
    return [CHORD_CODE_TO_STR[int(c)] for c in codes]


def first_melody_violation(codes: np.ndarray) -> int:
    """Index of the first continuity violation, or -1 if the stream is valid.

    A melody HOLD needs a note to extend: HOLD at frame 0 or directly
    after a REST is invalid. (One token per frame already guarantees
    monophony.)
    """
    if codes.size == 0:
        return -1
    if codes[0] == MELODY_HOLD:
        return 0
    bad = (codes[1:] == MELODY_HOLD) & (codes[:-1] == MELODY_REST)
    hits = np.flatnonzero(bad)
    return int(hits[0]) + 1 if hits.size else -1


def first_chord_violation(codes: np.ndarray) -> int:
    """Index of the first chord-stream violation, or -1.

    Chord HOLD extends whatever preceded it (a symbol or silence), so
    only a HOLD at frame 0 is invalid.
    """
    if codes.size and codes[0] == CHORD_HOLD:
        return 0
    return -1


# ---------------------------------------------------------------------------
# Raw input -> melody grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoteEvent:
    """A raw keyboard/MIDI note before quantization. off_ms None = still held."""

    pitch: int
    on_ms: float
    off_ms: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise TokenError(f"pitch {self.pitch} outside 0..127")
        if self.off_ms is not None and not self.off_ms > self.on_ms:
            raise TokenError(
                f"note off at {self.off_ms} does not follow note on at {self.on_ms}"
            )


def monophonize(events: Sequence[NoteEvent], clock: FrameClock, upto: int) -> np.ndarray:
    """Reduce raw (possibly overlapping) notes to one melody token per frame.

    Within a frame the first-arriving onset wins and the others are
    dropped entirely; the winner emits HOLD while it keeps sounding into
    later frames, and any new onset truncates it. Events must be ordered
    by on_ms (ties resolved by list position).
    """
    if upto < 0:
        raise TokenError("upto must be non-negative")
    n = len(events)
    on_frames = np.empty(n, dtype=np.int64)
    through = np.empty(n, dtype=np.int64)
    pitches = np.empty(n, dtype=np.int32)
    prev_on = -np.inf
    for i, ev in enumerate(events):
        if ev.on_ms < prev_on:
            raise TokenError("events must be ordered by on_ms")
        prev_on = ev.on_ms
        f_on = clock.frame_at(ev.on_ms)
        on_frames[i] = f_on
        pitches[i] = ev.pitch
        if ev.off_ms is None:
            through[i] = np.iinfo(np.int64).max - 1
        else:
            # The note occupies every frame whose start it spills past; a
            # release exactly on a boundary does not reach the new frame.
            g = clock.frame_at(ev.off_ms)
            through[i] = g if ev.off_ms > clock.time_of_frame(g) else g - 1
    return kernels.monophonize_fill(on_frames, through, pitches, upto)


# ---------------------------------------------------------------------------
# Interleaving
# ---------------------------------------------------------------------------

@dataclass
class FrameGrid:
    """Parallel melody/chord token streams over the same frames."""

    melody: np.ndarray
    chords: np.ndarray

    def __post_init__(self) -> None:
        self.melody = np.asarray(self.melody, dtype=np.int16)
        self.chords = np.asarray(self.chords, dtype=np.int16)
        if self.melody.shape != self.chords.shape or self.melody.ndim != 1:
            raise TokenError("melody and chord streams must be 1-d and equal length")

    def __len__(self) -> int:
        return int(self.melody.shape[0])

    def __eq__(self, other) -> bool:
        return (isinstance(other, FrameGrid)
                and np.array_equal(self.melody, other.melody)
                and np.array_equal(self.chords, other.chords))


def interleave(grid: FrameGrid) -> list[str]:
    """Per frame, melody token then chord token; length is 2x frames.

    Melody-before-chord is load-bearing: an online accompanist reacts to
    the melody within the same frame, and a fixed order keeps the
    512-token conditioning window deterministic.
    """
    mel = melody_strings(grid.melody)
    cho = chord_strings(grid.chords)
    out: list[str] = []
    for m, c in zip(mel, cho):
        out.append(m)
        out.append(c)
    return out


def deinterleave(seq: Sequence[str]) -> FrameGrid:
    """Inverse of interleave; reports the index of any kind mismatch."""
    if len(seq) % 2 != 0:
        raise TokenError(f"interleaved sequence length {len(seq)} is odd")
    mel = np.empty(len(seq) // 2, dtype=np.int16)
    cho = np.empty(len(seq) // 2, dtype=np.int16)
    for i, tok in enumerate(seq):
        table = MELODY_STR_TO_CODE if i % 2 == 0 else CHORD_STR_TO_CODE
        kind = "melody" if i % 2 == 0 else "chord"
        code = table.get(tok)
        if code is None:
            raise TokenError(f"expected {kind} token at position {i}, got {tok!r}")
        if i % 2 == 0:
            mel[i // 2] = code
        else:
            cho[i // 2] = code
    return FrameGrid(mel, cho)


# ---------------------------------------------------------------------------
# Voicing
# ---------------------------------------------------------------------------

def chord_pcs(code: int) -> frozenset[int]:
    """Pitch-class set of a SYMBOL chord code."""
    root, quality = symbol_root_quality(code)
    return frozenset((root + iv) % 12 for iv in QUALITY_TEMPLATES[quality])


def voice_chord(code: int) -> list[int]:
    """Root-position voicing: root in the octave below middle C (48..59),
    remaining chord tones stacked strictly ascending above it."""
    root, quality = symbol_root_quality(code)
    base = 48 + root
    return [base + iv for iv in QUALITY_TEMPLATES[quality]]
