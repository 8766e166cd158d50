"""Hot numeric kernels with numba and pure-numpy twins.

Three inner loops dominate simulation and generation time: resolving the
sounding pitch per frame from a melody token stream, scoring all 84 chord
symbols against a melody window, and rasterizing note events onto the
frame grid. Each has a numba @njit implementation and a vectorized numpy
fallback; set JAMLOOP_NO_NUMBA=1 (or lose the numba import) to force the
numpy path. `benchmarks/bench_kernels.py` compares the two.

Token code conventions (shared with jamloop.codec):
  melody: 0 = REST, 1 = HOLD, 2+pitch = ONSET   (codes 0..129)
  chord:  0 = NO_CHORD, 1 = HOLD, 2 + root*7 + quality = SYMBOL (0..85)
"""

from __future__ import annotations

import os

import numpy as np

_HOLD = 1  # both streams use code 1 for HOLD
_REST = 0

N_SYMBOLS = 84


# ---------------------------------------------------------------------------
# Pure-numpy implementations
# ---------------------------------------------------------------------------

def _sounding_pitch_np(melody_codes: np.ndarray) -> np.ndarray:
    """MIDI pitch sounding in each frame, -1 where nothing sounds.

    ONSET starts a pitch, HOLD extends the previous frame's pitch, REST
    silences. A HOLD with nothing sounding before it resolves to -1.
    """
    codes = np.asarray(melody_codes, dtype=np.int64)
    n = codes.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int32)
    idx = np.arange(n, dtype=np.int64)
    # Index of the most recent non-HOLD token at or before each frame.
    anchor = np.where(codes != _HOLD, idx, -1)
    anchor = np.maximum.accumulate(anchor)
    base = np.where(codes >= 2, codes - 2, -1).astype(np.int32)
    out = np.where(anchor >= 0, base[np.maximum(anchor, 0)], -1)
    return out.astype(np.int32)


def _compat_scores_np(pcs: np.ndarray, membership: np.ndarray) -> np.ndarray:
    """Per-symbol compatibility of a window of sounding pitch classes.

    pcs: int array, pitch class per frame, -1 for rest frames (skipped).
    membership: uint8[84, 12], membership[s, pc] == 1 iff pc is a chord tone.
    Score = (#frames whose pc is a chord tone) - (#frames whose pc is not);
    rest frames contribute 0.
    """
    pcs = np.asarray(pcs, dtype=np.int64)
    sounding = pcs[pcs >= 0]
    if sounding.size == 0:
        return np.zeros(N_SYMBOLS, dtype=np.int32)
    hits = membership[:, sounding].sum(axis=1, dtype=np.int64)
    return (2 * hits - sounding.size).astype(np.int32)


def _monophonize_fill_np(on_frames: np.ndarray, through: np.ndarray,
                         pitches: np.ndarray, upto: int) -> np.ndarray:
    """Rasterize selected note events onto [0, upto) as melody codes.

    on_frames is non-decreasing. Within a frame only the first event wins
    (the rest are dropped entirely); the winner holds until its `through`
    frame (inclusive) or until the next onset truncates it.
    """
    out = np.zeros(upto, dtype=np.int16)  # REST
    if upto <= 0 or on_frames.size == 0:
        return out
    valid = on_frames < upto
    on_f = on_frames[valid]
    thr = through[valid]
    pit = pitches[valid]
    if on_f.size == 0:
        return out
    # First event per onset frame wins; write in reverse so the earliest
    # list index is the one that sticks.
    first = np.full(upto, -1, dtype=np.int64)
    first[on_f[::-1]] = np.arange(on_f.size - 1, -1, -1, dtype=np.int64)
    onset_frames = np.flatnonzero(first >= 0)
    sel = first[onset_frames]
    sel_through = np.minimum(thr[sel], upto - 1)
    # Truncate each hold at the next onset.
    nxt = np.empty_like(onset_frames)
    nxt[:-1] = onset_frames[1:] - 1
    nxt[-1] = upto - 1
    sel_through = np.minimum(sel_through, nxt)
    out[onset_frames] = 2 + pit[sel].astype(np.int16)
    # Fill HOLD runs (onset_frame, sel_through] via a difference array.
    starts = onset_frames + 1
    ends = sel_through + 1  # exclusive
    mask_delta = np.zeros(upto + 1, dtype=np.int64)
    run = starts <= sel_through
    np.add.at(mask_delta, starts[run], 1)
    np.add.at(mask_delta, ends[run], -1)
    hold_mask = np.cumsum(mask_delta[:-1]) > 0
    out[hold_mask] = _HOLD
    return out


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def sounding_pitch_nb(melody_codes):
        n = melody_codes.shape[0]
        out = np.empty(n, dtype=np.int32)
        cur = np.int32(-1)
        for i in range(n):
            c = melody_codes[i]
            if c >= 2:
                cur = np.int32(c - 2)
            elif c == 0:
                cur = np.int32(-1)
            out[i] = cur
        return out

    @njit(cache=True)
    def compat_scores_nb(pcs, membership):
        scores = np.zeros(N_SYMBOLS, dtype=np.int32)
        n_sounding = 0
        for i in range(pcs.shape[0]):
            pc = pcs[i]
            if pc < 0:
                continue
            n_sounding += 1
            for s in range(N_SYMBOLS):
                if membership[s, pc]:
                    scores[s] += 2
        if n_sounding:
            for s in range(N_SYMBOLS):
                scores[s] -= n_sounding
        return scores

    @njit(cache=True)
    def monophonize_fill_nb(on_frames, through, pitches, upto):
        out = np.zeros(upto, dtype=np.int16)
        n = on_frames.shape[0]
        if upto <= 0 or n == 0:
            return out
        active_through = np.int64(-1)
        i = 0
        for f in range(upto):
            selected = -1
            while i < n and on_frames[i] == f:
                if selected < 0:
                    selected = i
                i += 1
            if selected >= 0:
                out[f] = 2 + pitches[selected]
                active_through = through[selected]
            elif f <= active_through:
                out[f] = 1  # HOLD
        return out

    return sounding_pitch_nb, compat_scores_nb, monophonize_fill_nb


_DISABLED = os.environ.get("JAMLOOP_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")
_backend = "numpy"
sounding_pitch = _sounding_pitch_np
compat_scores = _compat_scores_np
monophonize_fill = _monophonize_fill_np

if not _DISABLED:
    try:
        sounding_pitch, compat_scores, monophonize_fill = _build_numba_kernels()
        _backend = "numba"
    except ImportError:
        pass


def backend_name() -> str:
    """Which kernel path is active: 'numba' or 'numpy'."""
    return _backend


def warmup() -> None:
    """Force JIT compilation now (a few seconds, once per process) so the
    first live request does not pay for it."""
    sounding_pitch(np.array([2, _HOLD, _REST], dtype=np.int16))
    compat_scores(np.array([0, -1], dtype=np.int64),
                  np.zeros((N_SYMBOLS, 12), dtype=np.uint8))
    monophonize_fill(np.array([0], dtype=np.int64), np.array([1], dtype=np.int64),
                     np.array([60], dtype=np.int32), 4)


def numpy_kernels():
    """The pure-numpy implementations, for equivalence tests and benchmarks."""
    return _sounding_pitch_np, _compat_scores_np, _monophonize_fill_np
