"""Wire format: length-prefixed flat key-value text documents.

One message = ASCII decimal byte length of the payload, a newline, then
the UTF-8 payload. A payload is a flat document: one "key" or
"key value" per line, keys in a fixed order so encoding is byte-exact and
diffs are stable. Array values are space-joined token strings (a bare key
line is an empty array); voicing entries join pitches with '+' and use
'-' for an empty voicing. The same document grammar is reused by session
exports (.jam files) and the service config file.

Documents are deliberately human-inspectable: `nc`ing the server and
typing a framed request by hand works.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .core import SessionSettings
from .server import (
    BAD_SETTINGS,
    MALFORMED,
    JamRequest,
    JamResponse,
    WarmStart,
    WireError,
)

MAX_MESSAGE_BYTES = 64 * 1024 * 1024

_ERROR_CODES = {MALFORMED, BAD_SETTINGS, "UNKNOWN_MODEL", "INCONSISTENT_HISTORY"}


class FramingError(ValueError):
    """The byte stream violates the length-prefix framing."""


# ---------------------------------------------------------------------------
# Document primitives
# ---------------------------------------------------------------------------

def encode_lines(items: Iterable[tuple[str, str]]) -> str:
    out = []
    for key, value in items:
        out.append(key if value == "" else f"{key} {value}")
    return "\n".join(out) + "\n"


def parse_lines(text: str) -> dict[str, str]:
    """Document -> {key: raw value string}. Duplicate keys are malformed."""
    doc: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        key, _, value = line.partition(" ")
        if key in doc:
            raise FramingError(f"duplicate key {key!r} at line {ln}")
        doc[key] = value
    return doc


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_bool(x: bool) -> str:
    return "1" if x else "0"


def _join(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def _split(value: str) -> list[str]:
    return value.split() if value else []


def _voicing_str(pitches: Sequence[int]) -> str:
    return "+".join(str(p) for p in pitches) if pitches else "-"


def _parse_voicing(entry: str) -> list[int]:
    if entry == "-":
        return []
    return [int(p) for p in entry.split("+")]


# ---------------------------------------------------------------------------
# Requests
# ---------------------------------------------------------------------------

def encode_request(req: JamRequest) -> str:
    s = req.settings
    items = [
        ("kind", "request"),
        ("session_id", req.session_id),
        ("target_frame", str(req.target_frame)),
        ("bpm", _fmt_float(s.bpm)),
        ("beats_per_measure", str(s.beats_per_measure)),
        ("silence_beats", str(s.silence_beats)),
        ("lookahead_beats", str(s.lookahead_beats)),
        ("commit_beats", str(s.commit_beats)),
        ("temperature", _fmt_float(s.temperature)),
        ("model_id", s.model_id),
        ("metronome_on", _fmt_bool(s.metronome_on)),
        ("show_incoming_chords", _fmt_bool(s.show_incoming_chords)),
        ("seed", str(s.seed)),
        ("melody", _join(req.melody)),
        ("chords", _join(req.chords)),
        ("committed_frames", _join(str(f) for f, _ in req.committed)),
        ("committed_chords", _join(tok for _, tok in req.committed)),
    ]
    return encode_lines(items)


_REQUEST_KEYS = (
    "kind session_id target_frame bpm beats_per_measure silence_beats "
    "lookahead_beats commit_beats temperature model_id metronome_on "
    "show_incoming_chords seed melody chords committed_frames committed_chords"
).split()


def decode_request(text: str) -> "JamRequest | WireError":
    """Parse a request document. Type-level problems (missing keys,
    non-numeric numbers) are MALFORMED; range/invariant checks belong to
    server.validate_request."""
    try:
        doc = parse_lines(text)
    except FramingError as e:
        return WireError(MALFORMED, str(e))
    missing = [k for k in _REQUEST_KEYS if k not in doc]
    if missing:
        return WireError(MALFORMED, f"missing keys: {' '.join(missing)}")
    unknown = [k for k in doc if k not in _REQUEST_KEYS]
    if unknown:
        return WireError(MALFORMED, f"unknown keys: {' '.join(unknown)}")
    if doc["kind"] != "request":
        return WireError(MALFORMED, f"expected kind request, got {doc['kind']!r}")
    try:
        settings = SessionSettings(
            bpm=float(doc["bpm"]),
            beats_per_measure=int(doc["beats_per_measure"]),
            silence_beats=int(doc["silence_beats"]),
            lookahead_beats=int(doc["lookahead_beats"]),
            commit_beats=int(doc["commit_beats"]),
            temperature=float(doc["temperature"]),
            model_id=doc["model_id"],
            metronome_on=_parse_bool(doc["metronome_on"]),
            show_incoming_chords=_parse_bool(doc["show_incoming_chords"]),
            seed=int(doc["seed"]),
        )
        target = int(doc["target_frame"])
        frames = [int(f) for f in _split(doc["committed_frames"])]
        chords = _split(doc["committed_chords"])
    except ValueError as e:
        return WireError(MALFORMED, f"bad field value: {e}")
    if len(frames) != len(chords):
        return WireError(MALFORMED, "committed_frames and committed_chords lengths differ")
    return JamRequest(
        session_id=doc["session_id"],
        target_frame=target,
        settings=settings,
        melody=_split(doc["melody"]),
        chords=_split(doc["chords"]),
        committed=list(zip(frames, chords)),
    )


def _parse_bool(v: str) -> bool:
    if v == "1":
        return True
    if v == "0":
        return False
    raise ValueError(f"flag must be 0 or 1, got {v!r}")


# ---------------------------------------------------------------------------
# Responses and errors
# ---------------------------------------------------------------------------

def encode_response(resp: JamResponse) -> str:
    items = [
        ("kind", "response"),
        ("session_id", resp.session_id),
        ("target_frame", str(resp.target_frame)),
        ("gen_ms", _fmt_float(resp.gen_ms)),
        ("chords", _join(resp.chords)),
        ("voicings", _join(_voicing_str(v) for v in resp.voicings)),
    ]
    if resp.warm_start is not None:
        items.append(("warm_start_frame", str(resp.warm_start.start_frame)))
        items.append(("warm_start_chords", _join(resp.warm_start.chords)))
    return encode_lines(items)


def decode_response(text: str) -> "JamResponse | WireError":
    try:
        doc = parse_lines(text)
    except FramingError as e:
        return WireError(MALFORMED, str(e))
    if doc.get("kind") == "error":
        return decode_error(text)
    needed = ("kind", "session_id", "target_frame", "gen_ms", "chords", "voicings")
    missing = [k for k in needed if k not in doc]
    if missing:
        return WireError(MALFORMED, f"missing keys: {' '.join(missing)}")
    if doc["kind"] != "response":
        return WireError(MALFORMED, f"expected kind response, got {doc['kind']!r}")
    try:
        warm = None
        if "warm_start_frame" in doc or "warm_start_chords" in doc:
            warm = WarmStart(int(doc["warm_start_frame"]), _split(doc["warm_start_chords"]))
        return JamResponse(
            session_id=doc["session_id"],
            target_frame=int(doc["target_frame"]),
            chords=_split(doc["chords"]),
            voicings=[_parse_voicing(v) for v in _split(doc["voicings"])],
            warm_start=warm,
            gen_ms=float(doc["gen_ms"]),
        )
    except (ValueError, KeyError) as e:
        return WireError(MALFORMED, f"bad field value: {e}")


def encode_error(err: WireError) -> str:
    return encode_lines([("kind", "error"), ("code", err.code), ("detail", err.detail)])


def decode_error(text: str) -> WireError:
    doc = parse_lines(text)
    code = doc.get("code", MALFORMED)
    if code not in _ERROR_CODES:
        code = MALFORMED
    return WireError(code, doc.get("detail", ""))


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------

def frame_message(payload: str) -> bytes:
    data = payload.encode("utf-8")
    return str(len(data)).encode("ascii") + b"\n" + data


class MessageReader:
    """Incremental decoder for a stream of length-prefixed messages."""

    def __init__(self, max_bytes: int = MAX_MESSAGE_BYTES):
        self._buf = bytearray()
        self._need: Optional[int] = None
        self._max = max_bytes

    def feed(self, data: bytes) -> list[str]:
        """Consume bytes, return every complete payload received."""
        self._buf.extend(data)
        out: list[str] = []
        while True:
            if self._need is None:
                nl = self._buf.find(b"\n")
                if nl < 0:
                    if len(self._buf) > 20:
                        raise FramingError("length prefix too long")
                    return out
                head = bytes(self._buf[:nl])
                if not head.isdigit():
                    raise FramingError(f"bad length prefix {head!r}")
                need = int(head)
                if need > self._max:
                    raise FramingError(f"message of {need} bytes exceeds cap {self._max}")
                self._need = need
                del self._buf[:nl + 1]
            if len(self._buf) < self._need:
                return out
            payload = bytes(self._buf[:self._need])
            del self._buf[:self._need]
            self._need = None
            out.append(payload.decode("utf-8"))
