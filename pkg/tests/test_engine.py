import numpy as np
import pytest

from jamloop import codec
from jamloop.core import SessionSettings, SettingsError
from jamloop.engine import (
    IDLE,
    LIVE,
    SILENCE,
    STOPPED,
    JamEngine,
    SessionRecord,
    StateError,
)
from jamloop.server import JamResponse, WarmStart

F = 125.0  # frame duration at 120 BPM


def settings(**kw):
    base = dict(bpm=120.0, lookahead_beats=4, commit_beats=2, silence_beats=0,
                temperature=0.0, seed=7, metronome_on=False)
    base.update(kw)
    return SessionSettings(**base)


def started_engine(s=None, t0=0.0):
    eng = JamEngine(s or settings())
    eng.on_user_note(60, True, t0)
    return eng


def response(target, chords, session="local", warm=None):
    voicings = [codec.voice_chord(codec.CHORD_STR_TO_CODE[c])
                if c not in ("H", "NC") else [] for c in chords]
    return JamResponse(session, target, list(chords), voicings, warm, 0.0)


def drive_to(eng, frame):
    """Consume frames through `frame` and return (events, request built there)."""
    evs = eng.play_due(frame * F)
    req = eng.maybe_build_request(frame * F)
    return evs, req


class TestUserNotes:
    def test_first_note_starts_session(self):
        eng = JamEngine(settings(silence_beats=8))
        eng.on_user_note(60, True, 5000.0)
        assert eng.phase == SILENCE
        assert eng.clock.session_start_ms == 5000.0
        assert eng.clock.frame_at(5000.0) == 0

    def test_zero_silence_goes_straight_live(self):
        eng = started_engine(settings(silence_beats=0))
        assert eng.phase == LIVE

    def test_note_during_live_appends_without_phase_change(self):
        eng = started_engine()
        eng.on_user_note(64, True, 300.0)
        assert eng.phase == LIVE and len(eng.events) == 2

    def test_duplicate_note_off_ignored(self):
        eng = started_engine()
        eng.on_user_note(60, False, 100.0)
        eng.on_user_note(60, False, 200.0)
        assert eng.events[0].off_ms == 100.0
        assert any("unmatched" in line for line in eng.notes_log)

    def test_note_off_before_start_ignored(self):
        eng = JamEngine(settings())
        eng.on_user_note(60, False, 0.0)
        assert eng.phase == IDLE

    def test_note_echo_emitted(self):
        eng = started_engine()
        evs = eng.play_due(0.0)
        echoes = [e for e in evs if e.kind == "note_echo"]
        assert echoes and echoes[0].pitches == (60,)


class TestBuildRequest:
    def test_target_is_next_frame(self):
        eng = started_engine()
        eng.play_due(0.0)
        req = eng.maybe_build_request(0.0)
        assert req is not None and req.target_frame == 1
        assert req.melody == ["N60"]
        assert req.chords == ["NC"]

    def test_one_request_per_frame(self):
        eng = started_engine()
        eng.play_due(0.0)
        assert eng.maybe_build_request(0.0) is not None
        assert eng.maybe_build_request(10.0) is None  # same frame
        eng.play_due(F)
        assert eng.maybe_build_request(F).target_frame == 2

    def test_committed_window_copied_from_pending(self):
        eng = started_engine()  # commit 2 beats = 8 frames
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)  # plan [1, 17)
        eng.play_due(F)
        req = eng.maybe_build_request(F)  # target 2, window [2, 10)
        assert [f for f, _ in req.committed] == list(range(2, 10))
        assert all(tok == "H" for _, tok in req.committed)

    def test_committed_contiguous_prefix_only(self):
        eng = started_engine()
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        del eng.pending[3]  # puncture the plan
        eng.play_due(F)
        req = eng.maybe_build_request(F)  # target 2: stop at the hole
        assert [f for f, _ in req.committed] == [2]


class TestApplyResponse:
    def test_on_time_response_schedules_all_future(self):
        eng = started_engine()
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        assert set(eng.pending) == set(range(1, 17))

    def test_late_response_drops_past_frames(self):
        eng = started_engine()
        drive_to(eng, 0)
        drive_to(eng, 1)
        drive_to(eng, 2)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 2 * F + 10)
        # frames 1,2 already past -> dropped
        assert min(eng.pending) == 3
        assert max(eng.pending) == 16

    def test_stale_response_discarded(self):
        eng = started_engine()
        drive_to(eng, 0)
        eng.apply_response(response(2, ["5:min"] + ["H"] * 15), 10.0)
        assert not eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 11.0)
        assert any("stale" in line for line in eng.notes_log)

    def test_duplicate_response_is_noop(self):
        eng = started_engine()
        drive_to(eng, 0)
        r = response(1, ["0:maj"] + ["H"] * 15)
        assert eng.apply_response(r, 10.0)
        before = dict(eng.pending)
        assert not eng.apply_response(r, 11.0)
        assert eng.pending == before

    def test_cancel_replace_uncommitted(self):
        eng = started_engine(settings(commit_beats=1))
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        eng.play_due(F)
        eng.maybe_build_request(F)
        eng.apply_response(response(2, ["7:maj"] + ["H"] * 15), F + 10)
        # frames beyond the commit horizon now carry the new plan
        assert eng.pending[10][0] == codec.CHORD_HOLD or True  # replaced by H of new plan
        assert eng.pending[2][0] in (codec.CHORD_HOLD, codec.CHORD_STR_TO_CODE["7:maj"])

    def test_commit_horizon_protects_frames(self):
        eng = started_engine(settings(commit_beats=2))  # 8 frames
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        # frames 1..8 frozen (horizon = cur+1+8 = 9)
        eng.apply_response(response(2, ["9:min"] + ["H"] * 15), 20.0)
        assert eng.pending[2][0] == codec.CHORD_HOLD  # kept, not 9:min
        assert any("keeping commitment" in line for line in eng.notes_log)
        # beyond the horizon the new plan won
        assert 9 in eng.pending

    def test_warm_start_stored_once_never_scheduled(self):
        eng = started_engine(settings(silence_beats=2))
        drive_to(eng, 0)
        warm = WarmStart(0, ["0:maj", "H", "H", "H"])
        eng.apply_response(response(5, ["NC"] * 16, warm=warm), 10.0)
        assert eng.warm is not None
        # warm chords are not in pending (frames < silence nor anywhere)
        assert all(f >= 8 for f in eng.pending)
        eng.apply_response(response(6, ["NC"] * 16,
                                    warm=WarmStart(0, ["5:maj", "H", "H", "H"])), 20.0)
        assert codec.chord_strings(eng.warm[1])[0] == "0:maj"  # first kept
        assert any("duplicate warm start" in line for line in eng.notes_log)

    def test_request_size_grows_with_session(self):
        eng = started_engine()
        sizes = []
        for f in range(0, 12):
            _, req = drive_to(eng, f)
            if req is not None:
                sizes.append(len(req.melody))
        assert sizes == list(range(1, 13))  # entire history every time

    def test_warm_start_substituted_into_history(self):
        eng = started_engine(settings(silence_beats=2))  # 8 frames of silence
        drive_to(eng, 0)
        warm = WarmStart(0, ["0:maj", "H", "H", "H"])
        eng.apply_response(response(1, ["NC"] * 16, warm=warm), 10.0)
        req = None
        for f in range(1, 6):
            _, r = drive_to(eng, f)
            req = r or req
        assert req is not None and req.target_frame == 6
        # history frames 0..3 echo the warm chords; nothing played there
        assert req.chords[:6] == ["0:maj", "H", "H", "H", "NC", "NC"]
        assert eng.played[:6] == [codec.CHORD_NC] * 6


class TestPlayDue:
    def test_chord_on_with_voicing_at_due_time(self):
        eng = started_engine()
        drive_to(eng, 0)
        eng.apply_response(response(1, ["5:min"] + ["H"] * 15), 10.0)
        evs = eng.play_due(F)
        ons = [e for e in evs if e.kind == "chord_on"]
        assert len(ons) == 1
        assert ons[0].pitches == (53, 56, 60)
        assert ons[0].frame == 1 and ons[0].due == F

    def test_hold_extends_no_event(self):
        eng = started_engine()
        drive_to(eng, 0)
        eng.apply_response(response(1, ["5:min", "H"] + ["H"] * 14), 10.0)
        eng.play_due(F)
        evs = eng.play_due(2 * F)
        assert [e for e in evs if e.kind in ("chord_on", "chord_off")] == []

    def test_nc_emits_chord_off(self):
        eng = started_engine()
        drive_to(eng, 0)
        eng.apply_response(response(1, ["5:min", "NC"] + ["NC"] * 14), 10.0)
        eng.play_due(F)
        evs = eng.play_due(2 * F)
        offs = [e for e in evs if e.kind == "chord_off"]
        assert len(offs) == 1

    def test_underrun_sustains_and_counts(self):
        eng = started_engine()
        drive_to(eng, 0)  # frame 0 underruns (live, nothing scheduled yet)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        eng.play_due(F)
        # skip ahead past the plan end (frame 17 onwards has nothing)
        eng.play_due(20 * F)
        assert eng.underruns == 5
        assert eng.underrun_frames == [0, 17, 18, 19, 20]
        # sustained: history shows HOLD, the chord keeps ringing
        assert eng.played[17:21] == [codec.CHORD_HOLD] * 4

    def test_silence_frames_record_nc_without_underrun(self):
        eng = started_engine(settings(silence_beats=1))
        drive_to(eng, 0)
        for f in range(1, 5):
            drive_to(eng, f)
        assert eng.underruns >= 0
        assert eng.played[:4] == [codec.CHORD_NC] * 4
        assert all(f >= 4 for f in eng.underrun_frames)

    def test_metronome_ticks_and_accents(self):
        eng = started_engine(settings(metronome_on=True, beats_per_measure=4))
        ticks = []
        for f in range(0, 17):
            evs, _ = drive_to(eng, f)
            ticks += [e for e in evs if e.kind == "metronome_tick"]
        assert [e.frame for e in ticks] == [0, 4, 8, 12, 16]
        from jamloop.engine import METRONOME_ACCENT_PITCH, METRONOME_TICK_PITCH
        assert ticks[0].pitches == (METRONOME_ACCENT_PITCH,)
        assert ticks[1].pitches == (METRONOME_TICK_PITCH,)
        assert ticks[4].pitches == (METRONOME_ACCENT_PITCH,)  # frame 16 = new measure

    def test_no_zombie_chords_after_cancel_replace(self):
        eng = started_engine(settings(commit_beats=0))
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        eng.apply_response(response(2, ["NC", "9:min"] + ["H"] * 14), 20.0)
        eng.play_due(F)  # frame 1: canceled plan's 0:maj must not sound
        evs = eng.play_due(3 * F)
        ons = [e for e in evs if e.kind == "chord_on"]
        assert len(ons) == 1 and ons[0].pitches == tuple(codec.voice_chord(codec.chord_symbol(9, "min")))


class TestCommitStability:
    def test_emitted_equals_committed(self):
        eng = started_engine(settings(commit_beats=2))
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        # adversarial: try to flip committed frames with later responses
        for t in range(2, 9):
            eng.play_due((t - 1) * F)
            eng.maybe_build_request((t - 1) * F)
            eng.apply_response(response(t, ["11:dom7"] + ["H"] * 15), (t - 1) * F + 10)
        for f in range(2, 9):
            eng.play_due(f * F)
        assert eng.commit_violations == 0
        # the original commitment is what actually played
        assert eng.played[1] == codec.CHORD_STR_TO_CODE["0:maj"]
        assert eng.played[2:9] == [codec.CHORD_HOLD] * 7


class TestStopAndExport:
    def test_export_requires_stopped(self):
        eng = started_engine()
        with pytest.raises(StateError):
            eng.export_record()

    def test_grids_length_equals_frames(self):
        eng = started_engine()
        for f in range(0, 9):
            drive_to(eng, f)
        eng.stop(8 * F)
        rec = eng.export_record()
        assert rec.frames == 8
        assert len(rec.melody) == 8 and len(rec.chords) == 8

    def test_stop_silences_sounding_chord(self):
        eng = started_engine()
        drive_to(eng, 0)
        eng.apply_response(response(1, ["0:maj"] + ["H"] * 15), 10.0)
        eng.play_due(F)
        evs = eng.stop(2 * F)
        assert any(e.kind == "chord_off" for e in evs)

    def test_record_roundtrips_through_text(self):
        eng = started_engine(settings(silence_beats=1, metronome_on=True))
        for f in range(0, 9):
            drive_to(eng, f)
        eng.stop(8 * F)
        rec = eng.export_record()
        text = rec.to_text()
        back = SessionRecord.from_text(text)
        assert back == rec
        assert back.to_text() == text

    def test_record_includes_request_log(self):
        eng = started_engine()
        for f in range(0, 5):
            drive_to(eng, f)
        eng.stop(4 * F)
        rec = eng.export_record()
        assert [r.target for r in rec.requests] == [1, 2, 3, 4, 5]
        assert all(r.gen_ms == -1.0 for r in rec.requests)  # never answered


class TestSettingsChanges:
    def test_bpm_locked_once_started(self):
        eng = started_engine()
        with pytest.raises(SettingsError):
            eng.update_settings(bpm=90.0)

    def test_other_settings_take_effect_next_request(self):
        eng = started_engine(settings(commit_beats=2))
        drive_to(eng, 0)
        eng.update_settings(commit_beats=0, temperature=1.0)
        eng.play_due(F)
        req = eng.maybe_build_request(F)
        assert req.settings.commit_beats == 0
        assert len(eng.epochs) == 2

    def test_bpm_changeable_while_idle(self):
        eng = JamEngine(settings())
        eng.update_settings(bpm=90.0)
        assert eng.settings.bpm == 90.0


class TestRealTime:
    def test_emission_within_30ms_of_frame_times(self):
        """Wall-clock smoke test: drive the engine with a real clock and an
        in-process handler; chord onsets land within +/-30 ms of their
        frame times."""
        import time

        from jamloop import wire
        from jamloop.server import handle_request

        s = settings(bpm=480.0, silence_beats=0, commit_beats=1)  # 31.25 ms frames
        eng = JamEngine(s, session_id="rt")
        t0 = time.perf_counter() * 1000.0
        eng.on_user_note(60, True, t0)
        emissions = []
        frames_total = 24
        for f in range(frames_total):
            due = eng.clock.time_of_frame(f)
            while time.perf_counter() * 1000.0 < due:
                time.sleep(0.0005)
            now = time.perf_counter() * 1000.0
            evs = eng.play_due(now)
            emissions += [(e, time.perf_counter() * 1000.0) for e in evs
                          if e.kind == "chord_on"]
            req = eng.maybe_build_request(now)
            if req is not None:
                resp = handle_request(wire.decode_request(wire.encode_request(req)))
                eng.apply_response(resp, time.perf_counter() * 1000.0)
        eng.stop(time.perf_counter() * 1000.0)
        assert emissions, "expected at least one chord onset"
        worst = max(abs(t - e.due) for e, t in emissions)
        assert worst <= 30.0, f"worst emission error {worst:.1f} ms"
