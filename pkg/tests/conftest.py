import numpy as np
import pytest
from hypothesis import settings as hyp_settings

from jamloop.core import SessionSettings
from jamloop.simharness import ScriptedMelody

hyp_settings.register_profile("ci", deadline=None, max_examples=60)
hyp_settings.load_profile("ci")


def random_script(rng: np.random.Generator, beats: int, max_pitch_span: int = 24) -> ScriptedMelody:
    """A playable random melody: first note on frame 0, no scripted note
    past the horizon."""
    horizon = beats * 4
    n_notes = int(rng.integers(1, max(2, horizon // 3)))
    frames = np.sort(rng.integers(0, horizon, size=n_notes))
    frames[0] = 0
    notes = []
    for f in frames:
        pitch = int(60 + rng.integers(-max_pitch_span // 2, max_pitch_span // 2 + 1))
        dur = int(rng.integers(1, 9))
        notes.append((int(f), pitch, dur))
    return ScriptedMelody(tuple(notes))


def random_settings(rng: np.random.Generator, **fixed) -> SessionSettings:
    lookahead = int(rng.integers(1, 9))
    commit = int(rng.integers(0, lookahead + 1))
    s = SessionSettings(
        bpm=float(rng.choice([60.0, 90.0, 120.0, 150.0])),
        silence_beats=int(rng.choice([0, 4, 8])),
        lookahead_beats=lookahead,
        commit_beats=commit,
        temperature=float(rng.choice([0.0, 0.5, 1.0])),
        model_id=str(rng.choice(["markov-online", "naive-online", "rule-offline"])),
        seed=int(rng.integers(0, 2**31)),
    )
    s = s.with_changes(**fixed)
    s.validate()
    return s


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
