import socket

import pytest

from jamloop import wire
from jamloop.core import SessionSettings
from jamloop.server import JamRequest, JamResponse, WarmStart, WireError
from jamloop.service import JamClient, ServiceConfig, parse_hostport, start_service


def sample_request(target=3):
    settings = SessionSettings(bpm=120.0, lookahead_beats=4, commit_beats=2,
                               silence_beats=8, temperature=0.0, seed=7)
    melody = (["N60", "H", "R"] * target)[:target]
    return JamRequest(
        session_id="sess.1",
        target_frame=target,
        settings=settings,
        melody=melody,
        chords=["NC"] * target,
        committed=[(target, "0:maj"), (target + 1, "H")],
    )


class TestDocuments:
    def test_request_roundtrip(self):
        req = sample_request()
        out = wire.decode_request(wire.encode_request(req))
        assert not isinstance(out, WireError)
        assert out == req
        # byte-exact re-encode
        assert wire.encode_request(out) == wire.encode_request(req)

    def test_response_roundtrip(self):
        resp = JamResponse("s", 4, ["0:maj", "H"], [[48, 52, 55], []],
                           WarmStart(0, ["NC", "H"]), 1.5)
        out = wire.decode_response(wire.encode_response(resp))
        assert out == resp

    def test_response_without_warm_start(self):
        resp = JamResponse("s", 4, ["NC"], [[]], None, 0.0)
        out = wire.decode_response(wire.encode_response(resp))
        assert out == resp and out.warm_start is None

    def test_error_roundtrip(self):
        err = WireError("UNKNOWN_MODEL", "model_id 'x' is not registered")
        out = wire.decode_response(wire.encode_error(err))
        assert isinstance(out, WireError)
        assert out.code == "UNKNOWN_MODEL" and "x" in out.detail

    def test_empty_arrays_roundtrip(self):
        req = sample_request()
        req.melody, req.chords, req.committed = [], [], []
        req.target_frame = 0
        out = wire.decode_request(wire.encode_request(req))
        assert out.melody == [] and out.chords == [] and out.committed == []

    def test_missing_key_malformed(self):
        text = wire.encode_request(sample_request()).replace("seed 7\n", "")
        out = wire.decode_request(text)
        assert isinstance(out, WireError) and out.code == "MALFORMED"
        assert "seed" in out.detail

    def test_unknown_key_malformed(self):
        text = wire.encode_request(sample_request()) + "extra 1\n"
        out = wire.decode_request(text)
        assert isinstance(out, WireError) and "extra" in out.detail

    def test_duplicate_key_malformed(self):
        text = wire.encode_request(sample_request()) + "seed 9\n"
        assert isinstance(wire.decode_request(text), WireError)

    def test_non_numeric_field_malformed(self):
        text = wire.encode_request(sample_request()).replace("bpm 120.0", "bpm fast")
        out = wire.decode_request(text)
        assert isinstance(out, WireError) and out.code == "MALFORMED"

    def test_committed_length_mismatch(self):
        text = wire.encode_request(sample_request()).replace(
            "committed_chords 0:maj H", "committed_chords 0:maj")
        assert isinstance(wire.decode_request(text), WireError)

    def test_invalid_settings_decode_then_validate(self):
        from jamloop.server import validate_request

        text = wire.encode_request(sample_request()).replace(
            "commit_beats 2", "commit_beats 6")
        req = wire.decode_request(text)
        assert not isinstance(req, WireError)  # decode is type-level only
        err = validate_request(req)
        assert err is not None and err.code == "BAD_SETTINGS"


class TestFraming:
    def test_message_roundtrip(self):
        reader = wire.MessageReader()
        msgs = reader.feed(wire.frame_message("hello\nworld") + wire.frame_message("x"))
        assert msgs == ["hello\nworld", "x"]

    def test_byte_by_byte(self):
        payload = "kind request\nmelody N60 H"
        framed = wire.frame_message(payload)
        reader = wire.MessageReader()
        got = []
        for i in range(len(framed)):
            got += reader.feed(framed[i:i + 1])
        assert got == [payload]

    def test_unicode_length_is_bytes(self):
        payload = "detail café"
        framed = wire.frame_message(payload)
        assert int(framed.split(b"\n", 1)[0]) == len(payload.encode("utf-8"))
        assert wire.MessageReader().feed(framed) == [payload]

    def test_bad_prefix_raises(self):
        with pytest.raises(wire.FramingError):
            wire.MessageReader().feed(b"xyz\nabc")

    def test_oversize_rejected(self):
        reader = wire.MessageReader(max_bytes=10)
        with pytest.raises(wire.FramingError):
            reader.feed(b"999\n")


class TestHostport:
    def test_parse(self):
        assert parse_hostport("127.0.0.1:7380") == ("127.0.0.1", 7380)

    def test_bad(self):
        with pytest.raises(ValueError):
            parse_hostport("nope")


@pytest.fixture
def service():
    svc = start_service(ServiceConfig(listen="127.0.0.1:0"))
    yield svc
    svc.shutdown()


class TestTcpService:
    def test_end_to_end(self, service):
        host, port = service.address
        client = JamClient(host, port)
        try:
            resp = client.roundtrip(sample_request())
            assert isinstance(resp, JamResponse)
            assert len(resp.chords) == 16
            assert resp.gen_ms > 0.0  # live service reports measured time
        finally:
            client.close()

    def test_targets_must_advance_within_connection(self, service):
        host, port = service.address
        client = JamClient(host, port)
        try:
            assert isinstance(client.roundtrip(sample_request(target=3)), JamResponse)
            out = client.roundtrip(sample_request(target=3))
            assert isinstance(out, WireError)
            assert out.code == "INCONSISTENT_HISTORY"
            # a fresh connection may retry the same target
            client2 = JamClient(host, port)
            try:
                assert isinstance(client2.roundtrip(sample_request(target=3)), JamResponse)
            finally:
                client2.close()
        finally:
            client.close()

    def test_error_reply_for_bad_request(self, service):
        host, port = service.address
        client = JamClient(host, port)
        try:
            req = sample_request()
            req.session_id = "bad id"
            out = client.roundtrip(req)
            assert isinstance(out, WireError) and out.code == "MALFORMED"
        finally:
            client.close()

    def test_unserved_model_rejected(self):
        svc = start_service(ServiceConfig(listen="127.0.0.1:0", models=("naive-online",)))
        try:
            host, port = svc.address
            client = JamClient(host, port)
            try:
                out = client.roundtrip(sample_request())  # markov-online
                assert isinstance(out, WireError) and out.code == "UNKNOWN_MODEL"
            finally:
                client.close()
        finally:
            svc.shutdown()

    def test_concurrent_connections_are_independent(self, service):
        host, port = service.address
        a, b = JamClient(host, port), JamClient(host, port)
        try:
            assert isinstance(a.roundtrip(sample_request(target=5)), JamResponse)
            # other connection has its own target ordering
            assert isinstance(b.roundtrip(sample_request(target=3)), JamResponse)
            assert isinstance(a.roundtrip(sample_request(target=6)), JamResponse)
        finally:
            a.close()
            b.close()


class TestConfig:
    def test_config_file_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "server.conf"
        cfg_file.write_text("listen 127.0.0.1:9999\nseed 5\nmodels naive-online\n")
        cfg = ServiceConfig.load(str(cfg_file))
        assert cfg.listen == "127.0.0.1:9999" and cfg.seed == 5
        assert cfg.models == ("naive-online",)
        cfg2 = ServiceConfig.load(str(cfg_file), listen="127.0.0.1:0",
                                  models="markov-online,rule-offline")
        assert cfg2.listen == "127.0.0.1:0"
        assert cfg2.models == ("markov-online", "rule-offline")


class TestWebSocket:
    def test_ws_transport(self):
        pytest.importorskip("websockets")
        from websockets.sync.client import connect

        svc = start_service(ServiceConfig(listen="127.0.0.1:0", ws="127.0.0.1:0"))
        try:
            ws_port = svc.ws_server.socket.getsockname()[1]
            with connect(f"ws://127.0.0.1:{ws_port}") as conn:
                conn.send(wire.encode_request(sample_request()))
                out = wire.decode_response(conn.recv())
                assert isinstance(out, JamResponse) and len(out.chords) == 16
        finally:
            svc.shutdown()
