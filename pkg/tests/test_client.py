import io
import json
import wave

import pytest

from cui_gateway import client as client_mod
from cui_gateway.audio import AudioFormat, build_wav, parse_wav
from cui_gateway.client import GatewayClient, main
from cui_gateway.protocol import MessageType
from cui_gateway.session import read_turn_log
from conftest import mock_config

SENTENCES = ["You said: Hi.", "This is sentence two.", "This is sentence three."]


def wav_size(text):
    return 44 + 2 * 16000 * max(100, 25 * len(text)) // 1000


def server_arg(gateway):
    host, port = gateway.address
    return f"{host}:{port}"


def run(gateway, tmp_path, *args):
    return main(["--server", server_arg(gateway), "--out", str(tmp_path / "reply"), *args])


def test_raw_mode(gateway, tmp_path, capsys):
    assert run(gateway, tmp_path, "--raw", "Hi") == 0
    out = capsys.readouterr().out
    assert "transcript: Hi" in out
    paths = sorted(tmp_path.glob("reply-s*.wav"))
    assert [p.stat().st_size for p in paths] == [wav_size(s) for s in SENTENCES]
    fmt, pcm = parse_wav(paths[0].read_bytes())
    assert fmt == AudioFormat() and len(pcm) == wav_size(SENTENCES[0]) - 44


def test_text_mode_sends_no_audio(gateway, tmp_path, capsys, monkeypatch):
    sent = []
    original = GatewayClient.send

    def spy(self, msg_type, payload=b""):
        sent.append(msg_type)
        return original(self, msg_type, payload)

    monkeypatch.setattr(GatewayClient, "send", spy)
    assert run(gateway, tmp_path, "--text", "Hi", "--no-save") == 0
    assert sent == [MessageType.SESSION_CONFIG, MessageType.TEXT_IN]
    assert "[2] This is sentence three." in capsys.readouterr().out
    assert not list(tmp_path.glob("*.wav"))


def test_wav_mode(gateway, tmp_path):
    src = tmp_path / "q.wav"
    src.write_bytes(build_wav(AudioFormat(), b"Hi"))
    assert run(gateway, tmp_path, "--wav", str(src)) == 0
    assert len(list(tmp_path.glob("reply-s*.wav"))) == 3


def test_wav_rate_mismatch(gateway, tmp_path, capsys):
    src = tmp_path / "q.wav"
    src.write_bytes(build_wav(AudioFormat(8000), b"Hi"))
    assert run(gateway, tmp_path, "--wav", str(src)) == 2
    assert "8000" in capsys.readouterr().err


def test_eight_bit_wav(gateway, tmp_path):
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(16000)
        w.writeframes(b"\x80" * 10)
    src = tmp_path / "q.wav"
    src.write_bytes(buf.getvalue())
    assert run(gateway, tmp_path, "--wav", str(src)) == 2


@pytest.mark.parametrize("args", [["--wav", "/nonexistent.wav"], ["--server", "nohost", "--raw", "x"],
                                  ["--config", "/nonexistent.json", "--raw", "x"]])
def test_usage_errors(gateway, tmp_path, args):
    assert run(gateway, tmp_path, *args) == 2


def test_missing_mode_is_an_argparse_error():
    with pytest.raises(SystemExit) as info:
        main(["--out", "x"])
    assert info.value.code == 2


def test_server_down(tmp_path):
    import socket

    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    assert main(["--server", f"127.0.0.1:{port}", "--raw", "Hi", "--no-save"]) == 4


def test_bad_config_is_a_server_error(gateway, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(mock_config(llm={"provider": "nonexistent"})))
    assert run(gateway, tmp_path, "--config", str(cfg), "--raw", "Hi") == 3
    assert "CFG_INVALID" in capsys.readouterr().err


def test_provider_failure_prints_partial_reply(gateway, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(mock_config(provider_params={"tts_fail_on": 2})))
    assert run(gateway, tmp_path, "--config", str(cfg), "--raw", "Hi", "--no-save") == 3
    captured = capsys.readouterr()
    assert "[1] This is sentence two." in captured.out
    assert "PROVIDER_FAILURE" in captured.err


def test_overrides_reach_the_server(gateway, tmp_path, capsys):
    code = run(gateway, tmp_path, "--text", "Hi", "--system-prompt", "Be brief.", "--batch", "--no-history",
               "--metrics", "--no-save")
    assert code == 0
    out = capsys.readouterr().out
    assert "[0] [sys:Be brief.] You said: Hi. This is sentence two. This is sentence three." in out
    metrics = json.loads(out.strip().splitlines()[-1])
    assert metrics["ttfa_ms"] <= metrics["total_ms"]


def test_interactive(gateway, tmp_path, capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("first\n/reset\nsecond\n\nignored\n"))
    assert run(gateway, tmp_path, "--interactive") == 0
    out = capsys.readouterr().out
    assert "transcript: first" in out and "transcript: second" in out and "ignored" not in out
    assert len(list(tmp_path.glob("reply-t0-s*.wav"))) == 3
    assert len(list(tmp_path.glob("reply-t1-s*.wav"))) == 3


def test_client_ttfa_not_below_server_ttfa(gateway, turn_log_path):
    cfg = mock_config(provider_params={"llm_initial_ms": 30, "tts_per_call_ms": 20})
    with GatewayClient(*gateway.address) as c:
        c.configure(cfg)
        reports = [c.audio_turn(b"Hi") for _ in range(3)]
    gateway.shutdown()
    records = read_turn_log(turn_log_path)
    for report, record in zip(reports, records):
        assert report.ttfa_ms >= record.metrics["ttfa_ms"]


def test_load_config_rejects_non_object(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("[1]")
    args = client_mod.build_parser().parse_args(["--config", str(cfg), "--raw", "x"])
    with pytest.raises(client_mod.InputError):
        client_mod.load_config(args)
