import logging
import struct

import numpy as np
import pytest

from coughscreen.audio_io import (Label, encode_wav, load_manifest, parse_wav, read_wav,
                                  write_manifest, write_wav)
from coughscreen.errors import CoughScreenError, ManifestError, ParseError, UnsupportedFormat


def pcm16_bytes(samples, channels=1, rate=44100):
    """WAV bytes assembled by hand, independent of the package writer."""
    data = np.asarray(samples, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", 1, channels, rate, rate * 2 * channels, 2 * channels, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_pcm16_scaling():
    clip = parse_wav(pcm16_bytes([0, 16384, -32768]))
    assert clip.samples.tolist() == [0.0, 0.5, -1.0]
    assert clip.sample_rate_hz == 44100


def test_stereo_downmix():
    frames = np.array([[32767, 0], [16384, 0], [-32768, 0]])
    clip = parse_wav(pcm16_bytes(frames.ravel(), channels=2))
    assert len(clip) == 3
    np.testing.assert_array_equal(clip.samples, frames[:, 0] / 32768.0 / 2)


def test_pcm16_round_trip_exact(tmp_path):
    x = np.random.default_rng(1).integers(-32768, 32768, 1000).astype(np.int16)
    write_wav(tmp_path / "a.wav", x, 44100, "pcm16")
    clip = read_wav(tmp_path / "a.wav")
    assert np.array_equal(np.round(clip.samples * 32768).astype(np.int16), x)
    assert encode_wav(x, 44100) == pcm16_bytes(x)


def test_float32_round_trip(tmp_path):
    x = np.random.default_rng(2).uniform(-1, 1, 500).astype(np.float32)
    write_wav(tmp_path / "f.wav", x, 22050, "float32")
    clip = read_wav(tmp_path / "f.wav", "p1", label=Label.POSITIVE)
    assert np.array_equal(clip.samples, x.astype(np.float64))
    assert clip.sample_rate_hz == 22050 and clip.cough_id == "f" and clip.patient_id == "p1"


def test_unexpected_rate_warns(caplog):
    with caplog.at_level(logging.WARNING):
        parse_wav(pcm16_bytes([1, 2, 3], rate=16000))
    assert "16000" in caplog.text


def test_extra_chunks_skipped():
    raw = pcm16_bytes([5, 6])
    extra = b"LIST" + struct.pack("<I", 3) + b"abc" + b"\x00"  # odd size gets a pad byte
    body = raw[12:]
    i = body.index(b"data")
    body = body[:i] + extra + body[i:]
    data = b"RIFF" + struct.pack("<I", len(body) + 4) + b"WAVE" + body
    assert len(parse_wav(data)) == 2


def test_unsupported_codec():
    raw = bytearray(pcm16_bytes([1, 2]))
    raw[20:22] = struct.pack("<H", 2)  # ADPCM tag
    with pytest.raises(UnsupportedFormat):
        parse_wav(bytes(raw))


@pytest.mark.parametrize("data", [b"", b"RIFF", b"RIFX" + b"\x00" * 40, pcm16_bytes([1])[:30]])
def test_malformed_is_parse_error(data):
    with pytest.raises(ParseError) as info:
        parse_wav(data)
    assert info.value.to_record()["error"] == "parse_error"


def test_fuzzed_input_is_total():
    base = pcm16_bytes(np.arange(-50, 50) * 300)
    rng = np.random.default_rng(7)
    ok = 0
    for _ in range(10_000):
        buf = bytearray(base)
        for _ in range(int(rng.integers(1, 6))):
            op = rng.integers(3)
            pos = int(rng.integers(len(buf))) if buf else 0
            if op == 0 and buf:
                buf[pos] = int(rng.integers(256))
            elif op == 1:
                del buf[pos:pos + int(rng.integers(1, 9))]
            else:
                buf[pos:pos] = bytes(rng.integers(0, 256, int(rng.integers(1, 9)), dtype=np.uint8))
        try:
            clip = parse_wav(bytes(buf))
            assert np.all(np.isfinite(clip.samples))
            ok += 1
        except CoughScreenError:
            pass
    assert ok > 0


def _manifest(tmp_path, text):
    p = tmp_path / "m.csv"
    p.write_text(text)
    return p


def test_manifest_grouping(tmp_path):
    p = _manifest(tmp_path, "# comment\npatient_id,cough_path,label,age\n"
                            "a,x.wav,Positive,40\nb,y.wav,healthy,\na,z.wav,POSITIVE,40\n")
    recs = load_manifest(p)
    assert [r.patient_id for r in recs] == ["a", "b"]
    assert recs[0].label is Label.POSITIVE and len(recs[0].clip_paths) == 2
    assert recs[0].clip_paths[0] == str(tmp_path / "x.wav")
    assert recs[0].metadata == {"age": "40"}


def test_manifest_header_only(tmp_path):
    assert load_manifest(_manifest(tmp_path, "patient_id,cough_path,label\n")) == []


@pytest.mark.parametrize("body,line", [
    ("a,x.wav,maybe\n", 2),
    ("a,x.wav,negative\na,x.wav,negative\n", 3),
    ("a,x.wav,negative\na,y.wav,positive\n", 3),
])
def test_manifest_errors_carry_line(tmp_path, body, line):
    with pytest.raises(ManifestError) as info:
        load_manifest(_manifest(tmp_path, "patient_id,cough_path,label\n" + body))
    assert info.value.line == line


def test_manifest_table_counts(tmp_path):
    rows = [(f"p{i}", f"p{i}.wav", "positive" if i < 92 else "healthy") for i in range(1171)]
    write_manifest(tmp_path / "t.csv", rows)
    recs = load_manifest(tmp_path / "t.csv")
    assert len(recs) == 1171
    assert sum(r.label is Label.POSITIVE for r in recs) == 92
    assert sum(r.label is Label.HEALTHY for r in recs) == 1079
