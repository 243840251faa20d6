import json

import pytest

from vmsuite.cli import main, parse_frames
from vmsuite.errors import ValidationError


def test_parse_frames():
    assert parse_frames("4..32") == (4, 8, 16, 32)
    assert parse_frames("3,5") == (3, 5)
    assert parse_frames("7") == (7,)
    with pytest.raises(ValidationError):
        parse_frames("a..b")


def test_audit_ok(capsys):
    assert main(["audit"]) == 0
    assert "MISMATCH" not in capsys.readouterr().out


def test_audit_config_file(tmp_path):
    path = tmp_path / "blocks.json"
    path.write_text(json.dumps([{"type": "vim", "D": 16, "E": 2}, {"type": "dbm", "D": 16, "E": 1}]))
    assert main(["audit", "--config", str(path)]) == 0


def test_audit_odd_dbm_is_validation_error(tmp_path, capsys):
    path = tmp_path / "blocks.json"
    path.write_text(json.dumps({"type": "dbm", "D": 5, "E": 1}))
    assert main(["audit", "--config", str(path)]) == 2
    assert "even" in capsys.readouterr().err


def test_sweep_then_fit(tmp_path, capsys):
    out = tmp_path / "s.csv"
    args = ["bench", "sweep", "--frames", "1..32", "--tokens-per-frame", "8", "--ops", "scan",
            "--repeats", "1", "--warmup", "0", "--d-model", "4", "--d-state", "2", "--out", str(out)]
    assert main(args) == 0
    assert main(["bench", "fit", "--in", str(out)]) == 0
    assert "selective_scan_chunked" in capsys.readouterr().out


def test_fit_with_too_few_points(tmp_path):
    out = tmp_path / "s.csv"
    main(["bench", "sweep", "--frames", "1,2", "--tokens-per-frame", "4", "--ops", "scan",
          "--repeats", "1", "--warmup", "0", "--d-model", "4", "--out", str(out)])
    assert main(["bench", "fit", "--in", str(out)]) == 2


def test_untimed_sweep(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["bench", "sweep", "--frames", "1,2", "--tokens-per-frame", "4", "--ops", "scan,attn",
                 "--d-model", "4", "--no-timing", "--out", str(out)]) == 0
    assert out.read_text().count("UNTIMED") == 4


def test_unknown_operator(tmp_path):
    assert main(["bench", "sweep", "--ops", "fft", "--out", str(tmp_path / "s.csv")]) == 2


def test_train_writes_curve(tmp_path):
    out = tmp_path / "loss.csv"
    assert main(["train", "--block", "vim", "--steps", "3", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "step,loss" and len(out.read_text().splitlines()) == 5


def test_golden_round_trip(tmp_path, capsys):
    assert main(["golden", "generate", "--dir", str(tmp_path)]) == 0
    assert main(["golden", "verify", "--dir", str(tmp_path), "--f32-drift"]) == 0
    (tmp_path / "mamba_block.bin").write_bytes(b"\x00" * 4)
    assert main(["golden", "verify", "--dir", str(tmp_path)]) == 3
    assert "mamba_block" in capsys.readouterr().err


def test_bad_arguments():
    assert main(["bench"]) == 2
    assert main(["train", "--block", "rnn"]) == 2
