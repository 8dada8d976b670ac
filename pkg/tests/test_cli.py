import io
import subprocess
import sys

import numpy as np
import pytest

from street.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run
from street.dataset import read_records


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def mini_records(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "mini.fsnl"
    code, _, _ = cli("gen", "--preset", "mini", "--count", 6, "--seed", 3, "--out", path)
    assert code == EXIT_OK
    return path


def test_params_full_report():
    code, out, _ = cli("params", "--preset", "full")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert "Conv0 1216" in lines and "Softmax 34438" in lines and "Total 1968006" in lines
    assert any(line.startswith("deviation:") and "263168x2 + 394240" in line and "2.2M" in line for line in lines)
    code, out, _ = cli("params", "--preset", "full", "--wiring", "table")
    assert "Total 2230150" in out.splitlines()


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "street.cli", "params", "--preset", "mini"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("Conv0 ")
    assert proc.stderr.startswith("# street params")


def test_gen_count_zero(tmp_path):
    path = tmp_path / "empty.fsnl"
    code, out, _ = cli("gen", "--count", 0, "--out", path)
    assert code == EXIT_OK and "wrote 0 records" in out
    assert list(read_records(path)) == []


def test_gen_is_reproducible(tmp_path, mini_records):
    again = tmp_path / "again.fsnl"
    cli("gen", "--preset", "mini", "--count", 6, "--seed", 3, "--out", again)
    assert again.read_bytes() == mini_records.read_bytes()
    other = tmp_path / "other.fsnl"
    cli("gen", "--preset", "mini", "--count", 6, "--seed", 4, "--out", other)
    assert other.read_bytes() != mini_records.read_bytes()


def test_effective_config_is_echoed():
    _, _, err = cli("params", "--preset", "mini", "--seed", 9)
    first = err.splitlines()[0]
    assert first.startswith("# street params") and "seed=9" in first and "preset=mini" in first


def test_train_zero_steps_then_eval(tmp_path, mini_records):
    run_dir = tmp_path / "run"
    code, out, _ = cli("train", "--preset", "mini", "--records", mini_records, "--out-dir", run_dir, "--steps", 0,
                       "--no-timestamps")
    assert code == EXIT_OK and "steps\t0" in out
    dump = tmp_path / "dump.tsv"
    code, out, _ = cli("eval", "--checkpoint", run_dir / "final.fsnl", "--records", mini_records, "--dump", dump)
    assert code == EXIT_OK
    assert "sequence_error" in out and "word_recall" in out
    assert len(dump.read_text(encoding="utf-8").splitlines()) == 6


def test_train_artifacts_are_byte_identical(tmp_path, mini_records):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        code, _, _ = cli("train", "--preset", "mini", "--records", mini_records, "--out-dir", d, "--steps", 3,
                         "--eval-every", 2, "--lr", 1e-3, "--seed", 5, "--no-timestamps")
        assert code == EXIT_OK
    for name in ("train.log", "final.fsnl", "ckpt-000002.fsnl"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name
    assert "time=" not in (dirs[0] / "train.log").read_text(encoding="utf-8")


def test_config_overlay_and_flag_precedence(tmp_path, mini_records):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\nsteps = 2\nlr=0.001\nno-timestamps=true\n", encoding="utf-8")
    code, out, err = cli("train", "--config", conf, "--preset", "mini", "--records", mini_records,
                         "--out-dir", tmp_path / "r", "--steps", 1)
    assert code == EXIT_OK
    assert "steps\t1" in out
    assert "lr=0.001" in err and "steps=1" in err
    conf.write_text("bogus=1\n", encoding="utf-8")
    assert cli("params", "--config", conf)[0] == EXIT_USAGE


def test_predict_from_records_and_image(tmp_path, mini_records):
    run_dir = tmp_path / "run"
    cli("train", "--preset", "mini", "--records", mini_records, "--out-dir", run_dir, "--steps", 0)
    ckpt = run_dir / "final.fsnl"
    code, out, _ = cli("predict", "--checkpoint", ckpt, "--records", mini_records)
    assert code == EXIT_OK and len(out.splitlines()) == 6
    code, out, _ = cli("predict", "--checkpoint", ckpt, "--records", mini_records, "--index", 2)
    assert out.startswith("2\t") and len(out.splitlines()) == 1
    image = tmp_path / "img.npy"
    np.save(image, next(iter(read_records(mini_records))).image())
    code, out, _ = cli("predict", "--checkpoint", ckpt, "--image", image)
    assert code == EXIT_OK and len(out.splitlines()) == 1
    np.save(image, np.zeros((5, 5, 3), dtype=np.uint8))
    assert cli("predict", "--checkpoint", ckpt, "--image", image)[0] == EXIT_DATA


def test_scorer_mode(tmp_path):
    truth, output = tmp_path / "truth.txt", tmp_path / "out.txt"
    truth.write_text("Rue de la Gare\nQuai Foch\nAvenue Jean Jaurès\n", encoding="utf-8")
    output.write_text("Rue de la Gare\nQuai  Foch\nAvenue Jean\n", encoding="utf-8")
    code, out, _ = cli("eval", "--truth", truth, "--output", output)
    assert code == EXIT_OK
    report = dict(line.split("\t") for line in out.splitlines())
    assert float(report["sequence_error"]) == pytest.approx(100 / 3, rel=1e-3)
    output.write_text("one line\n", encoding="utf-8")
    assert cli("eval", "--truth", truth, "--output", output)[0] == EXIT_DATA


def test_split_stats_inspect(tmp_path):
    raw = tmp_path / "raw.fsnl"
    assert cli("gen", "--count", 40, "--out", raw, "--style", "noise_std=0", "--signs-per-street", 2)[0] == EXIT_OK
    code, out, _ = cli("split", "--in", raw, "--out-dir", tmp_path / "splits")
    assert code == EXIT_OK and out.splitlines()[0] == "subset\trecords\tdropped_duplicate"
    code, out, _ = cli("stats", tmp_path / "splits")
    assert code == EXIT_OK and out.startswith("subset\t")
    code, out, _ = cli("inspect", raw, "--limit", 1, "--preset", "full")
    assert code == EXIT_OK
    assert "image/text" in out and out.splitlines()[-1] == "40 records" and "problem" not in out


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["params", "--preset", "huge"],
    ["gen", "--count", "-1", "--out", "x.fsnl"],
    ["gen", "--out", "x.fsnl", "--style", "novalue"],
    ["train", "--records", "x", "--out-dir", "y", "--arch", "nope=1"],
    ["eval", "--truth", "a"],
    ["split", "--in", "x", "--out-dir", "y", "--fractions", "train=abc"],
])
def test_usage_errors(argv):
    code, _, err = cli(*argv)
    assert code == EXIT_USAGE and "usage error" in err


def test_data_errors(tmp_path, mini_records):
    assert cli("inspect", tmp_path / "missing.fsnl")[0] == EXIT_DATA
    broken = tmp_path / "broken.fsnl"
    data = bytearray(mini_records.read_bytes())
    data[-2] ^= 0xFF
    broken.write_bytes(bytes(data))
    code, _, err = cli("inspect", broken)
    assert code == EXIT_DATA and "record 5" in err
    # mini records cannot feed the full model
    code, _, err = cli("train", "--records", mini_records, "--out-dir", tmp_path / "r", "--steps", 1)
    assert code == EXIT_DATA and "record 0" in err
    assert cli("stats", tmp_path)[0] == EXIT_DATA
