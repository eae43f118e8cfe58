import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from nmfdereverb.cli import evaluate, main
from nmfdereverb.metrics import cepstral_distortion
from nmfdereverb.rir_synth import RirSpec, synth_rir
from nmfdereverb.signal_io import convolve, read_wav, write_wav
from nmfdereverb.speechlike import synth_utterance


@pytest.fixture(scope="module")
def wavs(tmp_path_factory):
    d = tmp_path_factory.mktemp("wavs")
    clean = synth_utterance(3, 1.5)
    rev = convolve(clean, synth_rir(RirSpec(0.5))).trim(len(clean))
    write_wav(d / "clean.wav", clean)
    write_wav(d / "rev.wav", rev)
    return d


def test_dereverb_nmfd(wavs, tmp_path, capsys):
    out = tmp_path / "out.wav"
    assert main(["dereverb", str(wavs / "rev.wav"), "-o", str(out), "--algo", "nmfd",
                 "--verbose"]) == 0
    assert out.exists()
    assert len(read_wav(out)) == len(read_wav(wavs / "rev.wav"))
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 21 and lines[0].startswith("iter   0")


def test_unknown_algo_is_usage_error(wavs, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["dereverb", str(wavs / "rev.wav"), "-o", str(tmp_path / "o.wav"), "--algo", "x"])
    assert exc.value.code == 2


def test_console_script_usage_error(wavs, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nmfdereverb.cli", "dereverb",
                           str(wavs / "rev.wav"), "-o", str(tmp_path / "o.wav"), "--algo", "x"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "invalid choice" in proc.stderr


def test_conv_tbase1_equals_nmfd_nmf(wavs, tmp_path):
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    assert main(["dereverb", str(wavs / "rev.wav"), "-o", str(a), "--algo", "conv",
                 "--t-base", "1", "--seed", "4"]) == 0
    assert main(["dereverb", str(wavs / "rev.wav"), "-o", str(b), "--algo", "nmfd-nmf",
                 "--seed", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_missing_input_reports_error(tmp_path, capsys):
    assert main(["dereverb", str(tmp_path / "none.wav"), "-o", str(tmp_path / "o.wav"),
                 "--algo", "nmfd"]) == 1
    assert "error" in capsys.readouterr().err


def test_export_dir(wavs, tmp_path):
    d = tmp_path / "ex"
    assert main(["dereverb", str(wavs / "rev.wav"), "-o", str(tmp_path / "o.wav"),
                 "--algo", "act-deconv", "--iters-nmf", "10", "--export-dir", str(d)]) == 0
    assert {p.name for p in d.iterdir()} >= {"cost_trace.csv", "W.csv", "A.csv", "h.csv"}


def test_config_precedence(wavs, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"iters": 3, "L": 5}))
    args = ["dereverb", str(wavs / "rev.wav"), "-o", str(tmp_path / "o.wav"), "--algo", "nmfd",
            "--verbose", "--config", str(cfg)]
    main(args)
    assert len(capsys.readouterr().out.strip().splitlines()) == 4
    main(args + ["--iters", "6"])
    assert len(capsys.readouterr().out.strip().splitlines()) == 7
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(args) == 1


def test_evaluate_trivial_cases(wavs, capsys):
    clean, rev = str(wavs / "clean.wav"), str(wavs / "rev.wav")
    cd_in = cepstral_distortion(read_wav(clean), read_wav(rev))
    assert main(["evaluate", clean, rev, clean]) == 0
    row = capsys.readouterr().out.strip().splitlines()[-1].split(",")
    assert float(row[1]) == cd_in and float(row[3]) == cd_in
    assert main(["evaluate", clean, rev, rev]) == 0
    row = capsys.readouterr().out.strip().splitlines()[-1].split(",")
    assert float(row[3]) == 0.0


def test_evaluate_matches_metrics_and_appends_csv(wavs, tmp_path):
    clean, rev = read_wav(wavs / "clean.wav"), read_wav(wavs / "rev.wav")
    enhanced = tmp_path / "e.wav"
    main(["dereverb", str(wavs / "rev.wav"), "-o", str(enhanced), "--algo", "nmfd"])
    rep = evaluate(clean, rev, read_wav(enhanced))
    assert rep.cd_out == cepstral_distortion(clean, read_wav(enhanced))
    out = tmp_path / "eval.csv"
    for _ in range(2):
        main(["evaluate", str(wavs / "clean.wav"), str(wavs / "rev.wav"), str(enhanced),
              "--csv", str(out), "--label", "500ms"])
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["label", "cd_in", "cd_out", "cd_improvement"] and len(rows) == 3


def test_evaluate_length_error(wavs, tmp_path):
    short = tmp_path / "short.wav"
    w = read_wav(wavs / "rev.wav")
    write_wav(short, w.trim(len(w) // 2))
    assert main(["evaluate", str(wavs / "clean.wav"), str(short), str(short)]) == 1


def run_experiment_cli(out, *extra):
    return main(["experiment", "--synthetic", "1", "--t60", "0.25", "0.5", "--algo", "nmfd",
                 "nmfd-nmf", "--iters", "3", "--out-dir", str(out), "--seed", "2", *extra])


def test_experiment_rows_and_pivot(tmp_path):
    out = tmp_path / "run"
    assert run_experiment_cli(out, "--sweep", "L=4,8,11,14,20") == 0
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert len(rows) == 1 * 2 * 2 * 5
    summary = list(csv.reader(open(out / "summary.csv")))
    assert summary[0] == ["algorithm", "setting", "metric", "250ms", "500ms"]
    nmfd_cd = [r for r in summary if r[0] == "nmfd" and r[2] == "cd_improvement"]
    assert len(nmfd_cd) == 5


def test_experiment_byte_reproducible(tmp_path):
    run_experiment_cli(tmp_path / "a")
    run_experiment_cli(tmp_path / "b")
    for name in ("results.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment_corpus_from_env(tmp_path, monkeypatch, wavs):
    monkeypatch.setenv("NMFDEREVERB_CORPUS", str(wavs))
    out = tmp_path / "env"
    assert main(["experiment", "--t60", "0.5", "--iters", "2", "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert {r["utterance"] for r in rows} == {"clean", "rev"}
    monkeypatch.delenv("NMFDEREVERB_CORPUS")
    assert main(["experiment", "--out-dir", str(out)]) == 1
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["experiment", "--corpus", str(empty), "--out-dir", str(out)]) == 1


def test_experiment_rir_dir_and_audio(tmp_path):
    rir_dir = tmp_path / "rirs"
    rir_dir.mkdir()
    write_wav(rir_dir / "office.wav", synth_rir(RirSpec(0.3)))
    out = tmp_path / "run"
    assert main(["experiment", "--synthetic", "1", "--rirs", str(rir_dir), "--iters", "2",
                 "--out-dir", str(out), "--save-audio"]) == 0
    assert any(p.name.endswith("__nmfd.wav") for p in (out / "audio").iterdir())
    summary = list(csv.reader(open(out / "summary.csv")))
    assert summary[0][3:] == ["office"]
