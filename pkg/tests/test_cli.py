import json

import pytest

from gtclean.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_synth_twice_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(capsys, "synth", "--seed", "7", "--out", str(a))[0] == 0
    assert _run(capsys, "synth", "--seed", "7", "--out", str(b))[0] == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()
    assert len((a / "truth.csv").read_text().splitlines()) == 1 + 30


def test_missing_out_is_usage_error(capsys):
    code, _, err = _run(capsys, "synth", "--seed", "1")
    assert code == 2 and err.startswith("error[USAGE]") and err.count("\n") == 1


def test_unknown_subcommand(capsys):
    assert _run(capsys, "frobnicate")[0] == 2


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cleaning": {"k": 0}}))
    code, _, err = _run(capsys, "synth", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2 and err.startswith("error[CONFIG]")


def test_bad_levels_flag(tmp_path, capsys):
    code, _, err = _run(capsys, "clean", "--levels", "L1,L9", "--out", str(tmp_path))
    assert code == 2 and "error[CONFIG]" in err


def test_ingest_error_exit_1(tmp_path, capsys):
    _run(capsys, "synth", "--out", str(tmp_path / "d"))
    px = tmp_path / "d" / "pixels.csv"
    lines = px.read_text().splitlines()
    lines[3] = lines[3].replace(lines[3].split(",")[3], "-0.5", 1)
    px.write_text("\n".join(lines) + "\n")
    code, _, err = _run(capsys, "clean", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "o"))
    assert code == 1 and err.startswith("error[INGEST]: reflectance out of range, row 4")


def test_full_cli_flow(tmp_path, capsys):
    d, o = str(tmp_path / "d"), str(tmp_path / "o")
    assert _run(capsys, "synth", "--out", d, "--plots-per-crop", "12", "--pixels-per-plot", "9")[0] == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"forest": {"n_trees": 5}}))
    assert _run(capsys, "clean", "--config", str(cfg), "--data", d, "--out", o)[0] == 0
    code, out, _ = _run(capsys, "train-eval", "--config", str(cfg), "--data", d, "--out", o, "--save-models")
    assert code == 0 and "L3: macro F1" in out
    assert (tmp_path / "o" / "model_L3.json").is_file()
    code, out, _ = _run(capsys, "report", "--out", o)
    assert code == 0 and "Funnel" in out
    code, out, _ = _run(capsys, "fcc", "--data", d, "--out", o, "--day", "80", "--plot-ids", "p00000")
    assert code == 0 and (tmp_path / "o" / "fcc" / "p00000_80.png").is_file()
    code, _, err = _run(capsys, "fcc", "--data", d, "--out", o, "--day", "81")
    assert code == 2 and "error[CONFIG]" in err


def test_levels_flag_limits_outputs(tmp_path, capsys):
    d, o = tmp_path / "d", tmp_path / "o"
    _run(capsys, "synth", "--out", str(d))
    assert _run(capsys, "clean", "--data", str(d), "--out", str(o), "--levels", "L1")[0] == 0
    assert (o / "retained_L1.csv").is_file() and not (o / "retained_L2.csv").exists()


def test_report_without_manifest(tmp_path, capsys):
    code, _, err = _run(capsys, "report", "--out", str(tmp_path))
    assert code == 2 and "manifest" in err


@pytest.mark.parametrize("argv", [["--help"], ["synth", "--help"]])
def test_help_exits_zero(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 0
