import pytest

from fracporo.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, main
from fracporo.config import dump_config
from fracporo.output import read_csv


@pytest.fixture(scope="module")
def small_config(tmp_path_factory, small_gas):
    path = tmp_path_factory.mktemp("cfg") / "small.ini"
    path.write_text(dump_config(small_gas))
    return path


def test_run_writes_outputs(tmp_path, small_config, capsys):
    out = tmp_path / "out"
    assert main([str(small_config), "--out", str(out), "--max-steps", "2"]) == EXIT_OK
    assert "stopped" in capsys.readouterr().out
    _, rows = read_csv(out / "series.csv")
    assert rows.shape[0] == 3
    assert (out / "report.txt").exists()


def test_unknown_scenario(tmp_path, capsys):
    assert main(["no_such_case", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nname = x\n[nonsense]\n")
    assert main([str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "nonsense" in capsys.readouterr().err


def test_malformed_bounds(tmp_path, small_config):
    assert main([str(small_config), "--out", str(tmp_path), "--assert-bounds", "0.1"]) == EXIT_CONFIG


def test_bound_violation_aborts(tmp_path, small_config, capsys):
    out = tmp_path / "out"
    code = main([str(small_config), "--out", str(out), "--max-steps", "3", "--assert-bounds", "0.0,1.0"])
    assert code == EXIT_ABORT
    assert "aperture" in capsys.readouterr().err
    # partial results are still written
    assert (out / "series.csv").exists()


def test_model_override(tmp_path, small_config, capsys):
    out = tmp_path / "out"
    assert main([str(small_config), "--out", str(out), "--max-steps", "1", "--model", "continuous"]) == EXIT_OK
    assert "(continuous)" in capsys.readouterr().out


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "gas_injection_cross" in capsys.readouterr().out
