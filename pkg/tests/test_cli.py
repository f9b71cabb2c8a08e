import json
import subprocess
import sys

import pytest

from _cli_cases import CASES, W, X, run_dirs, same_artifacts
from twistlab.cli import (
    EXIT_BADNESS,
    EXIT_CONFIG,
    EXIT_INVARIANT,
    EXIT_OK,
    config_to_text,
    main,
    read_config_file,
    resolve,
)


@pytest.mark.parametrize("name", sorted(CASES))
def test_each_experiment_is_deterministic(name, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([name, *CASES[name], "--outdir", str(a)]) == EXIT_OK
    assert main([name, *CASES[name], "--outdir", str(b), "--threads", "1"]) == EXIT_OK
    (da,), (db,) = run_dirs(a), run_dirs(b)
    assert da.name == db.name and da.name.startswith(name + "-")
    assert same_artifacts(da, db)
    assert "timestamp" in json.loads((da / "stamp.json").read_text())
    assert "artifacts:" in capsys.readouterr().out


def test_emitted_config_reproduces_the_report(tmp_path):
    assert main(["profile", *CASES["profile"], "--outdir", str(tmp_path / "a")]) == EXIT_OK
    (da,) = run_dirs(tmp_path / "a")
    assert main(["profile", "--config", str(da / "config.json"),
                 "--outdir", str(tmp_path / "b")]) == EXIT_OK
    (db,) = run_dirs(tmp_path / "b")
    assert same_artifacts(da, db)


def test_key_value_file_and_flag_override(tmp_path):
    cfg = resolve("profile", {}, {"x": X, "i": "0.5", "j": "0.5", "Q": "100"})
    path = tmp_path / "p.cfg"
    path.write_text("# comment\n" + config_to_text(cfg))
    assert read_config_file(str(path)) == {"x": X, "i": "0.5", "j": "0.5", "Q": "100"}
    assert main(["profile", "--config", str(path), "--Q", "200", "--outdir", str(tmp_path)]) == 0
    (d,) = run_dirs(tmp_path)
    assert json.loads((d / "config.json").read_text())["Q"] == 200


def test_config_errors(tmp_path, capsys):
    assert main(["profile", "--x", X, "--i", "0.5", "--Q", "10"]) == EXIT_CONFIG
    assert "missing required parameter --j" in capsys.readouterr().err
    assert main(["profile", "--x", X, "--i", "0.5", "--j", "0.6", "--Q", "10"]) == EXIT_CONFIG
    assert "i + j = 1" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("x=1\nfoo=2\n")
    assert main(["profile", "--config", str(bad)]) == EXIT_CONFIG
    assert "unknown config keys" in capsys.readouterr().err
    assert main(["metric", "--family", "ball", "--psi", "const:C=1", "--N", "2000",
                 "--Q", "5", "--seed", "0", "--outdir", str(tmp_path)]) == EXIT_CONFIG


def test_badness_and_invariant_exit_codes(tmp_path):
    args = ["--x", X, *W, "--k", "25", "--c", "0.9", "--outdir", str(tmp_path)]
    assert main(["cantor", *args]) == EXIT_BADNESS
    assert main(["adversary", *W, "--K", "2", "--sabotage", "1e-6",
                 "--outdir", str(tmp_path)]) == EXIT_INVARIANT


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "twistlab", "profile", *CASES["profile"],
                          "--outdir", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0 and "c_estimate" in out.stdout
