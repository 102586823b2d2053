import json

import pytest

from hcpi_scma.cli import main
from hcpi_scma.sim import SweepConfig, parse_csv


def _config(tmp_path, **kw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(kw))
    return str(p)


def test_te_default_hcpi(tmp_path, capsys):
    assert main(["te", "--config", _config(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "3.375"


def test_te_cscma(tmp_path, capsys):
    assert main(["te", "--config", _config(tmp_path, scheme="cscma")]) == 0
    assert capsys.readouterr().out.strip() == "3"


def test_te_cpi(tmp_path, capsys):
    assert main(["te", "--config", _config(tmp_path, scheme="cpi", t=[2])]) == 0
    assert capsys.readouterr().out.strip() == "2.25"


def test_simulate_writes_csv(tmp_path, capsys):
    cfg = _config(tmp_path, snr_db=[5.0, 10.0], max_trials=256, target_bit_errors=10 ** 9)
    out = tmp_path / "out.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "3", "--workers", "1"]) == 0
    rows = parse_csv(out.read_text())
    assert [r["snr_db"] for r in rows] == [5.0, 10.0]
    assert all(r["seed"] == 3 and r["trials"] == 256 for r in rows)
    printed = capsys.readouterr().out
    assert "Eb/N0 5 dB" in printed and "Es/N0 per active chip" in printed


def test_bound_exact_on_reduced_codebook(tmp_path):
    cb = tmp_path / "cb.json"
    assert main(["gen-codebook", "--graph", "2,2,1,1", "--C", "2", "--R", "1", "--out", str(cb)]) == 0
    cfg = _config(tmp_path, scheme="cpi", J=2, K=2, C=2, d_f=1, d_v=1, n=2, t=[1], codebook=str(cb),
                  snr_db=[5.0, 10.0])
    out = tmp_path / "b.csv"
    assert main(["bound", "--config", cfg, "--out", str(out), "--mode", "exact"]) == 0
    lines = out.read_bytes().decode().split("\r\n")
    assert lines[0] == "snr_db,n0,bound,stderr,mode"
    vals = [float(line.split(",")[2]) for line in lines[1:3]]
    assert vals[0] > vals[1] > 0
    assert lines[1].endswith(",exact")


def test_bound_sampled_and_bad_user(tmp_path):
    cfg = _config(tmp_path, snr_db=[20.0])
    out = tmp_path / "b.csv"
    assert main(["bound", "--config", cfg, "--out", str(out), "--samples", "20"]) == 0
    assert out.read_text().count("sampled") == 1
    assert main(["bound", "--config", cfg, "--out", str(out), "--user", "9"]) == 1


def test_gen_and_validate(tmp_path, capsys):
    cb = tmp_path / "cb.json"
    assert main(["gen-codebook", "--graph", "4,6,3,2", "--C", "4", "--R", "2", "--out", str(cb)]) == 0
    assert main(["validate", "--codebook", str(cb)]) == 0
    assert "ok:" in capsys.readouterr().out
    doc = json.loads(cb.read_text())
    doc["families"][0]["codewords"][0][0] = [[2 * x for x in z] for z in doc["families"][0]["codewords"][0][0]]
    cb.write_text(json.dumps(doc))
    assert main(["validate", "--codebook", str(cb)]) == 1
    assert "power-violation" in capsys.readouterr().err


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["gen-codebook", "--graph", "4,6,2,2", "--C", "4", "--R", "1", "--out", str(tmp_path / "x")]) == 1
    assert "infeasible-degrees" in capsys.readouterr().err
    assert main(["gen-codebook", "--graph", "4,6", "--C", "4", "--R", "1", "--out", str(tmp_path / "x")]) == 1
    assert "--graph" in capsys.readouterr().err
    assert main(["validate", "--codebook", str(tmp_path / "missing.json")]) == 1
    assert main(["te", "--config", _config(tmp_path, scheme="nope")]) == 1
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--config", "x"])
    assert e.value.code != 0
    assert "--out" in capsys.readouterr().err


def test_config_file_matches_dataclass(tmp_path):
    p = _config(tmp_path, scheme="cpi", t=[3])
    assert SweepConfig.from_json(p).t == (3,)
