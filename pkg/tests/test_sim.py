import json

import pytest

from hcpi_scma.codebook import canonical_factor_graph, generate_families, save_codebook_family
from hcpi_scma.errors import InvalidConfig
from hcpi_scma.sim import SweepConfig, emit_csv, parse_csv, run_sweep

FAST = dict(max_trials=512, target_bit_errors=10 ** 9, chunk=128)


def test_config_defaults_and_validation():
    cfg = SweepConfig()
    assert (cfg.J, cfg.K, cfg.C, cfg.n, cfg.t) == (6, 4, 4, 4, (2, 1))
    assert cfg.mapper_source == "table2-hcpi-n4"
    assert SweepConfig(scheme="cscma").hcpi.m == 2
    assert SweepConfig(scheme="cpi", t=(2,)).mapper_source == "table1-n4t2"
    assert SweepConfig(scheme="cpi", t=(3,)).mapper_source == "combinadic"
    for bad in (dict(snr_db=(5, 0)), dict(max_trials=0), dict(target_bit_errors=0), dict(scheme="x"),
                dict(scheme="cpi", t=(2, 1)), dict(fading="rician"), dict(t=(3, 3))):
        with pytest.raises(InvalidConfig):
            SweepConfig(**bad)
    with pytest.raises(InvalidConfig):
        SweepConfig.from_dict({"bogus": 1})


def test_config_json_round_trip(tmp_path):
    cfg = SweepConfig(scheme="cpi", t=(3,), snr_db=(1.5, 2.5), seed=7)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert SweepConfig.from_json(p) == cfg


def test_noiseless_zero_errors():
    cfg = SweepConfig(fading="none", n0=1e-4, snr_db=(0.0,), max_trials=1000, target_bit_errors=10 ** 9)
    pt = run_sweep(cfg, workers=1).points[0]
    assert pt.trials == 1000 and pt.bit_errors == 0 and pt.block_errors == 0


def test_uninformative_regime():
    pt = run_sweep(SweepConfig(snr_db=(-20.0,), **FAST), workers=1).points[0]
    assert abs(pt.ber - 0.5) < 0.05


def test_worker_count_invariance():
    cfg = SweepConfig(snr_db=(5.0, 10.0), max_trials=2000, target_bit_errors=300, chunk=100)
    a = run_sweep(cfg, workers=1)
    b = run_sweep(cfg, workers=3)
    strip = lambda r: [{**p.__dict__, "wall_time": 0} for p in r.points]
    assert strip(a) == strip(b)
    assert emit_csv(a) == emit_csv(b)


def test_early_stop_counts_whole_chunks():
    cfg = SweepConfig(snr_db=(0.0,), max_trials=10 ** 6, target_bit_errors=50, chunk=64)
    pt = run_sweep(cfg, workers=1).points[0]
    assert pt.trials == 64 and pt.bit_errors >= 50
    assert pt.ber == pt.bit_errors / pt.bits
    assert pt.bits == pt.trials * cfg.J * cfg.hcpi.m


def test_stage_accounting():
    pt = run_sweep(SweepConfig(snr_db=(8.0,), **FAST), workers=1).points[0]
    assert pt.block_errors >= max(pt.vac_errors, *pt.idx_errors, pt.data_errors)
    assert pt.blocks == pt.trials * 6


def test_cscma_sweep_runs():
    pt = run_sweep(SweepConfig(scheme="cscma", snr_db=(10.0,), **FAST), workers=1).points[0]
    assert pt.bits == 512 * 6 * 2
    assert 0 < pt.ber < 0.1


def test_external_codebook(tmp_path):
    g = canonical_factor_graph(4, 6, 3, 2)
    p = tmp_path / "cb.json"
    save_codebook_family(generate_families(g, 4, 2), p)
    a = run_sweep(SweepConfig(codebook=str(p), snr_db=(10.0,), **FAST), workers=1)
    b = run_sweep(SweepConfig(snr_db=(10.0,), **FAST), workers=1)
    assert a.points[0].bit_errors == b.points[0].bit_errors
    save_codebook_family(generate_families(g, 4, 1), p)
    with pytest.raises(InvalidConfig):
        run_sweep(SweepConfig(codebook=str(p), snr_db=(10.0,), **FAST), workers=1)


def test_csv_shapes_and_round_trip():
    empty = run_sweep(SweepConfig(snr_db=()), workers=1)
    assert emit_csv(empty).count("\r\n") == 1
    one = run_sweep(SweepConfig(snr_db=(7.0,), **FAST), workers=1)
    text = emit_csv(one)
    assert text.count("\r\n") == 2
    row = parse_csv(text)[0]
    p = one.points[0]
    assert row["snr_db"] == p.snr_db and row["ber"] == p.ber and row["bler"] == p.bler
    assert row["bit_errors"] == p.bit_errors and row["trials"] == p.trials
    assert row["idx_errors_per_order"] == p.idx_errors and row["t_list"] == (2, 1)
    assert row["scheme"] == "hcpi" and row["R"] == 2
