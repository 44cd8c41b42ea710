import json

import pytest

from motvla.bench import bench_forward_backward, run_variant, variant_deviation, write_bench

from oracles import tiny_config


def test_variants_agree_on_values_and_gradients():
    fwd, grad = variant_deviation(tiny_config(), batch_size=3)
    assert fwd < 1e-10 and grad < 1e-8


def test_same_seed_same_final_loss():
    cfg = tiny_config()
    runs = [run_variant(cfg, 2, 1, 2, v) for v in ("dense", "block", "block")]
    assert runs[1].final_loss == runs[2].final_loss
    assert runs[0].final_loss == pytest.approx(runs[1].final_loss, abs=1e-10)
    assert all(r.samples_per_second > 0 for r in runs)


def test_report_fields_and_files(tmp_path):
    report = bench_forward_backward(tiny_config(), 2, 0, 1)
    assert report.attention_macs["block"] <= report.attention_macs["dense"]
    assert report.speedup > 0 and report.final_loss_deviation < 1e-10
    paths = write_bench(report, tmp_path)
    assert json.loads(paths["json"].read_text())["batch_size"] == 2
    assert "speedup" in paths["table"].read_text()


def test_single_variant_has_no_speedup():
    report = bench_forward_backward(tiny_config(), 2, 0, 1, variants=("dense",))
    assert report.speedup is None and set(report.samples_per_second) == {"dense"}


def test_rejects_empty_measurement():
    with pytest.raises(ValueError):
        run_variant(tiny_config(), 2, 0, 0, "block")
