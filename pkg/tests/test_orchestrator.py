import csv
import json

import numpy as np
import pytest
from pydantic import ValidationError

from fedsel.devices import DeviceProfile, FleetConfig, save_fleet
from fedsel.orchestrator.config import ExperimentConfig, load_config
from fedsel.orchestrator.engine import SimulationState, run_experiment, run_round, run_seed
from fedsel.orchestrator.export import ROUND_COLUMNS, SERIES_COLUMNS, export_csv


def _twin_fleet(path):
    common = dict(base_batch_time=200.0, base_battery_drop=0.5, noise_sigma=0.0, load_step=0.0, ram_sensitivity=0.0, cpu_sensitivity=0.0)
    save_fleet(FleetConfig(profiles=[DeviceProfile(device_id=c, **common) for c in ("a", "b")]), path)
    return str(path)


def test_identical_devices_wait_nothing(tmp_path):
    cfg = ExperimentConfig(fleet=_twin_fleet(tmp_path / "f.json"), rounds=1, k=2, frozen_estimates={"a": (200.0, 0.5), "b": (200.0, 0.5)})
    rep = run_round(SimulationState.create(cfg, 0), 1)
    assert rep.epochs == {"a": 7, "b": 7}
    assert all(abs(rep.clients[c].waiting) <= 200.0 for c in ("a", "b"))


def test_one_report_per_round_and_seed():
    cfg = ExperimentConfig(fleet="table1", rounds=1, seeds=[0, 1, 2], strategy="random")
    res = run_experiment(cfg)
    assert [len(r.reports) for r in res.runs] == [1, 1, 1]


def test_reruns_write_identical_csvs(tmp_path):
    cfg = ExperimentConfig(fleet="table1", rounds=4, seeds=[0, 1], warmup_rounds=2)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["fairness.csv", "rounds_seed0.csv", "rounds_seed1.csv", "series.csv", "series_mean.csv", "summary.json"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_report_list_writes_header_only(tmp_path):
    export_csv([], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().strip() == ",".join(ROUND_COLUMNS)


def test_csv_numeric_roundtrip(tmp_path):
    cfg = ExperimentConfig(fleet="table1", rounds=3, seeds=[0], warmup_rounds=1)
    run = run_seed(cfg, 0)
    export_csv(run.reports, tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert list(rows[0]) == ROUND_COLUMNS
    by_key = {(int(r["t"]), r["client_id"]): r for r in rows}
    for rep in run.reports:
        for cid, rec in rep.clients.items():
            row = by_key[(rep.t, cid)]
            for col, val in (("global_error", rep.global_error), ("cumulative_regret", rep.cumulative_regret), ("AC", rec.context.AC)):
                assert float(row[col]) == pytest.approx(val, rel=1e-5, abs=1e-12)
            if rec.duration is not None:
                assert float(row["duration_s"]) == pytest.approx(rec.duration, rel=1e-5)


def test_series_columns(tmp_path):
    run_experiment(ExperimentConfig(fleet="table1", rounds=2, seeds=[0, 1], strategy="random"), tmp_path)
    header = (tmp_path / "series.csv").read_text().splitlines()[0]
    assert header == ",".join(SERIES_COLUMNS)
    mean_rows = list(csv.reader(open(tmp_path / "series_mean.csv")))
    assert mean_rows[0] == ["t", "n_seeds", *SERIES_COLUMNS[2:]]
    # t = 0 carries the initial global error, then one row per round
    assert [r[0] for r in mean_rows[1:]] == ["0", "1", "2"]
    assert all(r[1] == "2" for r in mean_rows[1:])


def test_invalid_config_lists_fields():
    with pytest.raises(ValidationError) as exc:
        ExperimentConfig(fleet="table1", k=9)
    assert "k" in str(exc.value)
    with pytest.raises(ValidationError) as exc:
        ExperimentConfig(rounds=0, e_min=0)
    text = str(exc.value)
    assert "rounds" in text and "e_min" in text
    with pytest.raises(ValidationError):
        ExperimentConfig(fleet="nowhere")
    with pytest.raises(ValidationError):
        ExperimentConfig(colour="blue")


def test_config_json_roundtrip(tmp_path):
    cfg = ExperimentConfig(fleet="pool10", rounds=3, k=4, strategy="neuralucb_s", seeds=[3, 4])
    (tmp_path / "c.json").write_text(cfg.model_dump_json())
    assert load_config(tmp_path / "c.json") == cfg


def test_warmup_round_robin_uses_e_min():
    cfg = ExperimentConfig(fleet="table1", rounds=4, k=2, warmup_rounds=2, seeds=[0])
    run = run_seed(cfg, 0)
    w1, w2 = run.reports[0], run.reports[1]
    assert w1.warmup and w2.warmup and not run.reports[2].warmup
    assert set(w1.epochs.values()) == {1}
    assert set(w1.chosen).isdisjoint(w2.chosen)


def test_battery_safety_resource_aware():
    cfg = ExperimentConfig(fleet="scenario1_like", rounds=60, k=2, seeds=[0, 1], warmup_rounds=30)
    for seed in cfg.seeds:
        for rep in run_seed(cfg, seed).reports:
            for cid in rep.chosen:
                rec = rep.clients[cid]
                assert not rec.died
                assert rec.battery_after >= cfg.gamma


def test_rounds_always_terminate_with_deadline():
    cfg = ExperimentConfig(fleet="scenario2", rounds=3, k=2, strategy="random", seeds=[0])
    run = run_seed(cfg, 0)
    assert len(run.reports) == 3
    assert all(r.completed and not r.watchdog_fired for r in run.reports)
    first = run.reports[0]
    assert first.clients["client1"].died and first.max_waiting is not None and np.isfinite(first.max_waiting)


def test_summary_has_fairness_and_means():
    res = run_experiment(ExperimentConfig(fleet="table1", rounds=3, seeds=[0, 1], strategy="random"))
    s = res.summary()
    assert 0 < s["mean"]["fairness_jain"] <= 1
    assert len(s["seeds"]) == 2
    json.dumps(s)
