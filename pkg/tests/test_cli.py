import json

import numpy as np
import pytest

from neutralopt.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from neutralopt.pipeline import (
    MANIFEST_NAME,
    ConfigError,
    PipelineConfig,
    emit_plot_data,
    instance_schedule,
    output_digest,
    run_pipeline,
)
from neutralopt.pulseshaper import OptTrace
from neutralopt.qscore import BetaPoint, fit_qscore

SMALL_RUN = {
    "n_values": [4, 5],
    "instances": {"4": 2, "5": 2},
    "train_n_values": [4, 5],
    "train_instances": 2,
    "layouts": ["spring", "random"],
    "train_starts_per_atom": 1,
    "train_calls_per_atom": 2,
    "shots_per_eval": 50,
    "n_registers": 2,
    "shots": 100,
    "random_trials": 200,
    "fit_tail": 4,
}


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_schedule_endpoints():
    assert instance_schedule(6) == 500
    assert instance_schedule(16) == 10
    assert instance_schedule(6, 0.01) == 5
    counts = [instance_schedule(n) for n in range(6, 17)]
    assert all(a > b for a, b in zip(counts, counts[1:]))


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(noise="loud")
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"bogus": 1})
    cfg = PipelineConfig.from_dict(SMALL_RUN)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_full_run_deterministic_and_manifest_complete(tmp_path):
    digests = []
    for name in ("a", "b"):
        cfg = PipelineConfig.from_dict({**SMALL_RUN, "out": str(tmp_path / name)})
        manifest = run_pipeline(cfg)
        root = tmp_path / name
        on_disk = sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())
        assert sorted(manifest.files) == on_disk
        assert len(set(manifest.files)) == len(manifest.files)
        assert [s["status"] for s in manifest.stages] == ["ok"] * len(manifest.stages)
        digests.append(output_digest(root))
    assert digests[0] == digests[1]
    assert (tmp_path / "a/results.csv").read_bytes() == (tmp_path / "b/results.csv").read_bytes()
    rows = (tmp_path / "a/results.csv").read_text().splitlines()
    assert len(rows) == 1 + 4


def test_empty_range_writes_only_manifest(tmp_path):
    manifest = run_pipeline(PipelineConfig(n_values=[], out=str(tmp_path / "e")))
    assert manifest.files == [MANIFEST_NAME]
    assert [p.name for p in (tmp_path / "e").iterdir()] == [MANIFEST_NAME]


def test_tds_mode_emits_trace(tmp_path):
    cfg = {"n_values": [4], "instances": {"4": 1}, "mode": "tds", "layouts": ["spring"], "starts_per_atom": 1, "calls_per_atom": 2,
           "shots_per_eval": 50, "shots": 100, "random_trials": 100, "out": str(tmp_path / "t")}
    run_pipeline(PipelineConfig.from_dict(cfg))
    lines = (tmp_path / "t/plot_trace.tsv").read_text().splitlines()
    assert lines[0] == "label\tstep\tobjective\tbest_cost"
    best = [float(l.split("\t")[3]) for l in lines[1:]]
    assert len(best) == 8 and np.all(np.diff(best) <= 0)


def test_plot_data_shapes(tmp_path):
    curve = [BetaPoint(n, 0, 1, 0, float(np.exp(-n / 5)), 0.0) for n in range(6, 12)]
    p = emit_plot_data(curve, "beta_curve", tmp_path / "b.tsv")
    assert len(p.read_text().splitlines()) == 7
    tr = OptTrace()
    for v in (3, 1, 2, 0, 5):
        tr.record([v], v, v)
    col = [float(l.split("\t")[3]) for l in emit_plot_data(tr, "trace", tmp_path / "t.tsv").read_text().splitlines()[1:]]
    assert col == [3, 1, 1, 0, 0]
    fit = fit_qscore(curve, 6)
    lines = emit_plot_data((fit, curve), "fit", tmp_path / "f.tsv").read_text().splitlines()
    assert len(lines) == 101
    with pytest.raises(ValueError):
        emit_plot_data(None, "fit", tmp_path / "x.tsv")
    with pytest.raises(ValueError):
        emit_plot_data(curve, "pie", tmp_path / "x.tsv")


def test_subcommand_chain(tmp_path):
    t = tmp_path
    assert main(["--seed", "1", "--out", str(t / "g.json"), "gen-graphs", "--n", "4", "--count", "3"]) == EXIT_OK
    graphs = json.loads((t / "g.json").read_text())
    assert len(graphs) == 3 and graphs[0]["id"] == "n4-0"
    write_json(t / "g1.json", graphs[0])
    assert main(["--out", str(t / "r.json"), "embed", "--graph", str(t / "g1.json")]) == EXIT_OK
    assert main(["--out", str(t / "p.json"), "shape-pulse", "--graph", str(t / "g1.json"), "--register", str(t / "r.json"),
                 "--starts", "2", "--calls", "3", "--shots-per-eval", "40", "--trace", str(t / "tr.tsv")]) == EXIT_OK
    assert len((t / "tr.tsv").read_text().splitlines()) == 4
    assert main(["--out", str(t / "s.json"), "emulate", "--register", str(t / "r.json"), "--pulse", str(t / "p.json"),
                 "--shots", "100", "--noise", "plus"]) == EXIT_OK
    assert json.loads((t / "s.json").read_text())["total"] == 100
    assert main(["--out", str(t / "d.csv"), "build-dataset", "--graphs", str(t / "g.json"), "--layouts", "spring",
                 "--starts-per-atom", "1", "--calls-per-atom", "1"]) == EXIT_OK
    assert main(["--out", str(t / "m.json"), "train", "--dataset", str(t / "d.csv")]) == EXIT_OK
    assert main(["--out", str(t / "pp.json"), "predict", "--model", str(t / "m.json"), "--graph", str(t / "g1.json"),
                 "--register", str(t / "r.json")]) == EXIT_OK
    assert set(json.loads((t / "pp.json").read_text())) == {"omega_rad_per_us", "delta_rad_per_us", "duration_us"}
    assert main(["--out", str(t / "res.csv"), "evaluate", "--model", str(t / "m.json"), "--graphs", str(t / "g.json"),
                 "--registers", "2", "--shots", "100"]) == EXIT_OK
    assert len((t / "res.csv").read_text().splitlines()) == 4
    assert main(["--out", str(t / "bc.csv"), "qscore", "--results", str(t / "res.csv"), "--n-lo", "4",
                 "--fit-out", str(t / "fit.json")]) == EXIT_OK
    assert "threshold_qscore" in json.loads((t / "fit.json").read_text())


def test_config_file_supplies_required_args(tmp_path):
    t = tmp_path
    assert main(["--out", str(t / "g.json"), "gen-graphs", "--n", "4", "--count", "2"]) == EXIT_OK
    assert main(["--out", str(t / "d.csv"), "build-dataset", "--graphs", str(t / "g.json"), "--layouts", "spring",
                 "--starts-per-atom", "1", "--calls-per-atom", "1"]) == EXIT_OK
    cfg = write_json(t / "c.json", {"dataset": str(t / "d.csv")})
    assert main(["--config", cfg, "--out", str(t / "m1.json"), "train"]) == EXIT_OK
    assert main(["--out", str(t / "m2.json"), "train", "--dataset", str(t / "d.csv")]) == EXIT_OK
    assert (t / "m1.json").read_text() == (t / "m2.json").read_text()


def test_run_subcommand(tmp_path, capsys):
    cfg = write_json(tmp_path / "run.json", SMALL_RUN)
    assert main(["--config", cfg, "--out", str(tmp_path / "run"), "run"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert "threshold_qscore" in summary
    assert (tmp_path / "run" / MANIFEST_NAME).exists()


def test_exit_codes(tmp_path):
    assert main(["train"]) == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "missing.json"), "run"]) == EXIT_CONFIG
    bad = write_json(tmp_path / "bad.json", {"noise": "loud"})
    assert main(["--config", bad, "--out", str(tmp_path / "x"), "run"]) == EXIT_CONFIG
    unknown = write_json(tmp_path / "u.json", {"nonsense": 1})
    assert main(["--config", unknown, "train"]) == EXIT_CONFIG
    assert main(["gen-graphs", "--n", "3", "--p", "2.0"]) == EXIT_CONFIG
    clash = write_json(tmp_path / "r.json", {"positions_um": [[0, 0], [0, 0]]})
    p = write_json(tmp_path / "p.json", {"omega_rad_per_us": [1, 1, 1], "delta_rad_per_us": [0] * 5, "duration_us": 1})
    assert main(["--out", str(tmp_path / "s.json"), "emulate", "--register", clash, "--pulse", p]) == EXIT_STAGE
