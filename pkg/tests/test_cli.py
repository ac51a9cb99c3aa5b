import csv
import json

import pytest

from pc3dnoc import config as C
from pc3dnoc.cli import ExperimentSpec, StageError, format_table, main, run_compare, run_pipeline, run_sweep

QUICK = ["warmup=500", "cycles=4000", "drain=4000", "amosa.iterations_per_temp=20", "amosa.cooling_ratio=0.7"]


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    return json.loads(lines[0][len("# config: "):]), list(csv.DictReader(lines[1:]))


def test_overrides_and_defaults(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"pir": 0.03, "adele": {"a": 0.4}}))
    cfg = C.load_config(cfgfile, ["adele.xi=0.1", "traffic=shuffle", "rates=[0.01,0.02]", "new.key=abc"])
    assert cfg["pir"] == 0.03 and cfg["adele"] == {"a": 0.4, "xi": 0.1, "threshold": 0.5, "no_skip": False}
    assert cfg["traffic"] == "shuffle" and cfg["rates"] == [0.01, 0.02] and cfg["new"]["key"] == "abc"
    with pytest.raises(ValueError):
        C.apply_override(cfg, "novalue")


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentSpec("dance")
    with pytest.raises(FileNotFoundError):
        ExperimentSpec("simulate", str(tmp_path / "missing.json"))


def test_compare_self_deltas_zero(tmp_path):
    spec = ExperimentSpec("compare", None, str(tmp_path),
                          QUICK + ['policies=["nearest","nearest"]', "rates=[0.01,0.03,0.05]"])
    rows = run_compare(spec)
    assert len(rows) == 2 * 3
    for r in rows:
        assert r["delta_latency_pct"] == r["delta_energy_pct"] == r["delta_max_load_pct"] == 0.0
    cfg, table = read_csv(tmp_path / "compare.csv")
    assert len(table) == 6 and cfg["seed"] == 1 and cfg["policies"] == ["nearest", "nearest"]


def test_compare_adele_beats_nearest_near_saturation(tmp_path):
    spec = ExperimentSpec("compare", None, str(tmp_path),
                          ["warmup=2000", "cycles=20000", 'policies=["nearest","adele"]', "rates=[0.075]"])
    rows = run_compare(spec)
    adele = [r for r in rows if r["policy"] == "adele"][0]
    assert adele["delta_latency_pct"] < 0


def test_compare_needs_two_policies(tmp_path):
    with pytest.raises(ValueError):
        run_compare(ExperimentSpec("compare", None, str(tmp_path), ['policies=["nearest"]']))


def test_compare_names_failing_policy(tmp_path, monkeypatch):
    from pc3dnoc import cli
    from pc3dnoc.engine import SimulationError

    real = cli.simulate

    def boom(cfg):
        if cfg.policy == "cda":
            raise SimulationError("synthetic failure")
        return real(cfg)

    monkeypatch.setattr(cli, "simulate", boom)
    with pytest.raises(RuntimeError, match="'cda'"):
        run_compare(ExperimentSpec("compare", None, str(tmp_path), QUICK + ['policies=["nearest","cda"]',
                                                                          "rates=[0.01]"]))


def single_elevator_topology(tmp_path):
    p = tmp_path / "one.json"
    p.write_text(json.dumps({"dims": [3, 3, 2], "elevators": [[1, 1]]}))
    return str(p)


def test_pipeline_single_elevator(tmp_path):
    topo = single_elevator_topology(tmp_path)
    out = tmp_path / "run"
    res = run_pipeline(ExperimentSpec("pipeline", None, str(out), QUICK + [f"topology={json.dumps(topo)}"]))
    assert all(s == (0,) for s in res["assignment"].assignment)
    for name in ("archive.json", "assignment.json", "metrics.json"):
        assert (out / name).exists()
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["seed"] == 1 and doc["config"]["topology"] == topo and doc["resolved"]["policy"] == "adele"


def test_pipeline_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["pipeline", "--out", str(tmp_path / name), "--pir", "0.02"] + [a for s in QUICK
                                                                                    for a in ("--set", s)]) == 0
    for name in ("metrics.json", "archive.json", "assignment.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pipeline_strategies_ordered(tmp_path):
    docs = {}
    for strat in ("min_variance", "min_distance"):
        out = tmp_path / strat
        run_pipeline(ExperimentSpec("pipeline", None, str(out), QUICK + [f"strategy={strat}", "cycles=1000"]))
        docs[strat] = json.loads((out / "assignment.json").read_text())["objectives"]
    assert docs["min_variance"]["variance"] <= docs["min_distance"]["variance"]
    assert docs["min_distance"]["avg_distance"] <= docs["min_variance"]["avg_distance"]


def test_pipeline_stage_failure_named(tmp_path):
    with pytest.raises(StageError) as err:
        run_pipeline(ExperimentSpec("pipeline", None, str(tmp_path), ["amosa.cooling_ratio=2"]))
    assert err.value.stage == "optimize"
    with pytest.raises(StageError) as err:
        run_pipeline(ExperimentSpec("pipeline", None, str(tmp_path), QUICK + ["cycles=0"]))
    assert err.value.stage == "simulate"
    assert (tmp_path / "archive.json").exists()  # partial artifacts stay on disk


def test_main_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), "--policy", "nearest", "--cycles", "2000", "--warmup", "100",
                 "--per-cycle", "cycles.csv"]) == 0
    assert "avg_latency" in capsys.readouterr().out
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert doc["resolved"]["measure_cycles"] == 2000 and doc["resolved"]["warmup_cycles"] == 100
    lines = (tmp_path / "cycles.csv").read_text().splitlines()
    assert lines[1] == "cycle,injected_flits,delivered_packets" and len(lines) > 2000
    assert main(["simulate", "--out", str(tmp_path), "--set", "policy=teleport"]) == 1
    assert main(["pipeline", "--out", str(tmp_path), "--set", "amosa.cooling_ratio=2"]) == 1
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_simulate_with_assignment_file(tmp_path):
    assert main(["optimize", "--out", str(tmp_path)] + [a for s in QUICK for a in ("--set", s)]) == 0
    assert main(["simulate", "--out", str(tmp_path), "--policy", "rr", "--assignment",
                 str(tmp_path / "assignment.json"), "--cycles", "1000"]) == 0
    assert main(["simulate", "--out", str(tmp_path), "--policy", "adele", "--assignment",
                 str(tmp_path / "archive.json"), "--strategy", "knee", "--cycles", "1000"]) == 0
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert doc["resolved"]["assignment"] is not None


def test_threshold_sweep(tmp_path):
    spec = ExperimentSpec("sweep", None, str(tmp_path), QUICK + ["pir=0.06"])
    rows = run_sweep(spec, over="adele.threshold", values=[0.0, 0.5, 100.0])
    assert [r["sweep_value"] for r in rows] == [0.0, 0.5, 100.0]
    cfg, tidy = read_csv(tmp_path / "sweep.csv")
    assert {r["metric"] for r in tidy} >= {"avg_latency", "energy_per_flit", "max_elevator_load"}
    assert cfg["assignment"] is not None


def test_rate_sweep_cli(tmp_path):
    assert main(["sweep", "--out", str(tmp_path), "--policy", "cda", "--rates", "0.01,0.05", "--cycles", "3000"]) == 0
    _, tidy = read_csv(tmp_path / "sweep.csv")
    assert {r["sweep_value"] for r in tidy} == {"0.01", "0.05"}
    assert main(["sweep", "--out", str(tmp_path), "--rates", "0.05,0.01"]) == 1


def test_placement_command(tmp_path, capsys):
    assert main(["placement", "--out", str(tmp_path), "--dims", "3", "3", "2", "--elevators", "1"]) == 0
    doc = json.loads((tmp_path / "placement.json").read_text())
    assert doc["elevators"] == [[1, 1]] and doc["config"]["placement"]["dims"] == [3, 3, 2]


def test_format_table():
    text = format_table([{"a": 1.23456, "b": None}, {"a": 10, "b": "x"}], ["a", "b"])
    assert text.splitlines() == ["    a  b", "1.235  -", "   10  x"]
