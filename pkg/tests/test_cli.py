import json
import subprocess
import sys

import pytest

from adaptive_pipelines.cli import main
from adaptive_pipelines.lifecycle import EXIT
from adaptive_pipelines.registry import Registry
from adaptive_pipelines.scenario import ScenarioSpec, write_scenario

RENAME = [{"kind": "rename", "old": "Fixation-X", "new": "Fixation-Screen-X"},
          {"kind": "rename", "old": "Fixation-Y", "new": "Fixation-Screen-Y"}]
BACK = [{"kind": "rename", "old": "Fixation-Screen-X", "new": "Fixation-X"},
        {"kind": "rename", "old": "Fixation-Screen-Y", "new": "Fixation-Y"}]
SHIFT = [{"kind": "semantic-shift", "property": p, "scale": 1.5} for p in ("Fixation-X", "Fixation-Y")]


@pytest.fixture
def data(tmp_path):
    """Batches: 1 base, 2 clean, 3 renamed, 4 renamed back, 5 shifted."""
    spec = ScenarioSpec(rows=400, seed=8, batches=5, changes={3: RENAME, 4: BACK, 5: SHIFT})
    write_scenario(spec, tmp_path / "data")
    return tmp_path / "data"


def cli(*args):
    return main([str(a) for a in args])


def started(tmp_path, data):
    root = tmp_path / "reg"
    assert cli("--root", root, "--config", data / "config.json", "init", "eye", data / "batch_001.csv") == 0
    assert cli("--root", root, "optimize", "eye") == 0
    return root


def test_lifecycle_exit_codes(tmp_path, data, capsys):
    root = started(tmp_path, data)
    p = Registry(root).project("eye")
    assert cli("--root", root, "process", "eye", data / "batch_002.csv") == EXIT["clean"]
    assert p.versions() == [1]
    assert cli("--root", root, "process", "eye", data / "batch_003.csv") == EXIT["adapted"]
    assert p.versions() == [1, 2]
    ppd = p.get("pipeline", 2, "ppd")
    assert ppd["entries"] and {e["kind"] for e in ppd["entries"]} == {"target-rebound"}
    # batch 4 has batch 1's schema again: pipeline v1 is reused, no new version is written
    assert cli("--root", root, "process", "eye", data / "batch_004.csv") == EXIT["reused"]
    assert p.versions() == [1, 2]
    assert p.get("batch", 4, "meta")["pipeline_version"] == 1
    assert cli("--root", root, "process", "eye", data / "batch_005.csv") == EXIT["adapted"]
    capsys.readouterr()
    assert cli("--root", root, "--format", "json", "report", "eye") == 0
    doc = json.loads(capsys.readouterr().out)
    assert [b["status"] for b in doc["batches"]] == ["initialized", "clean", "adapted", "reused", "adapted"]
    assert [v["parent"] for v in doc["versions"]] == [None, 1, 1]


def test_no_adapt_never_writes_a_version(tmp_path, data):
    root = started(tmp_path, data)
    p = Registry(root).project("eye")
    # an injected violation in batch 2 lies beyond batch 1's range assertion, which counts as a change
    assert cli("--root", root, "process", "--no-adapt", "eye", data / "batch_002.csv") == EXIT["changed"]
    assert cli("--root", root, "process", "--no-adapt", "eye", data / "batch_003.csv") == EXIT["failed"]
    assert p.versions() == [1]
    assert p.get("batch", 3, "run")["functional"] is False


def test_no_adapt_on_shift_reports_change(tmp_path):
    spec = ScenarioSpec(rows=400, seed=8, batches=2, changes={2: SHIFT})
    write_scenario(spec, tmp_path / "data")
    root = started(tmp_path, tmp_path / "data")
    assert cli("--root", root, "process", "--no-adapt", "eye", tmp_path / "data" / "batch_002.csv") == EXIT["changed"]
    assert Registry(root).project("eye").versions() == [1]


def test_report_batch_json_is_verbatim(tmp_path, data, capsys):
    root = started(tmp_path, data)
    cli("--root", root, "process", "eye", data / "batch_003.csv")
    capsys.readouterr()
    assert cli("--root", root, "report", "eye", "--batch", 2, "--format", "json") == 0
    out = capsys.readouterr().out
    stored = Registry(root).project("eye").get_bytes("batch", 2, "changereport")
    assert out.rstrip("\n").encode() == stored


def test_report_property_series(tmp_path, data, capsys):
    root = started(tmp_path, data)
    cli("--root", root, "process", "eye", data / "batch_002.csv")
    capsys.readouterr()
    assert cli("--root", root, "report", "eye", "--property", "Fixation-X") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["batch", "mean", "std"] and len(lines) == 3


def test_unknown_batch(tmp_path, data, capsys):
    root = started(tmp_path, data)
    assert cli("--root", root, "report", "eye", "--batch", 9) == EXIT["unknown-batch"]
    assert "batch 9" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert cli("--root", tmp_path, "init", "eye", tmp_path / "nope.csv") == EXIT["file-not-found"]
    assert "file not found" in capsys.readouterr().err
    assert not (tmp_path / "eye").exists()


def test_malformed_csv_names_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,4,5\n")
    assert cli("--root", tmp_path, "init", "p", bad) == EXIT["parse-error"]
    assert "line 3" in capsys.readouterr().err


def test_empty_slot(tmp_path, data, capsys):
    cfg = json.loads((data / "config.json").read_text())
    cfg["optimizer"] = {"rules": [{"id": "no-interval-repair",
                                   "algorithms": ["clamp_to_bounds", "replace_with_constant", "set_to_missing"]}]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    root = tmp_path / "reg"
    assert cli("--root", root, "--config", tmp_path / "cfg.json", "init", "eye", data / "batch_001.csv") == 0
    capsys.readouterr()
    assert cli("--root", root, "--format", "json", "optimize", "eye") == EXIT["empty-slot"]
    doc = json.loads(capsys.readouterr().out)
    assert doc["code"] == 4 and any("no-interval-repair" in r for r in doc["reasons"])


def test_invalid_inputs(tmp_path, data, capsys):
    root = started(tmp_path, data)
    assert cli("--root", root, "init", "eye", data / "batch_001.csv") == EXIT["invalid-input"]
    assert cli("--root", root, "optimize", "eye") == EXIT["invalid-input"]
    (tmp_path / "bad.json").write_text("{")
    assert cli("--root", root, "--config", tmp_path / "bad.json", "init", "x", data / "batch_001.csv") == 6
    (tmp_path / "cfg.json").write_text(json.dumps({"adaptation": {"tau": "x"}}))
    capsys.readouterr()
    assert cli("--root", root, "--config", tmp_path / "cfg.json", "init", "y", data / "batch_001.csv") == 6
    assert "$.adaptation.tau" in capsys.readouterr().err


def test_process_before_optimize(tmp_path, data):
    root = tmp_path / "reg"
    cli("--root", root, "init", "eye", data / "batch_001.csv")
    assert cli("--root", root, "process", "eye", data / "batch_002.csv") == EXIT["error"]


@pytest.mark.parametrize("argv", [[], ["bogus"], ["init", "only-project"], ["report", "p", "--batch", "x"],
                                  ["--format", "xml", "report", "p"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT["usage"]


def test_scenario_command(tmp_path, capsys):
    (tmp_path / "spec.json").write_text(json.dumps({"rows": 20}))
    assert cli("scenario", tmp_path / "spec.json", tmp_path / "a", "--seed", 3) == 0
    assert cli("--seed", 3, "scenario", tmp_path / "spec.json", tmp_path / "b") == 0
    assert (tmp_path / "a" / "batch_001.csv").read_bytes() == (tmp_path / "b" / "batch_001.csv").read_bytes()


def test_module_entry_point(tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps({"rows": 10}))
    done = subprocess.run([sys.executable, "-m", "adaptive_pipelines", "--format", "json", "scenario",
                           str(tmp_path / "spec.json"), str(tmp_path / "out")], capture_output=True, text=True)
    assert done.returncode == 0
    assert json.loads(done.stdout)["status"] == "ok"
