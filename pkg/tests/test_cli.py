import csv
import json

import pytest

from stflood.cli import main
from stflood.dqn.io import load_model


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["collect", "--scenario", "free", "--blocks", "20", "--seed", "1", "--out", str(d / "t.jsonl")]) == 0
    assert main(["train", "--trace", str(d / "t.jsonl"), "--iterations", "1500", "--out", str(d / "m.json")]) == 0
    return d


def test_collect_reports_balance(artifacts, capsys):
    assert main(["collect", "--scenario", "free", "--blocks", "3", "--out", str(artifacts / "x.jsonl")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["datapoints"] == 24 and "lossy_fraction" in rep and "scenario_hash" in rep


def test_train_writes_model_and_curve(artifacts):
    assert load_model(artifacts / "m.json").w1.shape == (31, 30)
    lines = (artifacts / "m_curve.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=0") and lines[1] == "step,epsilon,loss,mean_return"


def test_train_checkpoint_resume_matches(artifacts, tmp_path):
    base = ["train", "--trace", str(artifacts / "t.jsonl"), "--iterations", "1200"]
    assert main(base + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(base + ["--out", str(tmp_path / "b.json"), "--checkpoint", str(tmp_path / "ck.pkl"),
                        "--checkpoint-every", "500"]) == 0
    assert main(["train", "--resume", str(tmp_path / "ck.pkl"), "--out", str(tmp_path / "c.json")]) == 0
    a = (tmp_path / "a.json").read_text()
    assert a == (tmp_path / "b.json").read_text() == (tmp_path / "c.json").read_text()


def test_quantize_report(artifacts, tmp_path, capsys):
    out = tmp_path / "q.bin"
    assert main(["quantize", "--model", str(artifacts / "m.json"), "--out", str(out), "--samples", "5000",
                 "--report", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["payload_bytes"] == 2106 and rep["samples"] == 5000
    assert out.stat().st_size == 14 + 2106


def test_eval_outputs_and_determinism(artifacts, tmp_path):
    q = tmp_path / "q.json"
    assert main(["quantize", "--model", str(artifacts / "m.json"), "--out", str(q), "--samples", "10"]) == 0
    args = ["eval", "--scenario", "dynamic", "--controller", "dqn", "--model", str(q), "--rounds", "40", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "rounds.csv").read_bytes()
    assert a == (tmp_path / "b" / "rounds.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0].startswith("# scenario=dynamic scenario_hash=") and "seed=5" in lines[0]
    assert len(lines) == 42
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["rounds"] == 40


def test_eval_static_constant_and_mab_blocks(tmp_path):
    assert main(["eval", "--scenario", "free", "--controller", "static", "--rounds", "15", "--out",
                 str(tmp_path / "s")]) == 0
    rows = list(csv.DictReader((tmp_path / "s" / "rounds.csv").read_text().splitlines()[1:]))
    assert {r["ntx"] for r in rows} == {"3"}
    assert main(["eval", "--scenario", "mab", "--rounds", "30", "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "mab_blocks.csv").read_text().startswith("# scenario=mab")


def test_compare_structure(artifacts, tmp_path):
    out = tmp_path / "c"
    assert main(["compare", "--controllers", "dqn,pid,static", "--model", str(artifacts / "m.json"),
                 "--rounds", "10", "--out", str(out)]) == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0].startswith("# scenario=static-10 scenario_hash=")
    rows = list(csv.DictReader(lines[1:]))
    assert [r["controller"] for r in rows] == ["dqn", "pid", "static"]
    js = json.loads((out / "compare.json").read_text())
    assert [r["controller"] for r in js] == ["dqn", "pid", "static"]
    assert [float(r["avg_radio_on_ms"]) for r in rows] == [r["avg_radio_on_ms"] for r in js]


def test_compare_sweep_eight_rows_per_controller(tmp_path):
    args = ["compare", "--controllers", "pid,static", "--sweep", "--rounds", "8"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    text = (tmp_path / "a" / "compare.csv").read_text()
    assert text == (tmp_path / "b" / "compare.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()[1:]))
    for c in ("pid", "static"):
        duties = [int(r["duty_pct"]) for r in rows if r["controller"] == c]
        assert duties == [0, 5, 10, 15, 20, 25, 30, 35]


@pytest.mark.parametrize("argv", [
    ["eval", "--scenario", "nope", "--out", "{tmp}/x"],
    ["eval", "--controller", "dqn", "--model", "{tmp}/missing.json", "--out", "{tmp}/x"],
    ["eval", "--controller", "dqn", "--out", "{tmp}/x"],
    ["eval", "--rounds", "0", "--out", "{tmp}/x"],
    ["compare", "--controllers", "dqn,magic", "--out", "{tmp}/x"],
    ["train", "--trace", "{tmp}/missing.jsonl", "--out", "{tmp}/m.json"],
    ["collect", "--blocks", "1", "--out", "{tmp}/t.jsonl"],
])
def test_validation_errors_exit_2(tmp_path, argv, capsys):
    assert main([a.replace("{tmp}", str(tmp_path)) for a in argv]) == 2
    assert "error" in capsys.readouterr().err


def test_runtime_error_exits_3(tmp_path):
    bad = tmp_path / "ck.pkl"
    bad.write_bytes(b"not a pickle")
    assert main(["train", "--resume", str(bad), "--out", str(tmp_path / "m.json")]) == 3


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["eval"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", "m.json"])
    assert exc.value.code == 2
