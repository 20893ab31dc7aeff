"""End-to-end command-line checks on a miniature training run."""

import json
import subprocess
import sys

import pytest

from qshield.cli import main
from qshield.config import Config, ConfigError, save_config
from qshield.training import RunManifest

TINY_SETS = [
    "--set", "scenario.episode_timeout=6.0",
    "--set", "train.n_e=2",
    "--set", "train.hidden=[16,16,8]",
    "--set", "train.batch_size=8",
    "--set", "train.buffer_capacity=512",
    "--set", "train.target_sync_period=10",
]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    rc = main(["train", "--out", str(out), "--seed", "13",
               "--total-steps", "120", "--checkpoint-every", "60",
               "--quiet", *TINY_SETS])
    assert rc == 0
    return out


def last_checkpoint(run_dir):
    manifest = RunManifest.load(run_dir / "manifest.json")
    return str(run_dir / manifest.checkpoints[-1]["path"])


def test_train_artifacts(run_dir):
    manifest = RunManifest.load(run_dir / "manifest.json")
    assert manifest.complete and manifest.master_seed == 13
    assert len(manifest.checkpoints) >= 3
    assert manifest.config["train"]["hidden"] == [16, 16, 8]
    for entry in manifest.checkpoints:
        assert (run_dir / entry["path"]).exists()


def test_train_logs_episode_records(tmp_path, capsys):
    rc = main(["train", "--out", str(tmp_path), "--seed", "3",
               "--total-steps", "30", "--checkpoint-every", "30", *TINY_SETS])
    assert rc == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[-1].startswith("wrote ")
    record = json.loads(lines[0])
    assert {"episode", "steps", "terminal", "env_step"} <= set(record)


def test_train_resume(run_dir, tmp_path, capsys):
    ck = last_checkpoint(run_dir)
    env_step = json.loads((run_dir / "manifest.json").read_text()
                          )["checkpoints"][-1]["env_step"]
    rc = main(["train", "--resume", ck, "--out", str(tmp_path),
               "--total-steps", str(env_step + 20),
               "--checkpoint-every", "60", "--quiet"])
    assert rc == 0
    manifest = RunManifest.load(tmp_path / "manifest.json")
    assert manifest.complete
    assert manifest.checkpoints[-1]["env_step"] > env_step


def test_eval_baseline_no_checkpoint(tmp_path, capsys):
    report_path = tmp_path / "report.json"
    rc = main(["eval", "--policy", "baseline", "--seed", "21",
               "--episodes", "2", "--out", str(report_path),
               "--set", "scenario.episode_timeout=6.0"])
    assert rc == 0
    out = capsys.readouterr().out.strip().split("\n")
    assert out[-2].startswith("policy,episodes,")
    assert out[-1].startswith("baseline,2,")
    report = json.loads(report_path.read_text())
    assert report["policy"] == "baseline" and report["episodes"] == 2
    assert report["master_seed"] == 21


def test_eval_gated_with_decision_log(run_dir, tmp_path, capsys):
    log_path = tmp_path / "decisions.jsonl"
    rc = main(["eval", "--policy", "gated", "--checkpoint",
               last_checkpoint(run_dir), "--episodes", "2",
               "--decision-log", str(log_path)])
    assert rc == 0
    row = capsys.readouterr().out.strip().split("\n")[-1]
    assert row.startswith("gated,2,")
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert records and all("p_o" in r and "source" in r for r in records)
    assert {r["episode"] for r in records} == {0, 1}


def test_eval_gate_overrides(run_dir, capsys):
    rc = main(["eval", "--policy", "gated", "--checkpoint",
               last_checkpoint(run_dir), "--episodes", "1",
               "--p-thres", "1.0", "--n-thres", "0"])
    assert rc == 0
    row = capsys.readouterr().out.strip().split("\n")[-1]
    # p_thres = 1 shuts the gate: activation proportion is exactly 0.
    assert float(row.split(",")[-1]) == 0.0


def test_eval_learned_requires_checkpoint():
    with pytest.raises(SystemExit, match="requires --checkpoint"):
        main(["eval", "--policy", "learned", "--episodes", "1"])


def test_eval_config_mismatch_refused(run_dir, tmp_path):
    other = tmp_path / "other.json"
    save_config(Config(), other)    # full-size train section
    with pytest.raises(SystemExit, match="disagrees"):
        main(["eval", "--policy", "gated", "--checkpoint",
              last_checkpoint(run_dir), "--episodes", "1",
              "--config", str(other)])


def test_sweep_csv_output(run_dir, tmp_path, capsys):
    out_csv = tmp_path / "sweep.csv"
    rc = main(["sweep", "--checkpoint", last_checkpoint(run_dir),
               "--parameter", "p_thres", "--values", "0.4,1.0",
               "--episodes", "1", "--out", str(out_csv)])
    assert rc == 0
    lines = out_csv.read_text().strip().split("\n")
    assert lines[0].startswith("p_thres,policy,")
    assert len(lines) == 3
    assert [line.split(",")[0] for line in lines[1:]] == ["0.4", "1.0"]
    assert capsys.readouterr().out.strip().split("\n") == lines


def test_inspect_reports_probes_and_extremes(run_dir, capsys):
    rc = main(["inspect", "--checkpoint", last_checkpoint(run_dir),
               "--probes", "3", "--count-extremes", "2"])
    assert rc == 0
    data = json.loads(capsys.readouterr().out)
    assert set(data) == {"terminal_probes", "most_visited", "least_visited"}
    assert len(data["terminal_probes"]) <= 3
    assert data["most_visited"][0]["count"] >= data["most_visited"][-1]["count"]
    for probe in data["terminal_probes"]:
        assert {"head_q", "sigma", "count", "true_q"} <= set(probe)


def test_replay_trace(run_dir, tmp_path, capsys):
    trace_path = tmp_path / "trace.jsonl"
    rc = main(["replay-trace", "--policy", "gated", "--checkpoint",
               last_checkpoint(run_dir), "--episode", "1",
               "--out", str(trace_path)])
    assert rc == 0
    assert "# terminal=" in capsys.readouterr().err
    rows = [json.loads(line) for line in trace_path.read_text().splitlines()]
    assert rows[0]["step"] == 0
    assert rows[-1]["terminal"] != "none"
    assert all({"state", "action", "reward"} <= set(r) for r in rows)


def test_bad_override_rejected(tmp_path):
    with pytest.raises(ConfigError, match="section.key=value"):
        main(["train", "--out", str(tmp_path), "--total-steps", "0",
              "--set", "nodotequals"])
    with pytest.raises(ConfigError, match="unknown config sections"):
        main(["train", "--out", str(tmp_path), "--total-steps", "0",
              "--set", "nosuch.key=1"])


def test_argparse_errors_exit_nonzero(capsys):
    with pytest.raises(SystemExit):
        main(["eval"])           # missing required --policy
    with pytest.raises(SystemExit):
        main(["no-such-command"])
    capsys.readouterr()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qshield", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "train" in proc.stdout and "replay-trace" in proc.stdout
