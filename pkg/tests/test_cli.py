"""End-to-end command-line behavior, driven through main(argv)."""
import json

import pytest

from regionbound.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main

SCENARIOS = (
    "scenarios/logical_clocks_drift.json",
    "scenarios/mutex_fault_recovery.json",
    "scenarios/consensus_clean.json",
    "scenarios/diffusing_ring_faults.json",
)


@pytest.fixture()
def run_cli(capsys):
    def go(*argv):
        code = main(list(argv))
        out = capsys.readouterr()
        return code, out.out, out.err
    return go


@pytest.mark.parametrize("path", SCENARIOS)
def test_check_passes_what_run_produced(run_cli, tmp_path, path):
    out = tmp_path / "t.jsonl"
    code, stdout, _ = run_cli("run", "--scenario", path, "--out", str(out))
    assert code == EXIT_OK
    assert stdout.startswith("scenario: protocol=")
    assert f"wrote {out}" in stdout
    code, stdout, _ = run_cli("check", "--trace", str(out),
                              "--scenario", path)
    assert code == EXIT_OK, stdout
    assert "checks passed" in stdout.splitlines()[-1]
    assert all(not line.startswith("FAIL") for line in stdout.splitlines())


def test_run_honors_seed_override(run_cli, tmp_path):
    a, b, c = (tmp_path / name for name in ("a.jsonl", "b.jsonl", "c.jsonl"))
    path = "scenarios/consensus_clean.json"
    run_cli("run", "--scenario", path, "--out", str(a))
    run_cli("run", "--scenario", path, "--out", str(b), "--seed", "515")
    run_cli("run", "--scenario", path, "--out", str(c), "--seed", "99")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_check_rejects_a_mismatched_pair(run_cli, tmp_path):
    out = tmp_path / "t.jsonl"
    run_cli("run", "--scenario", SCENARIOS[0], "--out", str(out))
    code, _, err = run_cli("check", "--trace", str(out),
                           "--scenario", SCENARIOS[2])
    assert code == EXIT_CONFIG
    assert "does not match" in err


def test_check_fails_a_doctored_trace(run_cli, tmp_path):
    out = tmp_path / "t.jsonl"
    path = "scenarios/consensus_clean.json"
    run_cli("run", "--scenario", path, "--out", str(out))
    lines = out.read_text(encoding="utf-8").splitlines(keepends=True)
    for i, line in enumerate(lines):
        rec = json.loads(line)
        if rec["rec"] == "event" and rec["data"]["ev"] == "wfree":
            rec["data"]["residue"] += 1
            lines[i] = json.dumps(rec) + "\n"
            break
    else:
        pytest.fail("trace has no free-counter writes to doctor")
    out.write_text("".join(lines), encoding="utf-8")
    code, stdout, _ = run_cli("check", "--trace", str(out),
                              "--scenario", path)
    assert code == EXIT_FAIL
    assert "FAIL closure-replay" in stdout


def test_missing_files_are_config_errors(run_cli, tmp_path):
    code, _, err = run_cli("run", "--scenario", "scenarios/ghost.json",
                           "--out", str(tmp_path / "t.jsonl"))
    assert code == EXIT_CONFIG
    code, _, err = run_cli("check", "--trace", str(tmp_path / "ghost.jsonl"),
                           "--scenario", SCENARIOS[0])
    assert code == EXIT_CONFIG
    assert "cannot read trace" in err


def test_bad_scenario_field_is_a_config_error(run_cli, tmp_path):
    doc = json.loads(open(SCENARIOS[0], encoding="utf-8").read())
    doc["colour"] = "blue"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc), encoding="utf-8")
    code, _, err = run_cli("run", "--scenario", str(bad),
                           "--out", str(tmp_path / "t.jsonl"))
    assert code == EXIT_CONFIG
    assert "colour" in err


def test_bits_golden_lines(run_cli):
    code, stdout, _ = run_cli("bits", "--maxinc", "10", "--maxr", "5")
    assert code == EXIT_OK
    assert stdout == "maxbound=780 bits=10\n"
    code, stdout, _ = run_cli("bits", "--maxinc", "1", "--maxr", "0")
    assert stdout == "maxbound=33 bits=6\n"


def test_sweep_writes_the_grid(run_cli, tmp_path):
    out = tmp_path / "sweep.csv"
    code, stdout, _ = run_cli("sweep", "--grid", "scenarios/sweep_grid.json",
                              "--out", str(out))
    assert code == EXIT_OK
    assert "9 rows" in stdout
    lines = out.read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 10
    assert lines[0].startswith("rs,delay,rate,")


def test_sweep_to_stdout_and_grid_validation(run_cli, tmp_path):
    code, stdout, _ = run_cli("sweep", "--grid",
                              "scenarios/sweep_grid.json")
    assert code == EXIT_OK
    assert len(stdout.strip().splitlines()) == 10
    bad = tmp_path / "grid.json"
    bad.write_text(json.dumps({"rs": 100, "delays": [1]}), encoding="utf-8")
    code, _, err = run_cli("sweep", "--grid", str(bad))
    assert code == EXIT_CONFIG
    assert "rates" in err
