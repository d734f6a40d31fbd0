"""End-to-end tests of the command-line interface."""

import json
import subprocess
import sys

from helpers import FIXTURES

GOOD = str(FIXTURES / "three_state_chain.json")
BAD = str(FIXTURES / "negative_control.json")


def run_cli(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "smreduce.cli", *args],
                          capture_output=True, text=True)


class TestValidate:
    def test_good_model(self):
        proc = run_cli("validate", GOOD)
        assert proc.returncode == 0
        assert "overall: pass" in proc.stdout

    def test_bad_model_exits_one(self):
        proc = run_cli("validate", BAD)
        assert proc.returncode == 1
        assert "FAIL" in proc.stdout

    def test_json_format(self):
        proc = run_cli("validate", GOOD, "--format", "json")
        doc = json.loads(proc.stdout)
        assert doc["all_ok"] is True


class TestReduce:
    def test_summary(self):
        proc = run_cli("reduce", GOOD)
        assert proc.returncode == 0
        assert "exclusion order: 1" in proc.stdout
        assert "final exterior state: 2" in proc.stdout

    def test_full_trace_json(self):
        proc = run_cli("reduce", GOOD, "--format", "json", "--trace")
        doc = json.loads(proc.stdout)
        assert doc["order"] == ["1", "2"]
        assert "p" in doc["steps"][0]["after_removal"]


class TestHittingAndExpect:
    def test_hitting_pretty_forms(self):
        proc = run_cli("hitting", GOOD)
        assert proc.returncode == 0
        assert "1/(1+s)" in proc.stdout

    def test_expect_reports_moment_match(self):
        proc = run_cli("expect", GOOD, "--format", "json")
        doc = json.loads(proc.stdout)
        entry = doc["entries"]["2->3"]
        assert entry["bar_E"] == "1"
        assert entry["moment_match"] is True
        assert doc["entries"]["1->3"]["E_check"] == "3/2"


class TestSimulate:
    def test_deterministic_output(self):
        args = ("simulate", GOOD, "--samples", "10", "--seed", "3", "--eps", "1e-2")
        a, b = run_cli(*args), run_cli(*args)
        assert a.returncode == 0
        assert a.stdout == b.stdout

    def test_csv_export(self, tmp_path):
        out = tmp_path / "samples.csv"
        proc = run_cli("simulate", GOOD, "--samples", "5", "--seed", "1",
                       "--csv", str(out))
        assert proc.returncode == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "tau,entry_state"
        assert len(lines) == 6


class TestVerify:
    def test_good_model_passes(self):
        proc = run_cli("verify", GOOD)
        assert proc.returncode == 0
        assert "psi[2->3] = 1/(1+s)" in proc.stdout
        assert "verification PASSED" in proc.stdout

    def test_negative_control_fails_validation(self):
        proc = run_cli("verify", BAD)
        assert proc.returncode != 0

    def test_negative_control_fails_convergence(self):
        proc = run_cli("verify", BAD, "--skip-validate")
        assert proc.returncode != 0
        assert "verification FAILED" in proc.stdout

    def test_json_golden_stability(self):
        args = ("verify", GOOD, "--format", "json")
        a, b = run_cli(*args), run_cli(*args)
        assert a.stdout == b.stdout
        doc = json.loads(a.stdout)
        assert doc["passed"] is True


class TestErrors:
    def test_missing_file_exits_three(self):
        proc = run_cli("validate", "no_such_model.json")
        assert proc.returncode == 3

    def test_schema_error_names_key(self, tmp_path):
        doc = json.loads((FIXTURES / "three_state_chain.json").read_text())
        del doc["domain_D"]
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(doc))
        proc = run_cli("validate", str(path))
        assert proc.returncode == 1
        assert "domain_D" in proc.stderr
