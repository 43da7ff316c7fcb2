import json

import numpy as np
import pytest
from click.testing import CliRunner

import oracles
from quasitau.blockmat import load_block_matrix
from quasitau.cli import main


@pytest.fixture
def run(tmp_path):
    runner = CliRunner()

    def invoke(*args, config=None):
        argv = list(args)
        if config is not None:
            path = tmp_path / "run.yaml"
            path.write_text(config)
            argv += ["--config", str(path)]
        return runner.invoke(main, argv, catch_exceptions=False)

    return invoke


def test_verify_passes_and_writes_a_sorted_report(run, tmp_path):
    out = tmp_path / "r"
    result = run("verify", "--suite", "three-term,orthogonality", "--level", "4", "--out", str(out),
                 config="dimension: 2\n")
    assert result.exit_code == 0, result.output
    doc = json.loads((out / "report.json").read_text())
    assert doc["schema_version"] == 1 and doc["suites"] == ["orthogonality", "three-term"]
    keys = [(r["suite"], r["identity"]) for r in doc["rows"]]
    assert keys == sorted(keys) and all(r["pass"] for r in doc["rows"])
    assert set(doc["rows"][0]) == {"suite", "identity", "paper_anchor", "levels", "residual", "tolerance",
                                   "pass", "millis"}
    assert "checks passed" in result.output


def test_reports_are_byte_identical(run, tmp_path):
    texts = []
    for name in ("a", "b"):
        out = tmp_path / name
        run("verify", "--suite", "cd,symmetry", "--level", "4", "--seed", "9", "--out", str(out),
            config="dimension: 2\n")
        texts.append((out / "report.json").read_bytes())
    assert texts[0] == texts[1]


def test_tight_tolerance_fails_with_status_one(run, tmp_path):
    result = run("verify", "--suite", "lax", "--level", "4", "--tolerance-scale", "1e-9",
                 "--out", str(tmp_path / "r"), config="dimension: 1\n")
    assert result.exit_code == 1
    assert "FAIL" in result.output


def test_config_errors_exit_two(run, tmp_path):
    result = run("verify", "--out", str(tmp_path / "r"), config="dimension: 2\nflow:\n  offsets: [0, -3]\n")
    assert result.exit_code == 2
    assert "run.yaml:3: field 'flow.offsets[0]'" in result.output
    assert run("verify", "--suite", "nonsense", "--out", str(tmp_path / "r")).exit_code == 2
    assert run("verify", "--level", "1", "--out", str(tmp_path / "r")).exit_code == 2
    assert run("verify", "--tolerance-scale", "0", "--out", str(tmp_path / "r")).exit_code == 2


def test_singular_truncation_exits_three(run, tmp_path):
    # two nodes per axis cannot support five independent levels
    args = ("--quad-order", "2", "--level", "5", "--out", str(tmp_path / "r"))
    assert run("compute", *args, config="dimension: 1\n").exit_code == 3
    result = run("verify", "--suite", "orthogonality", *args, config="dimension: 1\n")
    assert result.exit_code == 3
    doc = json.loads((tmp_path / "r" / "report.json").read_text())
    assert doc["rows"][0]["identity"].startswith("suite error: SingularTruncation")


def test_compute_dumps_legendre_norms(run, tmp_path):
    out = tmp_path / "c"
    result = run("compute", "--level", "5", "--out", str(out), config="dimension: 1\n")
    assert result.exit_code == 0, result.output
    index = json.loads((out / "index.json").read_text())
    assert [h[0][0] for h in index["H_blocks"]] == pytest.approx([float(h) for h in oracles.LEGENDRE_H], rel=1e-12)
    dim, H = load_block_matrix((out / "H.txt").read_text())
    assert dim == 1 and np.allclose(np.diag(H.data), [float(h) for h in oracles.LEGENDRE_H], rtol=1e-12)
    assert {"H", "beta", "S", "J0"} == set(index["files"])


def test_compute_beta_vanishes_on_a_symmetric_square(run, tmp_path):
    out = tmp_path / "c"
    run("compute", "--level", "4", "--out", str(out), config="dimension: 2\n")
    _, beta = load_block_matrix((out / "beta.txt").read_text())
    assert np.allclose(beta.block(1, 0), 0.0, atol=1e-14)
    assert (out / "J1.txt").exists()


def test_convergence_slopes(run, tmp_path):
    out = tmp_path / "v"
    result = run("convergence", "--suite", "toda", "--level", "4", "--steps", "0.08,0.04,0.02",
                 "--out", str(out), config="dimension: 2\n")
    assert result.exit_code == 0, result.output
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == "suite,identity,h,residual" and len(lines) == 4
    residuals = [float(line.rsplit(",", 1)[1]) for line in lines[1:]]
    slope = np.polyfit(np.log([0.08, 0.04, 0.02]), np.log(residuals), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


def test_empty_sweep_is_a_usage_error(run, tmp_path):
    assert run("convergence", "--steps", "", "--out", str(tmp_path / "v")).exit_code == 2
    assert run("convergence", "--steps", "1e-3,-1", "--out", str(tmp_path / "v")).exit_code == 2


def test_version(run):
    result = run("--version")
    assert result.exit_code == 0 and "0.1.0" in result.output
