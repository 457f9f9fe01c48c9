import csv
import json
import math
from importlib import resources

import pytest

from ergocert.cli import atomic_write, run

FIXTURES = resources.files("ergocert").joinpath("fixtures")


def fixture(name):
    return str(FIXTURES.joinpath(name))


def invoke(capsys, *argv):
    code = run(list(argv))
    return code, capsys.readouterr().out


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ergocert ")
    return list(csv.DictReader(lines[1:]))


def test_verify_two_state_family(tmp_path, capsys):
    code, _ = invoke(capsys, "verify", "--input", fixture("two_state_family.json"), "--out", str(tmp_path),
                     "--n-max", "60", "--seed", "3")
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["seed"] == 3
    assert len(summary["checks"]) == 6
    files = sorted(tmp_path.glob("deviation_chain*_x*.csv"))
    assert len(files) == 6
    for f in files:
        assert "seed=3" in f.read_text().splitlines()[0]
        rows = read_csv(f)
        assert [int(r["n"]) for r in rows] == list(range(61))
        # slack is astronomically large and printed as text when outside double range
        assert all(not r["slack"].startswith("-") for r in rows)
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["seed"] == 3 and "ledger" in cert


def test_bad_row_sum_exits_2_and_names_the_row(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"chains": [[[0.5, 0.5], [0.5, 0.4]]]}))
    code, out = invoke(capsys, "verify", "--input", str(bad), "--out", str(tmp_path / "o"))
    assert code == 2
    err = json.loads(out)
    assert err["status"] == "invalid_input"
    assert "[1]" in err["message"] and "chain 0" in err["message"]


@pytest.mark.parametrize("argv", [
    ["verify", "--input", "/nonexistent/file.json"],
    ["renewal"],
    ["frobnicate", "--input", "x"],
    ["renewal", "--input", "{pmf}", "--r-grid", "a,b"],
])
def test_invalid_inputs_exit_2(argv, tmp_path, capsys):
    argv = [fixture("geometric_q0.5.txt") if a == "{pmf}" else a for a in argv]
    code, out = invoke(capsys, *argv, "--out", str(tmp_path))
    assert code == 2
    assert json.loads(out.strip().splitlines()[-1])["status"] == "invalid_input"


def test_renewal_geometric_half(tmp_path, capsys):
    code, _ = invoke(capsys, "renewal", "--input", fixture("geometric_q0.5.txt"), "--out", str(tmp_path),
                     "--seed", "11")
    assert code == 0
    rows = read_csv(tmp_path / "renewal.csv")
    assert float(rows[0]["u"]) == 1.0
    assert all(float(r["u"]) == 0.5 for r in rows[1:])
    assert all(r["dominated"] == "true" for r in rows)
    # consecutive bounds differ by exactly e^{-kappa}
    ledger = json.loads((tmp_path / "renewal_ledger.json").read_text())
    kappa = next(e for e in ledger["ledger"] if e["name"] == "kappa")["value"]
    bounds = [float(r["bound"]) for r in rows]
    assert all(b >= 0 for b in bounds)
    for b0, b1 in zip(bounds[:-1], bounds[1:]):
        assert b1 == pytest.approx(b0 * math.exp(-kappa), rel=1e-12)
    assert ledger["seed"] == 11 and ledger["violations"] == 0


def test_renewal_bounded_support_is_a_check_failure(tmp_path, capsys):
    code, out = invoke(capsys, "renewal", "--input", fixture("uniform_1_3.txt"), "--out", str(tmp_path))
    assert code == 1
    assert json.loads(out)["status"] == "check_failed"
    # u(n) is still emitted
    rows = read_csv(tmp_path / "renewal.csv")
    assert float(rows[1]["u"]) == pytest.approx(1 / 3, abs=1e-15)


def test_json_format(tmp_path, capsys):
    code, _ = invoke(capsys, "renewal", "--input", fixture("geometric_q0.3.txt"), "--out", str(tmp_path),
                     "--format", "json", "--n-max", "10", "--r-grid", "0.1")
    assert code == 0
    obj = json.loads((tmp_path / "renewal.json").read_text())
    assert obj["columns"] == ["n", "u", "abs_dev", "bound", "dominated"]
    assert len(obj["rows"]) == 11 and obj["seed"] == 0
    assert obj["rows"][3][1] == pytest.approx(0.3, abs=1e-15)


def test_certify_chain_from_params(tmp_path, capsys):
    params = tmp_path / "params.json"
    params.write_text(json.dumps({"rho": 0.5, "D": 0.5, "V_star": 1.0, "delta": 0.35}))
    code, _ = invoke(capsys, "certify-chain", "--input", str(params), "--out", str(tmp_path))
    assert code == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert list(cert)[:3] == ["seed", "kappa", "R"]


def test_certify_diffusion_ou(tmp_path, capsys):
    code, _ = invoke(capsys, "certify-diffusion", "--input", fixture("ou.json"), "--out", str(tmp_path))
    assert code == 0
    lyap = json.loads((tmp_path / "lyapunov.json").read_text())
    assert lyap["gamma"] == 0.25 and lyap["x_star"] == 4.0 and lyap["grid_violations"] == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["lyapunov"]["passed"]


def test_simulate_outputs(tmp_path, capsys):
    code, _ = invoke(capsys, "simulate", "--input", fixture("two_state_family.json"), "--out", str(tmp_path),
                     "--n-max", "20", "--seed", "5")
    assert code == 0
    rows = read_csv(tmp_path / "paths.csv")
    assert len(rows) == 3 * 21 and {r["state"] for r in rows} <= {"0", "1"}
    code, _ = invoke(capsys, "simulate", "--input", fixture("ou.json"), "--out", str(tmp_path),
                     "--n-paths", "4", "--t-end", "2", "--dt", "0.01", "--x0", "2")
    assert code == 0
    rows = read_csv(tmp_path / "skeleton.csv")
    assert len(rows) == 4 * 3 and float(rows[0]["y"]) == 2.0
    code, _ = invoke(capsys, "simulate", "--input", fixture("geometric_q0.5.txt"), "--out", str(tmp_path),
                     "--n-paths", "1000", "--r-grid", "0.2")
    assert code == 0
    est = json.loads((tmp_path / "coupling.json").read_text())
    assert est["seed"] == 0 and est["n_paths"] == 1000


@pytest.mark.parametrize("argv", [
    ["verify", "--input", fixture("two_state_family_vc.json"), "--n-max", "40"],
    ["simulate", "--input", fixture("ou.json"), "--n-paths", "50", "--t-end", "3", "--dt", "0.01"],
    ["simulate", "--input", fixture("geometric_q0.3.txt"), "--n-paths", "2000", "--r-grid", "0.1"],
    ["renewal", "--input", fixture("geometric_q0.3.txt")],
])
def test_reruns_are_byte_identical(argv, tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert invoke(capsys, *argv, "--out", str(d), "--seed", "42")[0] == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    assert all(b"42" in data for data in outs[0].values())


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "a.txt"
    atomic_write(target, "one\n")
    atomic_write(target, "two\n")
    assert target.read_text() == "two\n"
    assert [p.name for p in target.parent.iterdir()] == ["a.txt"]
