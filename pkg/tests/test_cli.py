import json
import subprocess
import sys

import numpy as np
import pytest

from sonc.cli import main
from sonc.socrep import ConeProgram
from sonc.solver import solve

MOTZKIN = "x0^4*x1^2 + x0^2*x1^4 - 3*x0^2*x1^2 + 1"
MOTZKIN_CIRCUIT = json.dumps({"vertices": [[0, 0], [4, 2], [2, 4]], "beta": [2, 2]})
BOUND_CASES = [("x0^4 - 2*x0^2", 4, -1.0), (MOTZKIN, 6, 0.0), ("5", 2, 5.0)]


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    doc = json.loads(cap.out) if cap.out.strip().startswith("{") else None
    return code, doc, cap.err


# --- bound / member / export -----------------------------------------------

@pytest.mark.parametrize("poly,deg,expected", BOUND_CASES)
def test_bound_examples(capsys, poly, deg, expected):
    code, doc, err = run(capsys, "bound", poly, "--deg", str(deg))
    assert code == 0
    res = doc["result"]
    assert res["status"] == "optimal"
    assert res["bound"] == pytest.approx(expected, abs=1e-6)
    assert res["support_restricted"] is True
    assert "certificate" in res and "circuits_used" in res
    assert "SONC lower bound" in err


def test_bound_header_echoes_config(capsys):
    _, doc, _ = run(capsys, "bound", "5", "--deg", "2", "--tol", "1e-9")
    hdr = doc["header"]
    assert hdr["tool"] == "sonc" and hdr["command"] == "bound"
    assert hdr["config"]["tol"] == 1e-9
    assert hdr["config"]["poly"] == "5" and hdr["config"]["deg"] == 2


def test_member_motzkin(capsys):
    code, doc, _ = run(capsys, "member", MOTZKIN, "--deg", "6")
    assert code == 0
    (term,) = doc["result"]["certificate"]["circuit_terms"]
    assert term["beta_coeff"] == pytest.approx(-3.0, abs=1e-6)


def test_member_negative_square_exit_2(capsys):
    code, doc, err = run(capsys, "member", "--deg", "2", "--", "-x0^2")
    assert code == 2
    assert doc["result"]["status"] == "infeasible"


def test_member_solver_infeasible_exit_2(capsys):
    code, doc, _ = run(capsys, "member", "x0^4 - x0^2", "--deg", "4")
    assert code == 2 and doc["result"]["status"] == "infeasible"


def test_numerical_exit_3(capsys):
    code, doc, _ = run(capsys, "bound", MOTZKIN, "--deg", "6", "--max-iter", "1")
    assert code == 3
    assert doc["result"]["status"] == "max_iter"


def test_parse_error_exit_1(capsys):
    code, doc, err = run(capsys, "bound", "x0 +\n  x1^^2", "--deg", "2")
    assert code == 1 and doc is None
    assert "line 2" in err and "column 6" in err


def test_odd_degree_is_usage_error(capsys):
    code, _, _ = run(capsys, "bound", "x0^2", "--deg", "3")
    assert code == 1


def test_unknown_flag_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bound", "x0^2", "--bogus"])
    assert info.value.code == 1
    capsys.readouterr()


@pytest.mark.parametrize("poly,deg,expected", BOUND_CASES)
def test_export_round_trip(capsys, poly, deg, expected):
    assert main(["export", poly, "--deg", str(deg)]) == 0
    text = capsys.readouterr().out
    prog = ConeProgram.from_json(text)
    _, doc, _ = run(capsys, "bound", poly, "--deg", str(deg))
    res = solve(prog)
    assert res.status == "optimal"
    assert abs(res.objective - doc["result"]["bound"]) <= 1e-9


def test_bound_export_file(capsys, tmp_path):
    path = tmp_path / "prog.json"
    code, doc, _ = run(capsys, "bound", "x0^4 - 2*x0^2", "--deg", "4", "--export", str(path))
    assert code == 0
    assert solve(ConeProgram.from_json(path.read_text())).objective == pytest.approx(doc["result"]["bound"], abs=1e-9)


# --- determinism and config ---------------------------------------------------

def _strip(doc):
    doc["header"].pop("timestamp")
    return json.dumps(doc, sort_keys=True)


@pytest.mark.parametrize("argv", [
    ["bound", MOTZKIN, "--deg", "6"],
    ["witness", "--n", "2", "--d", "2", "--N", "8", "--seed", "3"],
    ["circuit-check", "--circuit", MOTZKIN_CIRCUIT, "--coeffs", "1,1,1,-3"],
])
def test_deterministic_modulo_timestamp(capsys, argv):
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert _strip(a) == _strip(b)


def test_config_file_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"tol": 1e-7, "max_iter": 1, "deg": 4}))
    code, doc, _ = run(capsys, "bound", "x0^4 - 2*x0^2", "--config", str(cfg))
    assert code == 3  # max_iter from the file
    assert doc["header"]["config"]["tol"] == 1e-7
    code, doc, _ = run(capsys, "bound", "x0^4 - 2*x0^2", "--config", str(cfg), "--max-iter", "100")
    assert code == 0 and doc["header"]["config"]["max_iter"] == 100


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "bound", "5", "--deg", "2", "--config", str(tmp_path / "none.json"))
    assert code == 1 and "config" in err


# --- circuit-check ------------------------------------------------------------

@pytest.mark.parametrize("coeffs,code,verdict", [
    ("1,1,1,-3", 0, "nonnegative (boundary)"),
    ("1,1,1,-3.5", 2, "not nonnegative"),
    ("1,1,1,0", 0, "nonnegative (interior)"),
])
def test_circuit_check(capsys, coeffs, code, verdict):
    got, doc, err = run(capsys, "circuit-check", "--circuit", MOTZKIN_CIRCUIT, "--coeffs", coeffs)
    assert got == code
    assert doc["result"]["verdict"] == verdict
    assert err.startswith(verdict)
    if coeffs == "1,1,1,-3":
        assert "Θ = 3" in err
        assert doc["result"]["theta"] == pytest.approx(3.0, abs=1e-12)


def test_circuit_check_from_file(capsys, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(MOTZKIN_CIRCUIT)
    code, _, _ = run(capsys, "circuit-check", "--circuit", "@" + str(path), "--coeffs", "1,1,1,-3")
    assert code == 0


def test_circuit_check_bad_inputs(capsys):
    assert run(capsys, "circuit-check", "--circuit", MOTZKIN_CIRCUIT, "--coeffs", "1,1")[0] == 1
    assert run(capsys, "circuit-check", "--circuit", "{nope", "--coeffs", "1,1,1,1")[0] == 1
    odd = json.dumps({"vertices": [[0, 0], [3, 2], [2, 4]], "beta": [2, 2]})
    assert run(capsys, "circuit-check", "--circuit", odd, "--coeffs", "1,1,1,1")[0] == 1


# --- certificate checkers -------------------------------------------------------

SQUARE_GRAM = json.dumps({"n": 1, "d": 2, "G": [[1, 0, -1], [0, 0, 0], [-1, 0, 1]]})


def test_gram_verify_ok(capsys):
    code, doc, err = run(capsys, "gram-verify", "x0^4 - 2*x0^2 + 1", "--gram", SQUARE_GRAM)
    assert code == 0 and doc["result"]["verified"]
    (sq,) = doc["result"]["squares"]
    assert sq.replace(" ", "") in {"x0^2-1", "-x0^2+1", "-1+x0^2", "1-x0^2"}


def test_gram_verify_mismatch(capsys):
    code, doc, err = run(capsys, "gram-verify", "x0^4 + 1", "--gram", SQUARE_GRAM)
    assert code == 2
    assert doc["result"]["residual"] == pytest.approx(2.0)
    assert doc["result"]["exponent"] == [2]


def test_gram_verify_not_psd(capsys):
    gram = json.dumps({"n": 1, "d": 1, "G": [[0, 1], [1, 0]]})
    code, doc, _ = run(capsys, "gram-verify", "2*x0", "--gram", gram)
    assert code == 2
    w = np.array(doc["result"]["witness"])
    assert w @ np.array([[0, 1], [1, 0]]) @ w < 0


def test_module_verify(capsys):
    cert = {"nvars": 1, "generators": ["x0"], "sigma": [{"n": 1, "d": 0, "G": [[0]]}, {"n": 1, "d": 0, "G": [[1]]}]}
    assert run(capsys, "module-verify", "x0", "--cert", json.dumps(cert))[0] == 0
    cert["sigma"][1]["G"] = [[2]]
    code, doc, _ = run(capsys, "module-verify", "x0", "--cert", json.dumps(cert))
    assert code == 2 and doc["result"]["residual"] == pytest.approx(1.0)


def test_copositive_verify(capsys):
    eye, zero = json.dumps(np.eye(2).tolist()), json.dumps(np.zeros((2, 2)).tolist())
    assert run(capsys, "copositive-verify", "--M", eye, "--P", eye, "--N", zero)[0] == 0
    M = json.dumps([[1, -2], [-2, 1]])
    code, doc, _ = run(capsys, "copositive-verify", "--M", M, "--P", M, "--N", zero)
    assert code == 2 and doc["result"]["psd"] is False


# --- witness ----------------------------------------------------------------

def test_witness_univariate(capsys):
    code, doc, _ = run(capsys, "witness", "--n", "1", "--d", "2", "--N", "6", "--seed", "42")
    assert code == 0
    res = doc["result"]
    assert res["verdict"] is True and res["members"] == 15
    assert len(res["slack_csv"].strip().split("\n")) == 1 + 15


def test_witness_lines(capsys):
    code, doc, _ = run(capsys, "witness", "--n", "2", "--d", "1", "--N", "5", "--seed", "1")
    assert code == 0 and doc["result"]["verdict"] is True


def test_witness_usage_error(capsys):
    code, _, err = run(capsys, "witness", "--n", "2", "--d", "2", "--N", "3")
    assert code == 1 and "smaller than k" in err


def test_witness_out_dir(capsys, tmp_path):
    code, doc, _ = run(capsys, "witness", "--n", "1", "--d", "2", "--N", "5", "--out", str(tmp_path / "w"))
    assert code == 0
    files = doc["result"]["files"]
    conf = json.loads(open(files["configuration"]).read())
    assert len(conf["points"]) == 5
    assert open(files["slack"]).readline().strip() == "T,s0,s1,s2,s3,s4"


def test_entry_point_subprocess():
    proc = subprocess.run([sys.executable, "-m", "sonc.cli", "bound", "5", "--deg", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["bound"] == pytest.approx(5.0, abs=1e-6)
