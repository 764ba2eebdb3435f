import json

import pytest

from jordanctl.cli import main


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_controllable(capsys):
    code, out, _ = _run(capsys, ["check", "--n", "2", "--d", "1", "--alpha", "2", "--kmax", "20"])
    assert code == 0
    assert json.loads(out)["result"]["outcome"] == "Controllable"


def test_check_vanishing_bdv_exit_code(capsys):
    code, out, _ = _run(capsys, ["check", "--n", "3", "--d", "1", "--alpha", "-1", "--kmax", "10"])
    assert code == 2
    wit = json.loads(out)["result"]["witness"]
    assert any(w.get("j") == 1 and w.get("k") == 1 for w in wit)


def test_invalid_dimension_exit_one(capsys):
    code, _, err = _run(capsys, ["check", "--n", "0", "--alpha", "1"])
    assert code == 1 and "error" in err


def test_bad_argument_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["check", "--n", "two"])
    assert exc.value.code == 1


def test_synthesize_then_simulate(tmp_path, capsys):
    syn = tmp_path / "syn.json"
    code, _, _ = _run(capsys, ["synthesize", "--n", "2", "--d", "1", "--alpha", "2", "--T", "0.5",
                               "--K", "6", "--y0", "random:6:1", "--out", str(syn)])
    assert code == 0
    rec = json.loads(syn.read_text())
    prov = rec["provenance"]
    assert prov["command"] == "synthesize" and prov["config"]["K"] == 6
    # numbers are carried as decimal strings
    term = rec["result"]["control"]
    assert isinstance(rec["result"]["moment_residual_abs"], str)
    assert term
    code, out, _ = _run(capsys, ["simulate", "--params", str(syn), "--y0", str(syn),
                                 "--control", str(syn), "--kmax", "6", "--steps", "2"])
    assert code == 0
    summ = json.loads(out)["result"]["summary"]
    assert float(summ["max_abs_terminal_controlled"]) <= 1e-8


def test_repeated_runs_byte_identical(tmp_path, capsys):
    outs = []
    path = tmp_path / "spec.json"
    for _ in range(2):
        assert main(["spectrum", "--n", "3", "--alpha", "2", "--kmax", "4", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_spectrum_strings(capsys):
    code, out, _ = _run(capsys, ["spectrum", "--n", "2", "--alpha", "1", "--kmax", "2",
                                 "--precision", "30"])
    pairs = json.loads(out)["result"]["pairs"]
    assert code == 0 and len(pairs) == 4
    assert all(isinstance(p["lambda_re"], str) for p in pairs)
    assert {float(p["lambda_re"]) for p in pairs if p["k"] == 1} == {0.0, 2.0}


def test_biortho_from_text_file(tmp_path, capsys):
    lam = tmp_path / "lam.txt"
    lam.write_text("1\n4\n9\n")
    code, out, _ = _run(capsys, ["biortho", "--lambda-file", str(lam), "--T", "1",
                                 "--precision", "80"])
    assert code == 0
    assert "result" in json.loads(out)


def test_resolve_symbolic(capsys):
    code, out, _ = _run(capsys, ["resolve", "symbolic"])
    res = json.loads(out)["result"]
    assert code == 0
    assert all(res["chain_identities"]) and res["Mstar_Lstar_identity"] and res["L_M_identity"]
