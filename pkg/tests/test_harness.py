import csv
import io
import math

import numpy as np
import pytest

from biot_hho.cli import main
from biot_hho.harness import (
    CSV_HEADER,
    ConvergenceReport,
    ErrorAccumulator,
    StudyRow,
    emit_csv,
    evaluate_errors,
    expected_dofs,
    report_csv_text,
    run_convergence_study,
)
from biot_hho.manufactured import biot_benchmark
from biot_hho.mesh import build_trapezoidal_mesh, classify_boundary
from biot_hho.solver import BiotConfig, BiotOperators, interpolate_state


def test_expected_dofs_examples():
    assert expected_dofs("hho-dg", 1, 4) == 208
    assert expected_dofs("hho-hho", 1, 4) == 240
    assert expected_dofs("hho-dg", 1, 8) == 768
    assert expected_dofs("hho-hho", 0, 2) == 2 * 12 + 2 * 4 + 12


def test_interpolate_has_zero_error():
    cfg = BiotConfig(k=1, tau=0.1)
    mesh = classify_boundary(build_trapezoidal_mesh(2, 0.1))
    ops = BiotOperators(cfg, mesh)
    acc = ErrorAccumulator(biot_benchmark(), cfg.tau)
    acc._setup(ops)
    x = interpolate_state(ops, biot_benchmark(), 0.37)
    assert np.abs(acc.local_errors(x, 0.37)).max() < 1e-24


def test_smoke_study_two_steps():
    rep = run_convergence_study("hho-hho", 1, [2, 4], BiotConfig(tau=0.01), steps=2)
    assert [r.n for r in rep.rows] == [2, 4]
    assert [r.dofs for r in rep.rows] == [expected_dofs("hho-hho", 1, n) for n in (2, 4)]
    for r in rep.rows:
        assert all(math.isfinite(e) and e > 0 for e in (r.err_strain, r.err_l2u, r.err_p))
    assert rep.eocs("strain")[0] is None


def test_empty_report_csv_is_header_only(tmp_path):
    text = emit_csv(ConvergenceReport(), tmp_path / "e.csv")
    assert text == ",".join(CSV_HEADER) + "\n"
    assert (tmp_path / "e.csv").read_text() == text


def test_single_row_csv_and_eoc_arithmetic():
    rep = ConvergenceReport(rows=[StudyRow("hho-dg", 1, 4, 208, 999, 0.1, 0.02, 0.4, 1.234)])
    rows = list(csv.DictReader(io.StringIO(report_csv_text(rep))))
    assert len(rows) == 1 and rows[0]["eoc_strain"] == "" and rows[0]["wall_s"] == "1.23"
    rep.rows.append(StudyRow("hho-dg", 1, 8, 768, 999, 0.025, 0.0025, 0.1))
    assert rep.eocs("strain")[1] == pytest.approx(2.0)
    assert rep.eocs("l2u")[1] == pytest.approx(3.0)
    rows = list(csv.DictReader(io.StringIO(report_csv_text(rep, timing=False))))
    assert rows[1]["eoc_p"] == "2.0000" and rows[1]["wall_s"] == ""
    assert rows[1]["err_strain"] == "2.500e-02"


def test_csv_is_deterministic():
    cfg = BiotConfig(tau=0.05)
    a = report_csv_text(run_convergence_study("hho-dg", 1, [2], cfg, steps=3), timing=False)
    b = report_csv_text(run_convergence_study("hho-dg", 1, [2], cfg, steps=3), timing=False)
    assert a == b


def test_sampling_stride_changes_errors_little():
    mesh = classify_boundary(build_trapezoidal_mesh(8, 0.1))
    errs = [evaluate_errors(BiotConfig(k=1), mesh, biot_benchmark(), stride=s)[0] for s in (1, 10)]
    np.testing.assert_allclose(errs[1], errs[0], rtol=0.01)


def test_cli_run(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["run", "--scheme", "hho-dg", "--mesh-seq", "2,4", "--steps", "2", "--out", str(out), "--no-timing"])
    assert code == 0
    text = capsys.readouterr().out
    assert text == out.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER) and len(text.splitlines()) == 3


@pytest.mark.parametrize("check", ["infsup", "coercivity", "commutation"])
def test_cli_diagnose_passes(check, capsys):
    assert main(["diagnose", "--check", check, "--mesh-seq", "2,4"]) == 0
    assert capsys.readouterr().out.strip().endswith(f"PASS check={check}")


def test_cli_energy(capsys):
    assert main(["diagnose", "--check", "energy", "--mesh-seq", "2", "--tau", "0.1", "--tf", "0.5"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_failure_exit_codes(capsys):
    # a DG penalty far below the floor loses coercivity
    with pytest.warns(RuntimeWarning):
        code = main(["diagnose", "--check", "coercivity", "--scheme", "hho-dg", "--eta", "0.01", "--mesh-seq", "2"])
    assert code == 1
    assert "FAIL check=coercivity scheme=hho-dg k=1" in capsys.readouterr().out
    assert main(["run", "--scheme", "hho-dg", "--k", "0", "--mesh-seq", "2", "--steps", "1"]) == 2
    assert capsys.readouterr().out.startswith("FAIL command=run")
    with pytest.raises(SystemExit):
        main(["run", "--mesh-seq", "a,b"])
