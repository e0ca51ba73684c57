import math

import pytest

from flexopf.cli import run
from flexopf.ingest import write_case
from flexopf.network import BranchParams, Bus, Generator, SystemCase

OVERLAY = """name = "toy"
[[branch_edits]]
from_bus = 1
to_bus = 3
typology = "VSSA"
phi_range_degrees = [-10.0, 10.0]
"""


def toy_case(rating=100.0):
    return SystemCase(100.0, [Bus(1, 0, True), Bus(2, 30), Bus(3, 40)],
                      [Generator(1, 0, 200, variable_cost=10), Generator(3, 0, 200, variable_cost=25)],
                      [BranchParams(1, 2, b_min=10, b_max=10, f_max=rating, x=0.1, rate_a=rating),
                       BranchParams(2, 3, b_min=10, b_max=10, f_max=rating, x=0.1, rate_a=rating),
                       BranchParams(1, 3, b_min=5, b_max=5, f_max=rating, x=0.2, rate_a=rating)],
                      name="toy")


@pytest.fixture
def files(tmp_path):
    (tmp_path / "toy.m").write_text(write_case(toy_case()))
    (tmp_path / "tight.m").write_text(write_case(toy_case(rating=10.0)))
    (tmp_path / "toy.toml").write_text(OVERLAY)
    return tmp_path


def test_solve_writes_table_and_files(files, capsys):
    out = files / "out"
    code = run(["solve", "--case", str(files / "toy.m"), "--overlay", str(files / "toy.toml"),
                "--formulation", "ed", "--out", str(out)])
    cap = capsys.readouterr()
    assert code == 0
    assert cap.out.splitlines()[0] == "period,G1,G2,1-2,2-3,1-3"
    assert "status=Optimal" in cap.err
    assert (out / "solution.csv").read_text() == cap.out
    assert (out / "solution.json").exists()


def test_outputs_byte_identical_across_runs(files, capsys):
    args = ["solve", "--case", str(files / "toy.m"), "--overlay", str(files / "toy.toml"),
            "--formulation", "ncuc"]
    texts = []
    for i in range(2):
        assert run(args + ["--out", str(files / f"o{i}")]) == 0
        texts.append([(files / f"o{i}" / n).read_bytes() for n in ("solution.csv", "solution.json")])
    assert texts[0] == texts[1]


def test_usage_errors_exit_1(files, capsys):
    assert run(["solve", "--case", str(files / "toy.m")]) == 1
    assert run(["solve", "--case", str(files / "missing.m"), "--overlay", str(files / "toy.toml"),
                "--formulation", "ed"]) == 1
    assert run(["frobnicate"]) == 1
    (files / "bad.toml").write_text("[[branch_edits]]\nfrom_bus = 1\nto_bus = 9\n")
    assert run(["validate", "--case", str(files / "toy.m"), "--overlay", str(files / "bad.toml")]) == 1


def test_infeasible_exit_2(files, capsys):
    code = run(["solve", "--case", str(files / "tight.m"), "--overlay", str(files / "toy.toml"),
                "--formulation", "ed"])
    assert code == 2
    assert capsys.readouterr().out == ""


def test_verification_failure_exit_4(files, capsys):
    ref = files / "wrong.ref"
    ref.write_text('columns = ["G1"]\nrows = [[1.0]]\ntolerance = 0.0\n')
    code = run(["solve", "--case", str(files / "toy.m"), "--overlay", str(files / "toy.toml"),
                "--formulation", "ed", "--verify", str(ref)])
    assert code == 4
    assert "FAIL t=1 G1" in capsys.readouterr().err


def test_verification_pass_exit_0(files, capsys):
    ref = files / "right.ref"
    ref.write_text('columns = ["G1", "G2"]\nrows = [[70.0, 0.0]]\ntolerance = 1e-6\n')
    code = run(["solve", "--case", str(files / "toy.m"), "--overlay", str(files / "toy.toml"),
                "--formulation", "ed", "--verify", str(ref)])
    assert code == 0


def test_validate_reports_and_does_not_modify(files, capsys):
    before = (files / "toy.m").read_bytes()
    assert run(["validate", "--case", str(files / "toy.m"), "--overlay", str(files / "toy.toml")]) == 0
    assert "ok: 3 buses, 3 branches, 2 generators" in capsys.readouterr().out
    assert (files / "toy.m").read_bytes() == before
    (files / "two_ref.m").write_text(write_case(SystemCase(
        100.0, [Bus(1, 0, True), Bus(2, 10, True)], [Generator(1, 0, 50)],
        [BranchParams(1, 2, b_min=10, b_max=10, x=0.1)])))
    assert run(["validate", "--case", str(files / "two_ref.m")]) == 4


def test_export_writes_mps(files, capsys):
    target = files / "toy.mps"
    assert run(["export", "--case", str(files / "toy.m"), "--overlay", str(files / "toy.toml"),
                "--formulation", "ncuc", "--out", str(target)]) == 0
    text = target.read_text()
    assert text.startswith("NAME toy-ncuc\n") and text.endswith("ENDATA\n")
    assert "'INTORG'" in text


def test_bundled_names_resolve(capsys):
    assert run(["validate", "--case", "case6ww.m", "--overlay", "case_e.toml"]) == 0
