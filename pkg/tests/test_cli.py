import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from progenykit import mc
from progenykit.cli import log_grid, main

STAY = '{"kind":"stay","p":0.4,"q":0.3,"r":0.3}'
MODEL = json.dumps(
    {
        "L": 2,
        "specs": [
            {"kind": "geometric", "p": 0.4, "q": [0.3, 0.3], "shift": 0},
            {"kind": "table", "entries": [[[0, 0], 1.0]]},
        ],
    }
)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


class TestHitting:
    def test_simple_example_rows(self, capsys):
        code, out, _ = run(capsys, "hitting", "--spec", '{"kind":"simple","p":0.5}', "--n-max", "3")
        assert code == 0
        table = rows(out)
        assert table[0] == ["n", "pmf", "cdf"]
        got = [tuple(float(x) for x in r) for r in table[1:4]]
        assert got == [(1, 0.5, 0.5), (2, 0, 0.5), (3, 0.125, 0.625)]
        assert table[4][0] == "defect" and float(table[4][1]) == pytest.approx(0.375)

    def test_stay_first_row(self, capsys):
        _, out, _ = run(capsys, "hitting", "--spec", STAY, "--n-max", "5")
        assert float(rows(out)[1][1]) == pytest.approx(0.4, abs=1e-16)

    def test_seventeen_digits(self, capsys):
        _, out, _ = run(capsys, "hitting", "--spec", STAY, "--n-max", "5")
        val = rows(out)[2][1]
        assert val == format(0.12, ".17g")

    def test_json(self, capsys):
        code, out, _ = run(capsys, "hitting", "--spec", STAY, "--n-max", "4", "--format", "json")
        obj = json.loads(out)
        assert code == 0 and obj["n"] == [1, 2, 3, 4]
        assert obj["defect"] == pytest.approx(1 - sum(obj["pmf"]))

    def test_spec_file(self, capsys, tmp_path):
        f = tmp_path / "walk.json"
        f.write_text(STAY)
        code, out, _ = run(capsys, "hitting", "--spec", str(f), "--n-max", "2")
        assert code == 0 and len(rows(out)) == 4

    def test_out_file(self, capsys, tmp_path):
        f = tmp_path / "out.csv"
        code, out, _ = run(capsys, "hitting", "--spec", STAY, "--n-max", "2", "--out", str(f))
        assert code == 0 and out == ""
        assert f.read_text().startswith("n,pmf,cdf\n")

    @pytest.mark.parametrize(
        "spec",
        ['{"kind":"stay","p":0.4', '{"kind":"stay","p":0.4,"q":0.3,"r":0.3,"x":1}', '{"kind":"stay","p":0.5,"q":0.3,"r":0.3}', "[1, 2]", "/nonexistent/file.json"],
    )
    def test_usage_errors(self, capsys, spec):
        code, _, err = run(capsys, "hitting", "--spec", spec)
        assert code == 2 and "error" in err

    @pytest.mark.parametrize("argv", [["hitting"], ["hitting", "--spec", STAY, "--n-max", "0"], ["bogus"], ["hitting", "--spec", STAY, "--format", "xml"]])
    def test_bad_arguments(self, capsys, argv):
        code, _, _ = run(capsys, *argv)
        assert code == 2

    def test_byte_identical(self, capsys):
        a = run(capsys, "hitting", "--spec", STAY, "--n-max", "200")[1]
        b = run(capsys, "hitting", "--spec", STAY, "--n-max", "200")[1]
        assert a == b


class TestProgeny:
    def test_stay_residual_and_closed_form(self, capsys):
        code, out, _ = run(capsys, "progeny", "--spec", MODEL, "--grid", "0.9")
        assert code == 0
        table = rows(out)
        head = table[0]
        row = dict(zip(head, table[1]))
        assert float(row["residual"]) < 1e-10
        assert row["closed_form"] == "1" and float(row["closed_form_deviation"]) < 1e-10

    def test_walk_descriptor_accepted(self, capsys):
        a = run(capsys, "progeny", "--spec", MODEL, "--grid", "0.3,0.6")[1]
        b = run(capsys, "progeny", "--spec", STAY, "--grid", "0.3,0.6")[1]
        assert a == b

    def test_grid_including_one_rejected(self, capsys):
        code, _, _ = run(capsys, "progeny", "--spec", MODEL, "--grid", "0.5,1.0")
        assert code == 2

    def test_supercritical_approaches_pi(self, capsys):
        spec = '{"kind":"stay","p":0.2,"q":0.6,"r":0.2}'
        code, out, _ = run(capsys, "progeny", "--spec", spec, "--grid", "0.99999999", "--format", "json")
        obj = json.loads(out)
        assert code == 0
        assert obj["sigma"] == pytest.approx(3.0)
        np.testing.assert_allclose(obj["rows"][-1]["rho"], obj["pi"], atol=1e-4)

    def test_nonconvergence_is_flagged_not_fatal(self, capsys):
        spec = '{"kind":"stay","p":0.35,"q":0.35,"r":0.3}'
        code, out, _ = run(capsys, "progeny", "--spec", spec, "--grid", "0.5,0.9999999999", "--max-iter", "1000")
        table = rows(out)
        conv = table[0].index("converged")
        assert code == 0
        assert table[2][conv] == "0"

    def test_two_one_closed_form_flag(self, capsys):
        spec = '{"kind":"two_one","p":0.6,"q1":0.25,"q2":0.15}'
        code, out, _ = run(capsys, "progeny", "--spec", spec, "--format", "json")
        obj = json.loads(out)
        assert obj["closed_form"] and obj["max_closed_form_deviation"] < 1e-9

    def test_general_three_type_model(self, capsys):
        spec = json.dumps(
            {
                "L": 3,
                "specs": [
                    {"kind": "table", "entries": [[[0, 0, 0], 0.5], [[1, 1, 0], 0.5]]},
                    {"kind": "table", "entries": [[[0, 0, 0], 1.0]]},
                    {"kind": "geometric", "p": 0.5, "q": [0.2, 0.2, 0.1]},
                ],
            }
        )
        code, out, _ = run(capsys, "progeny", "--spec", spec, "--grid", "0.5")
        assert code == 0
        assert rows(out)[1][-2] == "0"


class TestTail:
    def test_theta(self, capsys):
        code, out, _ = run(capsys, "tail", "--r", "0.5")
        table = rows(out)
        assert code == 0
        assert table[0] == ["n", "value", "scaled", "limit", "rel_gap"]
        first, last = table[1], table[-1]
        assert first[0] == "0" and float(first[1]) == pytest.approx(1.0, abs=1e-15)
        assert last[0] == "1000000" and float(last[4]) < 0.01
        assert len({r[3] for r in table[1:]}) == 1

    def test_alpha_and_lemma(self, capsys):
        code, out, _ = run(capsys, "tail", "--r", "0.2", "--sequence", "alpha", "--n-max", "10000", "--format", "json")
        assert code == 0 and json.loads(out)["rows"][-1]["rel_gap"] < 0.01
        code, out, _ = run(capsys, "tail", "--sequence", "lemma", "--x", "0.81", "--n-max", "10000")
        assert code == 0 and float(rows(out)[-1][4]) < 0.01

    @pytest.mark.parametrize("argv", [["tail"], ["tail", "--r", "1.0"], ["tail", "--sequence", "lemma"], ["tail", "--sequence", "lemma", "--x", "1"]])
    def test_bad(self, capsys, argv):
        assert run(capsys, *argv)[0] == 2

    def test_log_grid(self):
        assert log_grid(100) == [0, 1, 2, 5, 10, 20, 50, 100]
        assert log_grid(7) == [0, 1, 2, 5, 7]


class TestVerify:
    def test_stay_example_passes(self, capsys):
        code, out, _ = run(capsys, "verify", "--spec", STAY, "--samples", "100000", "--seed", "42", "--format", "json")
        rep = json.loads(out)
        assert code == 0 and rep["pass"]
        assert set(rep["checks"]) == {"branching_identity", "offspring_law", "total_variation"}
        assert rep["checks"]["branching_identity"]["failures"] == 0

    def test_dishonest_walk_fails(self, capsys):
        spec = '{"kind":"stay","p":0.3,"q":0.4,"r":0.3}'
        code, out, _ = run(capsys, "verify", "--spec", spec, "--samples", "2000", "--seed", "1", "--horizon", "2000", "--assert-honest", "--format", "json")
        rep = json.loads(out)
        assert code == 1 and not rep["pass"]
        hon = rep["checks"]["honesty"]
        assert not hon["pass"] and hon["analytic_defect"] == pytest.approx(0.25, abs=1e-6)

    def test_zero_samples(self, capsys):
        assert run(capsys, "verify", "--spec", STAY, "--samples", "0")[0] == 2

    def test_general_walk_rejected(self, capsys):
        assert run(capsys, "verify", "--spec", '{"kind":"general","jumps":{"1":0.5,"-2":0.5}}')[0] == 2


class TestSimulate:
    def test_walk_histogram(self, capsys, tmp_path):
        dump = tmp_path / "h.bin"
        code, out, _ = run(capsys, "simulate", "--spec", STAY, "--samples", "5000", "--seed", "2", "--horizon", "1000", "--dump", str(dump))
        table = rows(out)
        assert code == 0 and table[0] == ["n", "count", "frequency"]
        counts = mc.read_histogram(dump)
        assert counts.sum() == 5000
        assert sum(int(r[1]) for r in table[1:]) == 5000
        np.testing.assert_array_equal(counts, mc.hitting_counts(mc.WalkSpec.from_json(json.loads(STAY)), 5000, 1000, seed=2))

    def test_model_sizes(self, capsys):
        code, out, _ = run(capsys, "simulate", "--spec", MODEL, "--samples", "2000", "--seed", "2", "--format", "json")
        obj = json.loads(out)
        assert code == 0 and sum(obj["count"]) + obj["overflow"] == 2000

    def test_byte_identical(self, capsys):
        a = run(capsys, "simulate", "--spec", STAY, "--samples", "3000", "--seed", "5")[1]
        b = run(capsys, "simulate", "--spec", STAY, "--samples", "3000", "--seed", "5")[1]
        assert a == b


def test_domain_error_exit_code(capsys, monkeypatch):
    from progenykit import cli
    from progenykit.errors import DomainError

    def boom(*a, **k):
        raise DomainError("negative discriminant")

    monkeypatch.setattr(cli, "hitting_pmf", boom)
    code, _, err = run(capsys, "hitting", "--spec", STAY)
    assert code == 3 and "numerical" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "progenykit", "hitting", "--spec", '{"kind":"simple","p":0.5}', "--n-max", "3"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[3] == "3,0.125,0.625"
