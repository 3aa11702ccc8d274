from __future__ import annotations

import copy
import json

import numpy as np
import pytest

from sweepcontrol import ProblemError, scalar_example_solve
from sweepcontrol.io import (bundled_problem_path, dumps, load_certificate, load_path, load_problem,
                             load_triple, problem_from_dict, problem_to_dict, read_csv, read_json,
                             save_certificate, save_path, save_triple, write_trajectory_csv)


@pytest.fixture
def raw():
    return read_json(bundled_problem_path())


def test_floats_use_seventeen_digits():
    text = dumps({"v": 0.1})
    assert "0.10000000000000001" in text
    assert json.loads(dumps({"v": [1 / 3, np.float64(2.5e-300)]}))["v"] == [1 / 3, 2.5e-300]
    assert json.loads(dumps({"v": np.inf}))["v"] == "inf"


def test_output_is_deterministic():
    sol = scalar_example_solve(5)
    assert dumps(sol.certificate.to_dict()) == dumps(scalar_example_solve(5).certificate.to_dict())


def test_triple_certificate_path_round_trip(tmp_path):
    sol = scalar_example_solve(4, "given_reference", alpha=np.full(4, 0.1), beta=np.full(4, 0.01), a0=-0.4)
    save_triple(sol.z, tmp_path / "z.json")
    save_certificate(sol.certificate, tmp_path / "c.json")
    save_path(sol.reference, tmp_path / "p.json")
    z = load_triple(tmp_path / "z.json")
    c = load_certificate(tmp_path / "c.json")
    for name in ("x", "u", "a"):
        np.testing.assert_array_equal(getattr(z, name), getattr(sol.z, name))
    for name in ("eta", "xi", "p_x", "p_u", "p_a", "gamma"):
        np.testing.assert_array_equal(getattr(c, name), getattr(sol.certificate, name))
    assert load_path(tmp_path / "p.json") == sol.reference


def test_problem_round_trip(raw):
    spec = problem_from_dict(raw)
    again = problem_from_dict(json.loads(dumps(problem_to_dict(spec))))
    assert again.reference == spec.reference
    np.testing.assert_array_equal(again.running_cost.H, spec.running_cost.H)


def test_trajectory_csv(tmp_path):
    sol = scalar_example_solve(3)
    write_trajectory_csv(sol.z, tmp_path / "t.csv")
    header, rows = read_csv(tmp_path / "t.csv")
    assert header == ["t", "x_1", "u_1", "a_1"]
    assert len(rows) == 4 and rows[-1][1] == 0.5


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d.update(tau=1.5), "tau"),
    (lambda d: d.update(x0=[2.0]), "x0[constraint 1]"),
    (lambda d: d["perturbation"].update(A=[[1.0, 0.0]]), "perturbation.A"),
    (lambda d: d["perturbation"].pop("growth_M"), "perturbation.growth_M"),
    (lambda d: d.update(generators=[[0.0]]), "generators"),
    (lambda d: d["terminal_cost"].update(type="cubic"), "terminal_cost.type"),
    (lambda d: d["running_cost"].update(weights={"speed": 1}), "running_cost.weights"),
    (lambda d: d.pop("r"), "r"),
    (lambda d: d.update(x0=["a"]), "x0"),
])
def test_errors_name_the_field(raw, mutate, field):
    data = copy.deepcopy(raw)
    mutate(data)
    with pytest.raises(ProblemError) as exc:
        problem_from_dict(data)
    assert exc.value.field_path == field


def test_unreadable_files(tmp_path):
    with pytest.raises(ProblemError):
        load_problem(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ProblemError):
        load_problem(tmp_path / "bad.json")
