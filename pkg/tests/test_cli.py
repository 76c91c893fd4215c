"""Command-line front end: one smoke test per subcommand against frozen
constants, determinism of the rendered reports, and the exit-code contract."""

from __future__ import annotations

import json

import pytest

from conftest import cycle_space, path_space, seeded_tree
from coarsemedians import space_to_json
from coarsemedians.cli import main


def write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def run_report(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out)


@pytest.fixture
def spaces(tmp_path):
    return {
        "cycle6": write_json(tmp_path / "cycle6.json",
                             space_to_json(cycle_space(6))),
        "tree": write_json(tmp_path / "tree.json",
                           space_to_json(seeded_tree(8, 3))),
        "p5": write_json(tmp_path / "p5.json", space_to_json(path_space(5))),
        "p3": write_json(tmp_path / "p3.json", space_to_json(path_space(3))),
    }


@pytest.fixture
def identity_diagram_file(tmp_path):
    p3 = space_to_json(path_space(3))
    obj = {
        "shape": {"vertices": ["X", "Y"],
                  "arrows": [{"from": "X", "to": "Y", "label": "id"}]},
        "objects": {"X": p3, "Y": p3},
        "maps": {"id": [0, 1, 2]},
    }
    return write_json(tmp_path / "identity.json", obj)


# ---------------------------------------------------------------------------
# certificates and defects


def test_check_median_on_a_tree(capsys, spaces):
    code, report = run_report(capsys, "check-median", "--space", spaces["tree"])
    assert code == 0
    assert report["command"] == "check-median"
    assert report["constants"]["C"] == "0"
    assert report["constants"]["C_sym"] == "0"
    assert report["constants"]["C_loc"] == "0"
    assert report["constants"]["C_4pt"] == "0"
    assert report["inputs"]["space"].startswith("sha256:")
    assert all(a["pass"] for a in report["assertions"])


def test_check_median_failing_expectation(capsys, spaces):
    code, report = run_report(capsys, "check-median", "--space", spaces["cycle6"],
                              "--median", "delta-centre", "--expect-c", "0")
    assert code == 1
    assert report["constants"]["C"] == "1"
    failed = [a for a in report["assertions"] if not a["pass"]]
    assert [a["name"] for a in failed] == ["certificate constant <= expected"]
    assert failed[0]["bound"] == "0" and failed[0]["value"] == "1"


def test_check_median_met_expectation(capsys, spaces):
    code, report = run_report(capsys, "check-median", "--space", spaces["cycle6"],
                              "--median", "delta-centre", "--expect-c", "1")
    assert code == 0
    assert all(a["pass"] for a in report["assertions"])


def test_cmp_subcommand(capsys, tmp_path, spaces):
    table = write_json(tmp_path / "map.json", {"table": [0, 1, 1, 2, 2]})
    code, report = run_report(capsys, "cmp", "--dom", spaces["p5"],
                              "--cod", spaces["p3"], "--map", table,
                              "--expect", "0")
    assert code == 0
    assert report["constants"]["cmp_defect"] == "0"
    bare = write_json(tmp_path / "fold.json", [2, 1, 0, 1, 2])
    code, report = run_report(capsys, "cmp", "--dom", spaces["p5"],
                              "--cod", spaces["p3"], "--map", bare,
                              "--expect", "1")
    assert code == 1
    assert report["constants"]["cmp_defect"] == "2"
    assert "cmp" in report["witnesses"]


def test_rips_subcommand_with_distortion(capsys, spaces):
    code, report = run_report(capsys, "rips", "--space", spaces["p5"],
                              "--scale", "1", "--scales", "1,2")
    assert code == 0
    assert report["constants"]["diameter"] == "4"
    assert report["constants"]["components"] == "1"
    assert report["constants"]["A(1,1)"] == "1"
    assert report["constants"]["A(1,2)"] == "2"
    assert report["constants"]["A(2,2)"] == "1"
    assert report["constants"]["suggested_scale"] == "1"


def test_intervals_subcommand(capsys, spaces):
    code, report = run_report(capsys, "intervals", "--space", spaces["cycle6"],
                              "--median", "one-median")
    assert code == 0
    assert report["constants"]["C"] == "1"
    assert report["constants"]["chained_level"] == "13"
    assert report["constants"]["empirical_chained_level"] == "3"
    assert all(a["pass"] for a in report["assertions"])


def test_five_point_subcommand(capsys, spaces):
    code, report = run_report(capsys, "five-point", "--space", spaces["cycle6"],
                              "--median", "one-median", "--expect", "1")
    assert code == 0
    assert report["constants"]["five_point"] == "1"
    assert report["constants"]["exact"] == "1"
    assert "five_point" in report["witnesses"]


def test_tripod_subcommand(capsys, spaces):
    code, report = run_report(capsys, "tripod", "--space", spaces["cycle6"],
                              "--median", "one-median", "--level", "1",
                              "--expect", "3")
    assert code == 0
    assert report["constants"]["tripod"] == "3"
    assert report["constants"]["vacuous"] == "0"


# ---------------------------------------------------------------------------
# diagram commands


def test_tuplespace_subcommand(capsys, identity_diagram_file):
    code, report = run_report(capsys, "tuplespace", "--diagram",
                              identity_diagram_file, "--kappa", "0")
    assert code == 0
    assert report["constants"]["members"] == "3"
    assert report["constants"]["projection_defect"] == "0"
    assert report["witnesses"]["members"] == [["0", "0"], ["1", "1"], ["2", "2"]]


def test_stabilize_subcommand(capsys, identity_diagram_file):
    code, report = run_report(capsys, "stabilize", "--diagram",
                              identity_diagram_file, "--grid", "0,1")
    assert code == 0
    assert report["constants"]["count@0"] == "3"
    assert report["constants"]["count@1"] == "7"
    assert report["constants"]["excess@0->1"] == "1"
    assert report["constants"]["excess@0->0"] == "0"
    assert all(a["pass"] for a in report["assertions"])


def test_recipe_subcommand(capsys, identity_diagram_file):
    code, report = run_report(capsys, "recipe", "--diagram",
                              identity_diagram_file, "--kappa", "0",
                              "--sigma", "1")
    assert code == 0
    assert report["constants"]["tuples"] == "3"
    assert report["constants"]["cone_defect"] == "0"
    assert report["constants"]["connected"] == "1"


# ---------------------------------------------------------------------------
# family commands, chained end to end


def test_toy_gen_build_verify_assemble_chain(capsys, tmp_path):
    fam_file = str(tmp_path / "family.json")
    code, report = run_report(capsys, "toy-gen", "--kind", "tree-collapse-chain",
                              "--dest", fam_file, "--count", "3",
                              "--points", "5", "--seed", "7")
    assert code == 0
    assert report["constants"]["spaces"] == "3"
    assert report["constants"]["common_C"] == "0"
    assert report["constants"]["B@X2|X1"] == "0"
    family = json.loads((tmp_path / "family.json").read_text())
    assert family["indices"] == ["X1", "X2", "X3"]

    emitted = str(tmp_path / "median-diagram.json")
    code, report = run_report(capsys, "hhs-build", "--family", fam_file,
                              "--emit", emitted)
    assert code == 0
    assert report["constants"]["vertices"] == "6"
    assert report["constants"]["uniform_bound"] == "0"
    assert report["constants"]["cmp_defect"] == "0"
    assert all(a["pass"] for a in report["assertions"])

    code, report = run_report(capsys, "hhs-verify", "--family", fam_file)
    assert code == 0
    assert report["constants"]["delta@X1"] == "0"
    assert report["constants"]["bcii@X2|X1"] == "0"
    assert all(a["pass"] for a in report["assertions"])

    code, report = run_report(capsys, "assemble", "--diagram", emitted,
                              "--kappa", "0", "--sigma", "1")
    assert code == 0
    assert report["constants"]["tuples"] == "30"
    assert report["constants"]["nu_C"] == "0"
    assert report["constants"]["induced_radius"] == "0"
    for vertex in ("X1", "X2", "X3"):
        assert report["constants"][f"leg@{vertex}"] == "0"
    assert all(a["pass"] for a in report["assertions"])


# ---------------------------------------------------------------------------
# report plumbing


def test_reports_are_deterministic(tmp_path, spaces):
    first, second = tmp_path / "one.json", tmp_path / "two.json"
    assert main(["check-median", "--space", spaces["cycle6"],
                 "--median", "one-median", "--out", str(first)]) == 0
    assert main(["check-median", "--space", spaces["cycle6"],
                 "--median", "one-median", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_toy_gen_is_deterministic(capsys, tmp_path):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    main(["toy-gen", "--kind", "product-of-trees", "--dest", a, "--seed", "3"])
    main(["toy-gen", "--kind", "product-of-trees", "--dest", b, "--seed", "3"])
    capsys.readouterr()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_out_flag_writes_the_report(capsys, tmp_path, spaces):
    dest = tmp_path / "report.json"
    code = main(["five-point", "--space", spaces["tree"], "--out", str(dest)])
    assert code == 0
    assert capsys.readouterr().out == ""
    report = json.loads(dest.read_text())
    assert report["command"] == "five-point"
    assert report["constants"]["five_point"] == "0"


def test_report_shape_is_stable(capsys, spaces):
    _, report = run_report(capsys, "check-median", "--space", spaces["tree"])
    assert sorted(report) == ["assertions", "command", "constants", "inputs",
                              "witnesses"]
    for entry in report["assertions"]:
        assert sorted(entry) == ["bound", "name", "pass", "value"]


# ---------------------------------------------------------------------------
# error paths


def test_missing_file_exits_two(capsys, tmp_path):
    code = main(["check-median", "--space", str(tmp_path / "missing.json")])
    captured = capsys.readouterr()
    assert code == 2
    assert "space" in captured.err
    assert captured.out == ""


def test_malformed_json_exits_two(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops", encoding="utf-8")
    code = main(["check-median", "--space", str(bad)])
    captured = capsys.readouterr()
    assert code == 2
    assert "space" in captured.err


def test_bad_rational_exits_two(capsys, spaces):
    code = main(["rips", "--space", spaces["p5"], "--scale", "wide"])
    captured = capsys.readouterr()
    assert code == 2
    assert "scale" in captured.err


def test_negative_scale_exits_two(capsys, spaces):
    code = main(["rips", "--space", spaces["p5"], "--scale", "-1"])
    assert code == 2
    assert "scale" in capsys.readouterr().err


def test_tiny_budget_exits_two(capsys, identity_diagram_file):
    code = main(["tuplespace", "--diagram", identity_diagram_file,
                 "--kappa", "0", "--budget", "2"])
    captured = capsys.readouterr()
    assert code == 2
    assert "budget" in captured.err


def test_unwritable_out_exits_two(capsys, tmp_path, spaces):
    dest = tmp_path / "no-such-dir" / "report.json"
    code = main(["five-point", "--space", spaces["tree"], "--out", str(dest)])
    assert code == 2
    assert "out" in capsys.readouterr().err


def test_unknown_subcommand_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["polish-the-cone"])
    assert exc.value.code == 2
    capsys.readouterr()
