import json
from pathlib import Path

import numpy as np
import pytest

from aerostruct import cli
from aerostruct.config import (SCHEMA, ConfigFileNotFoundError, ConfigSyntaxError,
                               ConsistencyError, RunConfig, UnknownKeyError, format_config,
                               load_case, parse_config, parse_config_text, write_case)
from aerostruct.fileio import format_matrix_coo, parse_key_values
from aerostruct.optimize import parse_history
from aerostruct.spline import structural_coupling
from aerostruct.validation import parse_validation

DATA = Path(__file__).parent / "data"
DESK_CFG = Path(__file__).parents[1] / "cases" / "desk_wing" / "desk_wing.cfg"


@pytest.fixture(scope="module")
def case_dir(tmp_path_factory, small_case):
    d = tmp_path_factory.mktemp("small")
    write_case(small_case, d)
    return d


def _minimal(d):
    return f"case.structure = {d}/structure.txt\ncase.lattice = {d}/lattice.txt\ncase.ffd = {d}/ffd.txt\n"


# ---------------------------------------------------------------- parsing
def test_minimal_config_gets_defaults(case_dir):
    cfg = parse_config_text(_minimal(case_dir))
    assert cfg["coupler.omega"] == 0.7
    assert cfg["coupler.tol"] == 1e-8
    assert cfg["case.target_cl"] == 0.3
    assert cfg["validate.steps"] == (1e-4, 1e-5, 1e-6)
    assert cfg.section("flow")["speed"] == 50.0
    assert set(cfg.values) == set(SCHEMA)


def test_unknown_key_names_key_and_line(case_dir):
    text = _minimal(case_dir) + "\n# comment\nfoo = 1\n"
    with pytest.raises(UnknownKeyError) as err:
        parse_config_text(text, "run.cfg")
    assert err.value.key == "foo" and err.value.line == 6
    assert "'foo'" in str(err.value) and ":6:" in str(err.value)


@pytest.mark.parametrize("line, column, fragment", [
    ("coupler.omega 0.7", 1, "key = value"),
    ("   coupler.omega = fast", 20, "bad value"),
    ("coupler.max_iter = -3", 20, "positive"),
    ("my key = 1", 1, "malformed key"),
])
def test_syntax_errors_carry_line_and_column(case_dir, line, column, fragment):
    text = _minimal(case_dir) + line + "\n"
    with pytest.raises(ConfigSyntaxError) as err:
        parse_config_text(text, "run.cfg")
    assert (err.value.line, err.value.column) == (4, column)
    assert fragment in str(err.value)


def test_duplicate_and_missing_keys(case_dir):
    with pytest.raises(ConfigSyntaxError, match="already set on line 4"):
        parse_config_text(_minimal(case_dir) + "coupler.omega = 0.5\ncoupler.omega = 0.6\n")
    with pytest.raises(ConfigSyntaxError, match="case.ffd"):
        parse_config_text("\n".join(_minimal(case_dir).splitlines()[:2]))


def test_missing_files(tmp_path, case_dir):
    with pytest.raises(ConfigFileNotFoundError):
        parse_config(tmp_path / "absent.cfg")
    text = _minimal(case_dir).replace("lattice.txt", "nowhere.txt")
    with pytest.raises(ConfigFileNotFoundError) as err:
        parse_config_text(text)
    assert err.value.key == "case.lattice"
    # distinct classes, all under one base
    assert not issubclass(ConfigFileNotFoundError, ConfigSyntaxError)
    assert not issubclass(UnknownKeyError, ConsistencyError)


def test_config_round_trip(case_dir):
    values = parse_config_text(_minimal(case_dir) + "coupler.omega = 0.55\n"
                               "validate.steps = 0.001 1e-05\nanalysis.trim = yes\n").values
    text = format_config(values, case_dir)
    again = parse_config_text(text, base_dir=case_dir).values
    assert {k: again[k] for k in values if "case." not in k} == \
        {k: values[k] for k in values if "case." not in k}
    assert all(Path(again[k]).resolve() == Path(values[k]).resolve() for k in
               ("case.structure", "case.lattice", "case.ffd"))


def test_load_case_reproduces_written_case(case_dir, small_case):
    case = load_case(parse_config(case_dir / "run.cfg"))
    np.testing.assert_array_equal(case.lattice.nodes, small_case.lattice.nodes)
    np.testing.assert_array_equal(case.structure.coords, small_case.structure.coords)
    np.testing.assert_array_equal(case.ffd.control_points, small_case.ffd.control_points)
    np.testing.assert_array_equal(case.constraints.minima, small_case.constraints.minima)


def test_spline_receiver_mismatch_is_a_consistency_error(tmp_path, case_dir, small_case):
    n_dof = small_case.structure.n_dof
    H = structural_coupling(small_case.spline, n_dof).tocoo()
    keep = H.row < H.shape[0] - 3           # one receiver short
    import scipy.sparse as sp
    bad = sp.coo_matrix((H.data[keep], (H.row[keep], H.col[keep])), shape=(H.shape[0] - 3, n_dof))
    (tmp_path / "spline.txt").write_text(format_matrix_coo(bad))
    cfg = parse_config_text(_minimal(case_dir) + "case.spline = spline.txt\n", base_dir=tmp_path)
    with pytest.raises(ConsistencyError, match="receivers"):
        load_case(cfg)
    (tmp_path / "spline.txt").write_text(format_matrix_coo(H))
    case = load_case(cfg)
    assert (case.coupling != H.tocsr()).nnz == 0


def test_station_outside_span_is_a_consistency_error(tmp_path, case_dir):
    (tmp_path / "stations.txt").write_text("STATIONS\n99.0 0.01\n")
    cfg = parse_config_text(_minimal(case_dir) + "case.constraints = stations.txt\n",
                            base_dir=tmp_path)
    with pytest.raises(ConsistencyError, match="outside"):
        load_case(cfg)


# ---------------------------------------------------------------- CLI
def _run(mode, cfg, out, *extra):
    return cli.main([mode, "--config", str(cfg), "--output", str(out), *extra])


def test_cli_config_errors_exit_4(tmp_path, case_dir, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(_minimal(case_dir) + "foo = 1\n")
    assert _run("analyze", bad, tmp_path / "o") == 4
    assert "unknown key 'foo'" in capsys.readouterr().err
    assert _run("analyze", tmp_path / "none.cfg", tmp_path / "o") == 4
    assert _run("analyze", case_dir / "run.cfg", tmp_path / "o", "--threads", "0") == 4


def test_cli_analyze_is_deterministic_and_balanced(tmp_path, case_dir):
    for n in (1, 2):
        assert _run("analyze", case_dir / "run.cfg", tmp_path / f"a{n}") == 0
    for name in ("summary.txt", "history.csv", "flying_lattice.txt"):
        assert (tmp_path / "a1" / name).read_bytes() == (tmp_path / "a2" / name).read_bytes()
    s = parse_key_values((tmp_path / "a1" / "summary.txt").read_text())
    assert s["converged"] == "true"
    ws, wf = float(s["interface_work.structure"]), float(s["interface_work.fluid"])
    assert abs(ws - wf) <= 1e-12 * abs(ws)


def test_cli_adjoint_tables(tmp_path, case_dir, small_case):
    assert _run("adjoint", case_dir / "run.cfg", tmp_path) == 0
    rows = (tmp_path / "gradient_cp.csv").read_text().splitlines()
    assert rows[0] == "component,control_point,i,j,k,dJ_dCPz"
    assert len(rows) - 1 == small_case.ffd.n_design
    surf = (tmp_path / "gradient_surface.csv").read_text().splitlines()
    assert len(surf) - 1 == small_case.lattice.n_bound


def test_cli_validate_gradient(tmp_path, case_dir):
    cfg = write_case_copy(case_dir, tmp_path, "validate.count = 3\nvalidate.steps = 1e-5 1e-6\n")
    assert _run("validate-gradient", cfg, tmp_path / "v") == 0
    rows = parse_validation((tmp_path / "v" / "validation.csv").read_text())
    assert [r[2] for r in rows] == ["AD", "FD", "FD"] * 3
    assert max(r[5] for r in rows) <= 1e-5
    # an impossible tolerance reports failure through the exit code
    cfg = write_case_copy(case_dir, tmp_path, "validate.count = 1\nvalidate.tolerance = 1e-300\n")
    assert _run("validate-gradient", cfg, tmp_path / "w") == 5


def test_cli_optimize_writes_history_and_report(tmp_path, case_dir):
    cfg = write_case_copy(case_dir, tmp_path, "optimizer.max_iter = 1\n")
    code = _run("optimize", cfg, tmp_path / "o")
    assert code in (0, 2)
    hist = parse_history((tmp_path / "o" / "history.csv").read_text())
    assert [r[0] for r in hist] == list(range(len(hist)))
    rep = parse_key_values((tmp_path / "o" / "report.txt").read_text())
    assert int(rep["exit_code"]) == code
    assert float(rep["final.C_D"]) <= float(rep["baseline.C_D"])


def test_cli_compare_with_given_designs(tmp_path, case_dir, small_case):
    from aerostruct.fileio import format_vector
    dv = np.zeros(small_case.ffd.n_design)
    (tmp_path / "d.txt").write_text(format_vector(dv, "design"))
    cfg = write_case_copy(case_dir, tmp_path, "compare.aswso_design = d.txt\n"
                                              "compare.awso_design = d.txt\n")
    assert _run("compare", cfg, tmp_path / "c") == 0
    lines = (tmp_path / "c" / "comparison.csv").read_text().splitlines()
    assert lines[0] == "Configuration,C_D,Diff. %"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["ASWSO optimum", "AWSO optimum", "Original"]
    assert lines[2].split(",")[2] == "0"


def test_rigid_analyze_matches_regression_file(tmp_path):
    """Quasi-rigid coupled analysis of the desk wing against stored standalone aerodynamics."""
    ref = json.loads((DATA / "regression.json").read_text())["desk_wing"]["standalone_aero"]
    cfg = tmp_path / "rigid.cfg"
    base = DESK_CFG.parent
    text = DESK_CFG.read_text().replace("= structure.txt", f"= {base}/structure.txt") \
        .replace("= lattice.txt", f"= {base}/lattice.txt").replace("= ffd.txt", f"= {base}/ffd.txt")
    cfg.write_text(text + "structure.stiffness_scale = 1e9\n")
    assert _run("analyze", cfg, tmp_path / "r") == 0
    s = parse_key_values((tmp_path / "r" / "summary.txt").read_text())
    assert float(s["alpha_deg"]) == ref["alpha_deg"]
    assert float(s["C_L"]) == pytest.approx(ref["C_L"], rel=1e-6)
    assert float(s["C_D"]) == pytest.approx(ref["C_D"], rel=1e-6)


def test_baseline_trimmed_drag_matches_regression_file():
    from aerostruct.optimize import evaluate_design
    ref = json.loads((DATA / "regression.json").read_text())["desk_wing"]["baseline_trimmed_flexible"]
    case = load_case(parse_config(DESK_CFG))
    ev = evaluate_design(case, np.zeros(case.ffd.n_design), "flexible")
    assert ev.cl == pytest.approx(ref["target_cl"], abs=1e-6)
    assert ev.cd == pytest.approx(ref["C_D"], rel=1e-9)


def write_case_copy(case_dir, tmp_path, extra):
    p = tmp_path / f"cfg{len(list(tmp_path.glob('cfg*')))}.cfg"
    p.write_text(_minimal(case_dir) + extra)
    return p


def test_run_config_defaults_mode():
    cfg = RunConfig("x", {"a.b": 1})
    assert cfg.mode == "analyze" and cfg.threads == 1 and cfg.section("a") == {"b": 1}
