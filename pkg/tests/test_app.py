import csv
import json
import math
from datetime import datetime, timezone

import numpy as np
import pytest

from surgery_spectra import config
from surgery_spectra.app import ExperimentApp, ExperimentConfig, main
from surgery_spectra.errors import ConfigError
from surgery_spectra.mesh.files import load, save
from surgery_spectra.mesh.primitives import flat_disk
from surgery_spectra.reports.summary import format_table, list_reports, report_summary
from surgery_spectra.reports.writers import META_NAME, config_hash, dumps, write_csv, write_json, write_meta

GAP_LINES = "kind=crosscap\neps=0.1,0.05\nL=1.04,2.0\nn=8\n"


# Configuration --------------------------------------------------------------


@pytest.mark.parametrize(
    "text, command, line, key",
    [
        ("mesh=icosphere\ncolour=blue\n", "spectrum", 2, "colour"),
        ("kind=crosscap\neps=0.1\nL=1.04\nn=7\n", "glue", 4, "n"),
        ("eps=0.1\nL=1.04\nn=8\n", "glue", None, "kind"),
        ("kind=crosscap\neps=0.1,0.05,0.025\nL=1.04\nn=8\n", "scaling", None, "eps"),
        ("mesh=file\n", "spectrum", None, "mesh_file"),
        ("# header\nsubdiv=-1\n", "spectrum", 2, "subdiv"),
        ("mesh=icosphere\ncount\n", "spectrum", 2, None),
    ],
)
def test_config_errors_name_line_and_key(text, command, line, key):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.parse(text, command)
    assert info.value.line == line
    assert info.value.key == key


def test_config_rejects_unknown_command():
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("", "plot")


def test_canonical_text_ignores_order_and_comments():
    first = ExperimentConfig.parse(GAP_LINES, "gap")
    second = ExperimentConfig.parse("n=8  # seam vertices\n\nL=1.04,2.0\neps=0.1,0.05\nkind=crosscap\n", "gap")
    assert first.text == second.text
    assert first.hash == second.hash == config_hash(first.text)
    assert first.text.splitlines()[0] == "command=gap"
    assert ExperimentConfig.parse(GAP_LINES, "glue").hash != first.hash


def test_config_overrides_and_defaults():
    experiment = ExperimentConfig.parse("seed=1\n", "spectrum", {"seed": "5"})
    assert experiment.get("seed") == 5
    assert "seed=5" in experiment.text.splitlines()
    assert experiment.get("mesh") == "icosphere"
    assert experiment.get("flat_cap") == config.DELTA0
    assert ExperimentConfig.parse("flat_cap=none\n", "spectrum").get("flat_cap") is None


def test_config_spec_grid_is_eps_major():
    specs = ExperimentConfig.parse(GAP_LINES, "gap").specs()
    assert [(s.eps, s.L) for s in specs] == [(0.1, 1.04), (0.1, 2.0), (0.05, 1.04), (0.05, 2.0)]
    assert all(s.kind == "crosscap" and s.n == 8 and s.p == 0 for s in specs)


# Commands -------------------------------------------------------------------


def _run(tmp_path, command, text, *extra):
    path = tmp_path / f"{command}.cfg"
    path.write_text(text, encoding="utf-8")
    out = tmp_path / "reports"
    return main([command, "--config", str(path), "--out", str(out), "-q", *extra]), out


def test_spectrum_of_square_torus(tmp_path):
    code, out = _run(tmp_path, "spectrum", "mesh=flat_torus\nresolution=12\n")
    assert code == 0
    report = json.loads((out / "spectrum.json").read_text())
    assert report["passed"] is True
    assert report["command"] == "spectrum"
    assert report["headline"]["lambda_bar"] == pytest.approx(4.0 * 144.0 * math.sin(math.pi / 12) ** 2, rel=1e-8)
    assert report["headline"]["multiplicity"] == 4
    assert report["config_hash"] == config_hash(report["config"])
    assert (out / META_NAME).exists()


def test_spectrum_exports_matrices(tmp_path):
    code, out = _run(tmp_path, "spectrum", "mesh=flat_torus\nresolution=6\nmatrices=yes\n")
    assert code == 0
    report = json.loads((out / "spectrum.json").read_text())
    assert report["matrices"] == ["stiffness.coo", "mass.coo"]
    assert (out / "mass.coo").read_text().splitlines()[0] == "# 36 36 36"
    assert (out / "stiffness.coo").exists()


def test_threads_stay_in_range(tmp_path):
    experiment = ExperimentConfig.parse("", "spectrum")
    assert ExperimentApp(experiment, tmp_path, threads=0).threads == 1
    assert ExperimentApp(experiment, tmp_path, threads=10**6).threads >= 1


def test_reports_are_deterministic(tmp_path):
    _, out = _run(tmp_path, "spectrum", "mesh=flat_torus\nresolution=8\n")
    first = (out / "spectrum.json").read_text()
    _, out = _run(tmp_path, "spectrum", "mesh=flat_torus\nresolution=8\n")
    assert (out / "spectrum.json").read_text() == first


def test_verify_extend(tmp_path):
    code, out = _run(tmp_path, "verify-extend", "K=6\nL=1.04,2.0\nfields=4\n")
    assert code == 0
    with (out / "verify-extend.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 12
    assert all(row["pass"] == "True" for row in rows)
    report = json.loads((out / "verify-extend.json").read_text())
    assert report["headline"]["worst_energy_drop"] < 1e-8


def test_missing_required_key_is_a_validation_error(tmp_path):
    code, out = _run(tmp_path, "gap", "kind=crosscap\nL=1.04\nn=8\n")
    assert code == 1
    assert not (out / "gap.json").exists()


def test_missing_config_file(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path), "-q"]) == 1


def test_glue_writes_mesh(tmp_path):
    text = "mesh=icosphere\nsubdiv=2\nflat_cap=1.0\nkind=crosscap\neps=0.1\nL=1.04\nn=8\n"
    code, out = _run(tmp_path, "glue", text)
    assert code == 0
    report = json.loads((out / "glue.json").read_text())
    assert report["headline"]["euler_char"] == 1
    assert report["orientable"] is False
    glued = load(out / "glued.imesh")
    assert glued.vertex_count == report["vertices"]


def test_glue_on_default_mesh(tmp_path):
    code, out = _run(tmp_path, "glue", "kind=crosscap\neps=0.1\nL=1.04\nn=8\n")
    assert code == 0
    report = json.loads((out / "glue.json").read_text())
    assert report["passed"] is True
    assert report["headline"]["euler_char"] == 1


def test_glue_outside_patch_is_a_validation_error(tmp_path):
    text = "mesh=icosphere\nsubdiv=2\nflat_cap=1.0\nkind=crosscap\neps=0.5\nL=1.04\nn=8\n"
    code, _ = _run(tmp_path, "glue", text)
    assert code == 1


def test_maximize_on_small_sphere(tmp_path):
    code, out = _run(tmp_path, "maximize", "mesh=icosphere\nsubdiv=1\nmax_iter=2\n", "--seed", "3")
    assert code == 0
    report = json.loads((out / "maximize.json").read_text())
    assert report["headline"]["final"] >= report["headline"]["initial"] * (1.0 - 1e-9)
    assert "seed=3" in report["config"].splitlines()
    assert report["extremal_residual"] is None or report["extremal_residual"] >= 0
    with (out / "density.csv").open(newline="") as handle:
        assert len(list(csv.DictReader(handle))) == 42
    assert (out / "maximize.csv").exists()


# Summary --------------------------------------------------------------------


def test_summary_of_empty_directory(tmp_path, capsys):
    assert main(["summary", str(tmp_path)]) == 0
    assert capsys.readouterr().out.split() == ["report", "command", "status", "headline"]


def test_summary_fails_on_failed_report(tmp_path, capsys):
    write_json(tmp_path / "gap.json", {"command": "gap", "passed": False, "headline": {"max_gap": -0.25}})
    write_json(tmp_path / "spectrum.json", {"command": "spectrum", "passed": True, "headline": {"multiplicity": 3}})
    assert main(["summary", str(tmp_path)]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "max_gap=-0.25" in out
    assert "multiplicity=3" in out


def test_summary_lists_meshes(tmp_path, capsys):
    write_json(tmp_path / "glue.json", {"command": "glue", "passed": True})
    save(flat_disk(rings=2, n=8), tmp_path / "glued.imesh")
    assert main(["summary", str(tmp_path)]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "meshes: glued.imesh"


def test_summary_skips_unreadable_reports(tmp_path):
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    write_json(tmp_path / "spectrum.json", {"command": "spectrum", "passed": True})
    rows = report_summary(tmp_path)
    assert [row.report for row in rows] == ["spectrum.json"]
    assert main(["summary", str(tmp_path)]) == 0


# Writers --------------------------------------------------------------------


def test_dumps_sorts_keys_and_nulls_non_finite():
    text = dumps({"b": float("nan"), "a": np.float64(1.5), "c": np.arange(2), "d": np.bool_(True)})
    assert json.loads(text) == {"a": 1.5, "b": None, "c": [0, 1], "d": True}
    assert text.index('"a"') < text.index('"b"')


def test_write_csv_orders_columns(tmp_path):
    path = write_csv(tmp_path / "rows.csv", [{"x": 0.1, "y": 2, "z": None}], ["z", "x"])
    assert path.read_text().splitlines() == ["z,x", ",0.1"]


def test_meta_is_not_a_report(tmp_path):
    write_json(tmp_path / "spectrum.json", {"command": "spectrum", "passed": True})
    write_meta(tmp_path, "spectrum", datetime.now(timezone.utc), {"threads": 2})
    assert [p.name for p in list_reports(tmp_path)] == ["spectrum.json"]
    meta = json.loads((tmp_path / META_NAME).read_text())
    assert meta["threads"] == 2
    assert meta["seconds"] >= 0


def test_format_table_marks_status():
    rows = report_summary("missing-directory")
    assert rows == []
    assert format_table(rows).startswith("report")
