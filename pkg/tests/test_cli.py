from __future__ import annotations

import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from orbitrans.cli import run


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_describe_dihedral_counts(capsys, scenarios_dir):
    code, out, _ = _run(capsys, "describe", "--scenario", str(scenarios_dir / "dihedral6.json"))
    rep = json.loads(out)
    assert code == 0
    assert rep["counts"] == {"sigma_0": 1, "sigma_1": 6}
    assert len(rep["quotient_classes"]) == 3


def test_transport_mirror_writes_artifacts(capsys, scenarios_dir, tmp_path):
    code, out, _ = _run(capsys, "transport", "--scenario", str(scenarios_dir / "mirror.json"), "--out", str(tmp_path))
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert all(t["max_endpoint_error"] < 1e-7 for t in rep["tasks"])
    header = (tmp_path / "trajectories.csv").read_text().splitlines()[0]
    assert header == "task,point_name,t,chart_id,coord_0,coord_1"
    assert json.loads((tmp_path / "transport_report.json").read_text()) == rep
    assert (tmp_path / "along_mirror.diffeo.json").exists()


def test_displace_spindle_verdicts(capsys, scenarios_dir):
    code, out, _ = _run(capsys, "displace", "--scenario", str(scenarios_dir / "spindle23.json"))
    verdicts = {t["task"]: t for t in json.loads(out)["tasks"]}
    assert code == 0
    assert verdicts["equator"]["verdict"] == "NonDisplaceable"
    assert verdicts["small_loop"]["verdict"] == "Displaceable" and verdicts["small_loop"]["witness_disjoint"]
    assert abs(verdicts["tiny_square"]["areas"]["A_inside"] - 1e-4) < 2e-6


@pytest.mark.parametrize("name", ["dihedral6.json", "mirror.json", "cone5.json", "spindle23.json", "sphere.json"])
def test_verify_passes_on_bundled_scenarios(capsys, scenarios_dir, name):
    code, out, _ = _run(capsys, "verify", "--scenario", str(scenarios_dir / name))
    assert code == 0 and json.loads(out)["passed"]


def test_plot_is_valid_svg(capsys, scenarios_dir, tmp_path):
    for name in ("dihedral6.json", "spindle23.json"):
        code, _, _ = _run(capsys, "plot", "--scenario", str(scenarios_dir / name), "--out", str(tmp_path / name))
        assert code == 0
        root = ET.parse(tmp_path / name / "plot.svg").getroot()
        assert root.tag.endswith("svg")


def _scenario(tmp_path, obj):
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(obj))
    return str(p)


def test_exit_codes(capsys, tmp_path):
    code, _, err = _run(capsys, "describe", "--scenario", str(tmp_path / "missing.json"))
    assert code == 1 and json.loads(err.splitlines()[0])["error"]
    bad_version = _scenario(tmp_path, {"version": 99, "orbifold": {"family": "sphere"}, "tasks": []})
    assert _run(capsys, "describe", "--scenario", bad_version)[0] == 1
    d6 = {"name": "dihedral", "order": 6}
    different = {
        "version": 1,
        "orbifold": {"family": "quotient", "group": d6},
        "points": {"a": {"chart": 0, "lift": [1.0, 0.0]}, "b": {"chart": 0, "lift": [-1.0, 0.0]}},
        "tasks": [{"kind": "transport", "name": "t", "from": "a", "to": "b"}],
    }
    code, _, err = _run(capsys, "transport", "--scenario", _scenario(tmp_path, different))
    assert code == 2 and "DifferentComponents" in err
    collide = {
        "version": 1,
        "orbifold": {"family": "quotient", "group": d6},
        "points": {k: {"chart": 0, "lift": [v, 0.0]} for k, v in zip("abcd", (1.0, 2.0, 3.0, 4.0))},
        "tasks": [{"kind": "n_transport", "name": "t", "from": ["a", "b"], "to": ["c", "d"]}],
    }
    code, _, err = _run(capsys, "transport", "--scenario", _scenario(tmp_path, collide))
    assert code == 2 and "Sigma1Collision" in err
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate", "--scenario", "x"])
    assert exc.value.code == 1


def test_outputs_are_byte_identical_across_runs(capsys, scenarios_dir, tmp_path):
    for cmd in ("describe", "transport", "displace", "plot"):
        outs = []
        for k in range(2):
            d = tmp_path / f"{cmd}{k}"
            assert _run(capsys, cmd, "--scenario", str(scenarios_dir / "spindle23.json"), "--out", str(d), "--seed", "3")[0] == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        assert outs[0] == outs[1]


def test_console_entry_point(scenarios_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "orbitrans.cli", "describe", "--scenario", str(scenarios_dir / "mirror.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["counts"]["sigma_1"] == 1
