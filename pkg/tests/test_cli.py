import json
import subprocess
import sys

import numpy as np
import pytest

from enku import cli
from enku.ensemble import Ensemble, moments, read_ensemble, read_points, write_ensemble, write_points
from enku.updates import enku_map, apply_map


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def ens_file(tmp_path, rng):
    e = Ensemble(rng.normal(size=(40, 2)), rng.normal(size=(40, 2)))
    path = tmp_path / "ens.csv"
    write_ensemble(e, path)
    return e, path


def test_update_matches_library(capsys, tmp_path, ens_file):
    e, path = ens_file
    out = tmp_path / "out.csv"
    code, _, _ = run(capsys, "update", "--method", "enku", "--ensemble", str(path),
                     "--y-star", "0.4,-0.2", "--out", str(out))
    assert code == 0
    expected = apply_map(enku_map(moments(e), [0.4, -0.2]), e).x
    np.testing.assert_array_equal(read_points(out), expected)


@pytest.mark.parametrize("method", ["ld", "lot"])
def test_update_square_root_methods(capsys, tmp_path, ens_file, method):
    _, path = ens_file
    out = tmp_path / "out.csv"
    assert run(capsys, "update", "--method", method, "--ensemble", str(path),
               "--y-star", "0,0", "--out", str(out))[0] == 0
    assert read_points(out).shape == (40, 2)


def test_update_eakf(capsys, tmp_path, rng):
    x = rng.normal(size=(30, 3))
    xp, hp, gp, out = (tmp_path / n for n in ("x.csv", "H.csv", "G.csv", "o.csv"))
    write_points(x, xp)
    np.savetxt(hp, [[1.0, 0.0, 0.0]], delimiter=",")
    np.savetxt(gp, [[0.5]], delimiter=",")
    assert run(capsys, "update", "--method", "eakf-svd", "--ensemble", str(xp), "--y-star", "0.2",
               "--H", str(hp), "--Gamma", str(gp), "--out", str(out))[0] == 0
    assert read_points(out).shape == (30, 3)
    code, _, err = run(capsys, "update", "--method", "eakf-svd", "--ensemble", str(xp),
                       "--y-star", "0.2", "--out", str(out))
    assert code == 2 and "--H" in err


def test_update_bad_inputs(capsys, tmp_path, ens_file):
    _, path = ens_file
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y1\n1.0,abc\n")
    code, _, err = run(capsys, "update", "--method", "enku", "--ensemble", str(bad),
                       "--y-star", "0", "--out", str(tmp_path / "o.csv"))
    assert code == 2 and "row 2" in err
    code, _, _ = run(capsys, "update", "--method", "enku", "--ensemble", str(path),
                     "--y-star", "a,b", "--out", str(tmp_path / "o.csv"))
    assert code == 2
    code, _, _ = run(capsys, "update", "--method", "enku", "--ensemble", str(path),
                     "--y-star", "0.1", "--out", str(tmp_path / "o.csv"))
    assert code == 2


def test_sample_distribution_is_reproducible(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"type": "ring"}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run(capsys, "sample", "--spec", str(spec), "--n", "100", "--seed", "3",
                   "--out", str(out))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert read_points(a).shape == (100, 2)


def test_sample_joint_model_with_latent(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "kind": "joint", "z": {"type": "gaussian", "mean": [0], "cov": [[1]]},
        "y": {"type": "gaussian", "mean": [0], "cov": [[1]]}}))
    out = tmp_path / "e.csv"
    assert run(capsys, "sample", "--spec", str(spec), "--n", "20", "--seed", "1",
               "--out", str(out), "--with-z")[0] == 0
    e = read_ensemble(out)
    np.testing.assert_allclose(e.x, e.z + e.y, atol=1e-15)


def test_sample_bad_spec(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text("{not json")
    assert run(capsys, "sample", "--spec", str(spec), "--n", "5", "--seed", "1",
               "--out", str(tmp_path / "o.csv"))[0] == 2
    spec.write_text(json.dumps({"type": "cauchy"}))
    assert run(capsys, "sample", "--spec", str(spec), "--n", "5", "--seed", "1",
               "--out", str(tmp_path / "o.csv"))[0] == 2
    spec.write_text(json.dumps({"type": "ring"}))
    assert run(capsys, "sample", "--spec", str(spec), "--n", "5", "--seed", "-1",
               "--out", str(tmp_path / "o.csv"))[0] == 2


def test_w2_command(capsys, tmp_path, rng):
    a = rng.normal(size=(30, 2))
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_points(a, pa)
    write_points(a + [3.0, 4.0], pb)
    code, out, _ = run(capsys, "w2", "--a", str(pa), "--b", str(pb))
    assert code == 0
    assert json.loads(out)["distance"] == pytest.approx(5.0, abs=1e-9)
    code, out2, _ = run(capsys, "w2", "--a", str(pa), "--b", str(pb), "--backend", "python")
    assert json.loads(out2) == json.loads(out)


def test_w2_dimension_mismatch(capsys, tmp_path, rng):
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_points(rng.normal(size=(5, 2)), pa)
    write_points(rng.normal(size=(5, 3)), pb)
    assert run(capsys, "w2", "--a", str(pa), "--b", str(pb))[0] == 2


def test_diagnose_command(capsys, tmp_path, rng):
    x = rng.normal(size=(300, 2))
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_points(x, pa)
    write_points(x + 1.0, pb)
    code, out, _ = run(capsys, "diagnose", "--samples", str(pa), "--cyclic-order", "4",
                       "--pair", str(pb))
    rep = json.loads(out)
    assert code == 0 and rep["numerical_rank"] == 2 and list(rep["cyc_statistic"]) == ["4"]
    assert rep["translation_residual"] < 1e-7


def test_preset_command(capsys, tmp_path):
    code, out, _ = run(capsys, "preset", "--name", "exp1")
    assert code == 0 and json.loads(out)["y_star"] == [0.4, -0.2]
    path = tmp_path / "p.json"
    assert run(capsys, "preset", "--name", "obsdep", "--out", str(path))[0] == 0
    assert json.loads(path.read_text())["name"] == "obsdep"


def test_run_command(capsys, tmp_path):
    cfg = json.loads(run(capsys, "preset", "--name", "exp1")[1])
    cfg.update(n_grid=[8, 16], replicates=2)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "run", "--config", str(path), "--out-dir", str(out_dir), "--quiet")
    assert code == 0 and out == ""
    for name in ("results.json", "w2_long.csv", "w2_summary.csv", "run_info.json"):
        assert (out_dir / name).exists()
    assert "wall_time_s" not in (out_dir / "results.json").read_text()


def test_run_rejects_bad_config(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"name": "x", "model": {}, "y_star": [0], "replicates": 0}))
    assert run(capsys, "run", "--config", str(path), "--out-dir", str(tmp_path / "o"))[0] == 2
    assert run(capsys, "run", "--config", str(tmp_path / "missing.json"),
               "--out-dir", str(tmp_path / "o"))[0] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "enku", "preset", "--name", "sdec"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["name"] == "sdec"


def test_missing_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2
