import csv
import json
from pathlib import Path

import numpy as np
import pytest

from rainbow_sensor.cli import main
from rainbow_sensor.io import read_spectrum_csv, read_signal_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def rows(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_single_sphere_spectrum(tmp_path):
    code, out = run(tmp_path, "spectrum", "--config", str(CONFIGS / "single_sphere.json"))
    assert code == 0
    (row,) = rows(out)
    assert float(row["lambda"]) == pytest.approx(3.0)
    assert float(row["re_omega_rad_s"]) == pytest.approx(np.sqrt(3e-3), rel=1e-14)
    assert float(row["im_omega_rad_s"]) == pytest.approx(-1.5e-3, rel=1e-14)
    assert row["dominant"] == "1"


def test_device_spectrum_orders_resonators(tmp_path):
    code, out = run(tmp_path, "spectrum", "--config", str(CONFIGS / "device22.json"))
    assert code == 0
    table = rows(out)
    assert len(table) == 22
    dom = [int(r["dominant"]) for r in table]
    assert all(a > b for a, b in zip(dom, dom[1:]))
    hz = np.array([float(r["re_omega_hz"]) for r in table])
    assert hz.min() > 1e3 and hz.max() < 1e5


def test_manifest_line_and_sidecar(tmp_path):
    code, out = run(tmp_path, "spectrum", "--config", str(CONFIGS / "single_sphere.json"))
    assert code == 0
    first = out.read_text().splitlines()[0]
    assert first.startswith("# manifest tool=rainbow_sensor")
    side = json.loads((tmp_path / "out.csv.manifest.json").read_text())
    assert side["command"] == "spectrum"
    assert side["config_sha256"] in first


def test_spectrum_json(tmp_path):
    js = tmp_path / "spec.json"
    code, _ = run(tmp_path, "spectrum", "--config", str(CONFIGS / "graded11.json"), "--json", str(js))
    assert code == 0
    data = json.loads(js.read_text())
    vecs = np.array(data["eigenvectors"])
    assert vecs.shape == (11, 11)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(11), atol=1e-12)


def test_malformed_config_names_key(tmp_path, capsys):
    cfg = write_config(tmp_path, {"spheres": [{"center": [0, 0, 0], "radius": 1.0}], "colour": 3,
                                  "material": {"delta": 1e-3, "v": 1.0, "v0": 1.0}})
    code, _ = run(tmp_path, "spectrum", "--config", str(cfg))
    assert code == 2
    assert "colour" in capsys.readouterr().err


def test_negative_radius_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, {"spheres": [{"center": [0, 0, 0], "radius": -1.0}],
                                  "material": {"delta": 1e-3, "v": 1.0, "v0": 1.0}})
    assert run(tmp_path, "spectrum", "--config", str(cfg))[0] == 2


def test_missing_config_and_bad_flag(tmp_path):
    assert run(tmp_path, "spectrum", "--config", str(tmp_path / "nope.json"))[0] == 2
    assert main(["spectrum", "--bogus"]) == 2


def test_cap_matrices(tmp_path):
    cfg = str(CONFIGS / "graded11.json")
    code, out = run(tmp_path, "cap", "--config", cfg, "--which", "generalized")
    assert code == 0
    m = np.array([[float(v) for k, v in r.items() if k != "label"] for r in rows(out)])
    assert m.shape == (11, 11)
    np.testing.assert_array_equal(m, m.T)
    assert np.all(np.diag(m) > 0)


def test_cap_bem(tmp_path):
    code, out = run(tmp_path, "cap", "--config", str(CONFIGS / "single_sphere.json"), "--method", "bem",
                    "--refine", "2")
    assert code == 0
    (row,) = rows(out)
    assert float(row["1"]) == pytest.approx(4 * np.pi, rel=1e-4)


def test_perturb_zero_sigma(tmp_path):
    code, out = run(tmp_path, "perturb", "--config", str(CONFIGS / "graded11.json"), "--sigma", "0",
                    "--trials", "5")
    assert code == 0
    table = rows(out)
    assert len(table) == 11
    assert all(float(r["mean_shift"]) == 0.0 and float(r["std_shift"]) == 0.0 for r in table)


def test_perturb_modes_differ_and_are_deterministic(tmp_path):
    cfg = str(CONFIGS / "graded11.json")
    args = ["perturb", "--config", cfg, "--sigma", "0.01,0.02", "--trials", "20", "--seed", "3"]
    _, a = run(tmp_path, *args, "--mode", "size", name="a.csv")
    _, b = run(tmp_path, *args, "--mode", "size", name="b.csv")
    _, c = run(tmp_path, *args, "--mode", "position", name="c.csv")
    assert a.read_bytes() == b.read_bytes()
    ra, rc = rows(a), rows(c)
    assert len(ra) == 22
    assert [r["mean_shift"] for r in ra] != [r["mean_shift"] for r in rc]


def test_remove_single(tmp_path):
    code, out = run(tmp_path, "remove", "--config", str(CONFIGS / "graded11.json"), "--indices", "5")
    assert code == 0
    table = rows(out)
    assert len(table) == 10
    assert all(r["interlaced"] == "true" for r in table)
    for r in table:
        assert float(r["lambda_j_before"]) <= float(r["mu_j"]) <= float(r["lambda_j1_before"])
    assert "interlaced=true" in out.read_text()


def test_remove_sequence(tmp_path):
    code, out = run(tmp_path, "remove", "--config", str(CONFIGS / "graded11.json"), "--indices", "2,7,4")
    assert code == 0
    table = rows(out)
    assert [int(r["step"]) for r in table] == [1] * 10 + [2] * 9 + [3] * 8
    assert {r["removed_label"] for r in table} == {"2", "7", "4"}


@pytest.mark.parametrize("indices", ["12", "0", "3,3"])
def test_remove_bad_indices(tmp_path, indices):
    assert run(tmp_path, "remove", "--config", str(CONFIGS / "graded11.json"), "--indices", indices)[0] == 2


def test_scale_sweep(tmp_path):
    code, out = run(tmp_path, "scale", "--n", "1,10,50,100", "--c", "0.5")
    assert code == 0
    table = rows(out)
    assert [int(r["n"]) for r in table] == [1, 10, 50, 100]
    assert all(r["all_inside"] == "true" for r in table)
    assert float(table[0]["lambda_min"]) == pytest.approx(3.0)
    assert all(float(r["lambda_max"]) <= 6.0 for r in table)


def test_scale_inadmissible(tmp_path, capsys):
    code, _ = run(tmp_path, "scale", "--n", "100", "--c", "50")
    assert code == 2
    assert "inadmissible" in capsys.readouterr().err


def test_filter_impulse(tmp_path):
    spec = tmp_path / "spec.csv"
    main(["spectrum", "--config", str(CONFIGS / "device22.json"), "--out", str(spec)])
    omegas = read_spectrum_csv(spec)
    assert len(omegas) == 22
    code, out = run(tmp_path, "filter", "--spectrum", str(spec), "--impulse", "4", "--sample-rate", "441000")
    assert code == 0
    table = rows(out)
    assert float(table[0]["a1"]) == 0.0
    t1 = float(table[1]["t"])
    assert float(table[1]["a1"]) == pytest.approx(np.exp(omegas[0].imag * t1) * np.sin(omegas[0].real * t1) / 441000,
                                                  rel=1e-12)


def test_filter_signal_response_and_bands(tmp_path):
    cfg = write_config(tmp_path, {"spheres": [{"center": [0, 0, 0], "radius": 1.0},
                                              {"center": [30, 0, 0], "radius": 1.3}],
                                  "material": {"delta": 1e-2, "v": 1000.0, "v0": 1000.0}})
    sig = tmp_path / "sig.csv"
    sig.write_text("sample_rate_hz=2000\n" + "\n".join(str(x) for x in [0.0, 1.0, 0.5, -0.25]) + "\n")
    assert read_signal_csv(sig).sample_rate == 2000.0
    resp, bands = tmp_path / "resp.csv", tmp_path / "bands.csv"
    code, out = run(tmp_path, "filter", "--config", str(cfg), "--signal", str(sig), "--response", str(resp),
                    "--bands", str(bands))
    assert code == 0
    assert len(rows(out)[0]) == 3
    kinds = [r["kind"] for r in rows(bands)]
    assert kinds.count("band") == 2
    assert "gap" in kinds
    assert set(rows(resp)[0]) == {"freq_hz", "magnitude1", "magnitude2"}


def test_filter_requires_rate(tmp_path):
    assert run(tmp_path, "filter", "--config", str(CONFIGS / "single_sphere.json"))[0] == 2


def test_mode_field(tmp_path):
    pts = tmp_path / "pts.csv"
    pts.write_text("x,y,z\n0,20,0\n0,40,0\n")
    cfg = str(CONFIGS / "single_sphere.json")
    code, out = run(tmp_path, "mode-field", "--config", cfg, "--method", "bem", "--refine", "1",
                    "--mode-index", "1", "--points", str(pts))
    assert code == 0
    u = [abs(float(r["u"])) for r in rows(out)]
    assert u[0] / u[1] == pytest.approx(2.0, rel=1e-3)
    assert run(tmp_path, "mode-field", "--config", cfg, "--method", "bem", "--refine", "1",
               "--mode-index", "2", "--points", str(pts))[0] == 2


def test_stdout_output(capsys):
    assert main(["spectrum", "--config", str(CONFIGS / "single_sphere.json")]) == 0
    assert capsys.readouterr().out.startswith("# manifest")
