import numpy as np
import pytest
import yaml

from surfadmit.config import ConfigError, load_config, parse_config
from surfadmit.shapes import sphere, write_msh

BASE = {
    "scene": {"scatterers": [{"sphere": {"radius": 0.5, "triangles": 80}, "material": {"eps_r": 2.25}}]},
    "frequencies": ["100 MHz", 2e8],
    "solvers": ["single_source", "mie"],
}


def _with(**kw):
    d = yaml.safe_load(yaml.safe_dump(BASE))
    d.update(kw)
    return d


def test_defaults(tmp_path):
    cfg = parse_config(_with(), tmp_path)
    assert cfg.frequencies == (1e8, 2e8)
    assert cfg.alpha == 0.5 and cfg.avg_weight == 0.5 and cfg.efie_testing == "normal"
    assert [c.label for c in cfg.cuts] == ["phi0", "phi90"]
    assert cfg.output_dir == tmp_path / "results"
    assert cfg.sphere.radius == 0.5 and cfg.scene.n == 120


@pytest.mark.parametrize("given,expected", [
    ({"start": "100 MHz", "stop": "0.3 GHz", "count": 3}, (1e8, 2e8, 3e8)),
    ({"start": 240e6, "stop": 250e6, "step": "2 MHz"}, tuple(240e6 + 2e6 * i for i in range(6))),
    ("5 kHz", (5e3,)),
    (7.5e7, (7.5e7,)),
])
def test_frequency_forms(tmp_path, given, expected):
    got = parse_config(_with(frequencies=given), tmp_path).frequencies
    np.testing.assert_allclose(got, expected, rtol=1e-12)


@pytest.mark.parametrize("patch,path", [
    (dict(alpha=1.5), "alpha"),
    (dict(alpha=0), "alpha"),
    (dict(avg_weight=-0.1), "avg_weight"),
    (dict(solvers=["fmm"]), "solvers[0]"),
    (dict(solvers=[]), "solvers"),
    (dict(frequencies=["-1 MHz"]), "frequencies[0]"),
    (dict(frequencies={"start": 1e8, "stop": 2e8}), "frequencies"),
    (dict(frequencies="ten MHz"), "frequencies"),
    (dict(cuts=[{"phi": 0, "theta": 10}]), "cuts[0]"),
    (dict(excitation={"direction": [0, 0, 1], "polarization": [0, 0, 1]}), "excitation"),
    (dict(colour="red"), "colour"),
    (dict(quadrature={"far_points": 0}), "quadrature.far_points"),
    (dict(efie_testing="both"), "efie_testing"),
])
def test_invalid_fields_are_named(tmp_path, patch, path):
    with pytest.raises(ConfigError) as err:
        parse_config(_with(**patch), tmp_path)
    assert err.value.path == path


def test_alpha_message():
    with pytest.raises(ConfigError, match=r"0 < alpha < 1, got 1.5"):
        parse_config(_with(alpha=1.5))


def test_mie_needs_one_plain_sphere(tmp_path):
    scat = BASE["scene"]["scatterers"] * 1 + [
        {"sphere": {"radius": 0.5, "triangles": 80, "center": [3, 0, 0]}, "material": {"eps_r": 2.0}}]
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(_with(scene={"scatterers": scat}), tmp_path)
    with pytest.raises(ConfigError, match="free space"):
        parse_config(_with(scene={"exterior": {"eps_r": 2.0}, "scatterers": BASE["scene"]["scatterers"]}), tmp_path)


def test_active_and_complex_materials(tmp_path):
    scat = [{"sphere": {"radius": 0.5, "triangles": 80}, "material": {"eps_r": "4-0.5j"}}]
    cfg = parse_config(_with(scene={"scatterers": scat}), tmp_path)
    assert cfg.scene.scatterers[0].material.eps_r == 4 - 0.5j
    scat[0]["material"]["eps_r"] = [4.0, 0.5]
    with pytest.raises(ConfigError, match="active"):
        parse_config(_with(scene={"scatterers": scat}), tmp_path)


def test_mesh_paths_resolve_against_config(tmp_path):
    write_msh(sphere(0.3, 40, (0, 0, 0)), tmp_path / "ball.msh")
    (tmp_path / "run.yaml").write_text(yaml.safe_dump(_with(
        scene={"scatterers": [{"mesh": "ball.msh", "material": {"eps_r": 3}}]}, solvers=["pmchwt"],
        output={"directory": "out", "plots": False})))
    cfg = load_config(tmp_path / "run.yaml")
    assert cfg.scene.n == 60 and cfg.output_dir == tmp_path / "out" and not cfg.plots
    with pytest.raises(ConfigError, match="file not found"):
        parse_config(_with(scene={"scatterers": [{"mesh": "nope.msh"}]}, solvers=["pmchwt"]), tmp_path)


def test_intersecting_scatterers_rejected(tmp_path):
    scat = [{"sphere": {"radius": 0.5, "triangles": 80}}, {"sphere": {"radius": 0.5, "triangles": 80,
                                                                      "center": [0.4, 0, 0]}}]
    with pytest.raises(ConfigError, match="intersect"):
        parse_config(_with(scene={"scatterers": scat}, solvers=["pmchwt"]), tmp_path)


def test_unreadable_yaml(tmp_path):
    p = tmp_path / "x.yaml"
    p.write_text("scene: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.yaml")
