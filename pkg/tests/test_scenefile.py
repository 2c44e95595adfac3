import json

import pytest

from conftest import build, scene_dict
from nonholo.errors import InputError, SceneSchemaError
from nonholo.gvf import Custom, Default
from nonholo.scenefile import builtin_scenes, load_scene, read_scene_text


def test_bundled_scenes_load():
    names = builtin_scenes()
    assert {"heisenberg", "integrable", "vertical_circle", "sign_flipped", "heisenberg_robust"} <= set(names)
    for n in names:
        loaded = load_scene(n)
        assert len(loaded.digest) == 64 and loaded.scene.polyline.length > 0


def test_weight_modes():
    assert load_scene("heisenberg").weights == Default()
    flipped = load_scene("sign_flipped").field()
    assert flipped.weights.a_lambda == 1
    robust = load_scene("heisenberg_robust").field()
    assert isinstance(robust.weights, Custom) and robust.weights.provenance["mode"] == "robust"


def test_load_from_path(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(read_scene_text("heisenberg"))
    assert load_scene(p).digest == load_scene("heisenberg").digest


@pytest.mark.parametrize("mutate,where", [
    (lambda r: r.update(extra=1), "<root>"),
    (lambda r: r["path"].update(delta=-1), "path/delta"),
    (lambda r: r["constraint"].update(beta=["1", "2"]), "constraint/beta"),
    (lambda r: r["weights"].update(mode="wild"), "weights/mode"),
    (lambda r: r["numerics"].update(integrator="euler"), "numerics/integrator"),
    (lambda r: r["path"].pop("seed"), "path"),
])
def test_schema_errors(mutate, where):
    raw = scene_dict()
    mutate(raw)
    with pytest.raises(SceneSchemaError) as info:
        build(raw)
    assert where in str(info.value)


def test_bad_expression_is_a_schema_error():
    raw = scene_dict()
    raw["path"]["f"] = "x1^2 + y"
    with pytest.raises(SceneSchemaError):
        build(raw)


def test_missing_scene():
    with pytest.raises(InputError):
        load_scene("nowhere_to_be_found")


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("[1,")
    with pytest.raises(SceneSchemaError):
        load_scene(p)


def test_numerics_applied():
    raw = scene_dict()
    raw["numerics"] = {"rng_seed": 9, "eps_conv": 1e-6, "integrator": "rk4"}
    s = build(raw).scene
    assert s.numerics.rng_seed == 9 and s.numerics.eps_conv == 1e-6 and s.numerics.integrator == "rk4"
    assert json.loads(json.dumps(raw)) == raw
