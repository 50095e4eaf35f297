import json

import numpy as np
import pytest

from ncdirichlet.algebra import Algebra
from ncdirichlet.constructions import custom_instance, reim_instance, thm51_instance, thm52_instance
from ncdirichlet.serialization import (FormatError, complex_from_json, complex_to_json, dumps,
                                       element_from_json, element_to_json, instance_from_json,
                                       instance_to_json, load_json, write_json_atomic)
from ncdirichlet.verdict import FAIL, PASS, SAMPLED_PASS, Verdict, combine


def test_complex_roundtrip():
    arr = np.array([[1 + 2j, -0.5j], [3.0, 0.0]])
    assert np.array_equal(complex_from_json(complex_to_json(arr)), arr)
    with pytest.raises(FormatError):
        complex_from_json([1.0, 2.0, 3.0])
    with pytest.raises(FormatError):
        complex_from_json("abc")


def test_element_roundtrip():
    alg = Algebra((2, 3), (0.5, 1.5))
    x = alg.random_element(np.random.default_rng(0))
    back = element_from_json(json.loads(json.dumps(element_to_json(x))))
    assert back.algebra == alg and back.allclose(x, atol=0)


def test_element_wrong_block_size():
    doc = element_to_json(Algebra((2,), (1.0,)).identity())
    doc["blocks"][0] = doc["blocks"][0][:3]
    with pytest.raises(FormatError):
        element_from_json(doc)


@pytest.mark.parametrize("make", [
    lambda: thm51_instance((2, 3), 2, 1),
    lambda: thm52_instance((2,), 2, 0),
    lambda: reim_instance((2,), 1),
    lambda: custom_instance("half"),
])
def test_instance_roundtrip(make):
    inst = make()
    doc = json.loads(dumps(instance_to_json(inst, {"tool": "test"})))
    back = instance_from_json(doc)
    assert back.label == inst.label and back.family == inst.family
    assert back.form.allclose(inst.form, atol=0)
    assert back.generator.allclose(inst.generator, atol=0)
    assert len(back.derivations) == len(inst.derivations)
    for a, b in zip(back.derivations, inst.derivations):
        assert a.allclose(b, atol=1e-15)
    if inst.coefficients is not None:
        assert np.array_equal(back.coefficients.entries, inst.coefficients.entries)
        assert back.coefficient_role == inst.coefficient_role


def test_instance_from_generator_only():
    inst = custom_instance("shift", (2,), 0)
    doc = instance_to_json(inst, {})
    del doc["form"]
    back = instance_from_json(doc)
    assert back.form.allclose(inst.form)


def test_instance_format_errors():
    doc = instance_to_json(thm51_instance((2,), 2, 0), {})
    with pytest.raises(FormatError):
        instance_from_json([])
    with pytest.raises(FormatError):
        instance_from_json({**doc, "schema": "instance-v9"})
    bad = dict(doc)
    bad["form"] = {"basis": "canonical-v1", "matrix": [[[0.0, 0.0]]]}
    with pytest.raises(FormatError):
        instance_from_json(bad)
    bad = {k: v for k, v in doc.items() if k not in ("form", "generator")}
    with pytest.raises(FormatError):
        instance_from_json(bad)


def test_load_json_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        load_json(str(p))
    with pytest.raises(FormatError):
        load_json(str(tmp_path / "missing.json"))


def test_atomic_write(tmp_path):
    target = tmp_path / "out.json"
    write_json_atomic(str(target), {"b": 1, "a": [1, 2]})
    assert json.loads(target.read_text()) == {"a": [1, 2], "b": 1}
    assert target.read_text().index('"a"') < target.read_text().index('"b"')
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]


def test_verdict_json_and_combine():
    alg = Algebra((2,), (1.0,))
    v = Verdict(FAIL, -0.25, alg.identity(), 10, 3, "demo", {"value": np.float64(1.5)})
    doc = json.loads(json.dumps(v.to_json()))
    assert doc["status"] == FAIL and doc["witness"]["block_dims"] == [2]
    assert doc["metadata"]["value"] == 1.5
    merged = combine([Verdict(PASS, 0.1), Verdict(SAMPLED_PASS, 0.05, samples=4)])
    assert merged.status == SAMPLED_PASS and merged.margin == pytest.approx(0.05)
    merged = combine([Verdict(PASS, 0.1), v])
    assert merged.failed and merged.witness is v.witness
    assert Verdict(PASS, -np.inf).to_json()["margin"] == "-inf"
