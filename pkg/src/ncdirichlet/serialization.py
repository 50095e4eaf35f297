"""JSON encoding of algebras, elements, forms, superoperators and instances."""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .algebra import Algebra, Element
from .errors import NCDError

BASIS_TAG = "canonical-v1"
INSTANCE_SCHEMA = "instance-v1"
REPORT_SCHEMA = "report-v1"


class FormatError(NCDError, ValueError):
    """A JSON document does not match the expected schema."""


def _need(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise FormatError(f"{where}: missing field {key!r}")
    return d[key]


def complex_to_json(values) -> list:
    """Nested lists of ``[re, im]`` pairs, preserving the array shape."""
    arr = np.asarray(values, dtype=complex)
    if arr.ndim == 0:
        return [float(arr.real), float(arr.imag)]
    return [complex_to_json(v) for v in arr]


def complex_from_json(data, where: str = "matrix") -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: not a numeric array") from exc
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise FormatError(f"{where}: complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def algebra_to_json(alg: Algebra) -> dict:
    return {"block_dims": list(alg.block_dims), "trace_weights": list(alg.trace_weights)}


def algebra_from_json(d) -> Algebra:
    try:
        return Algebra(tuple(_need(d, "block_dims", "algebra")),
                       tuple(_need(d, "trace_weights", "algebra")))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"algebra: {exc}") from exc


def element_to_json(x: Element) -> dict:
    out = algebra_to_json(x.algebra)
    out["blocks"] = [complex_to_json(b.reshape(-1)) for b in x.blocks]
    return out


def element_from_json(d) -> Element:
    alg = algebra_from_json(d)
    blocks = _need(d, "blocks", "element")
    if not isinstance(blocks, list) or len(blocks) != alg.n_blocks:
        raise FormatError("element: wrong number of blocks")
    mats = []
    for b, n in zip(blocks, alg.block_dims):
        flat = complex_from_json(b, "element block")
        if flat.shape != (n * n,):
            raise FormatError(f"element: block needs {n * n} entries, got {flat.shape}")
        mats.append(flat.reshape(n, n))
    return Element(alg, mats)


def matrix_to_json(mat) -> dict:
    return {"basis": BASIS_TAG, "matrix": complex_to_json(mat)}


def matrix_from_json(d, alg: Algebra, where: str) -> np.ndarray:
    if _need(d, "basis", where) != BASIS_TAG:
        raise FormatError(f"{where}: unsupported basis {d['basis']!r}")
    mat = complex_from_json(_need(d, "matrix", where), where)
    if mat.shape != (alg.dim, alg.dim):
        raise FormatError(f"{where}: expected a {alg.dim}x{alg.dim} matrix, got {mat.shape}")
    return mat


def derivation_to_json(d) -> dict:
    if d.kind == "inner":
        return {"kind": "inner", "z": element_to_json(d.z)}
    return {"kind": "explicit", "matrix": complex_to_json(d.matrix)}


def derivation_from_json(d, alg: Algebra):
    from .derivations import explicit_derivation, inner_derivation
    kind = _need(d, "kind", "derivation")
    if kind == "inner":
        return inner_derivation(element_from_json(_need(d, "z", "derivation")))
    if kind == "explicit":
        mat = complex_from_json(_need(d, "matrix", "derivation"), "derivation")
        if mat.shape != (alg.dim, alg.dim):
            raise FormatError("derivation: matrix has the wrong shape")
        return explicit_derivation(alg, mat)
    raise FormatError(f"derivation: unknown kind {kind!r}")


def instance_to_json(inst, provenance: dict) -> dict:
    out = {"schema": INSTANCE_SCHEMA, "provenance": provenance, "label": inst.label,
           "family": inst.family, "seed": inst.seed, "algebra": algebra_to_json(inst.algebra),
           "derivations": [derivation_to_json(d) for d in inst.derivations],
           "form": matrix_to_json(inst.form.matrix),
           "generator": matrix_to_json(inst.generator.matrix)}
    if inst.coefficients is not None:
        out[inst.coefficient_role] = inst.coefficients.entries.tolist()
    if "z" in inst.metadata:
        out["z_list"] = [element_to_json(z) for z in inst.metadata["z"]]
    if "kind" in inst.metadata:
        out["kind"] = inst.metadata["kind"]
    return out


def instance_from_json(d):
    from .constructions import CoefficientMatrix, Instance
    from .forms import Form
    from .semigroups import SuperOperator
    if not isinstance(d, dict):
        raise FormatError("instance: top level must be an object")
    if d.get("schema", INSTANCE_SCHEMA) != INSTANCE_SCHEMA:
        raise FormatError(f"instance: unsupported schema {d.get('schema')!r}")
    alg = algebra_from_json(_need(d, "algebra", "instance"))
    has_form, has_gen = "form" in d, "generator" in d
    if not (has_form or has_gen):
        raise FormatError("instance: needs a form or a generator")
    form = matrix_from_json(d["form"], alg, "form") if has_form else None
    gen = matrix_from_json(d["generator"], alg, "generator") if has_gen else None
    if form is None:
        form = -gen
    if gen is None:
        gen = -form
    try:
        ds = [derivation_from_json(x, alg) for x in d.get("derivations", [])]
    except NCDError as exc:
        raise FormatError(f"derivation: {exc}") from exc
    coeffs, role = None, None
    for key in ("C", "A"):
        if key in d:
            coeffs, role = CoefficientMatrix(np.asarray(d[key], dtype=float)), key
    return Instance(d.get("label", "instance"), d.get("family", "custom"), alg,
                    Form(alg, form), SuperOperator(alg, gen, "generator"), ds, coeffs, role,
                    d.get("seed"), {"kind": d["kind"]} if "kind" in d else {})


def load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json_atomic(path: str, doc):
    """Write ``doc`` to ``path`` via a temporary file in the same directory and a rename."""
    text = dumps(doc)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ncd-", suffix=".json", dir=folder)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
