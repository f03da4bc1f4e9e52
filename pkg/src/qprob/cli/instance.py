"""
JSON instance files.

Layout::

    {
      "dim": 2,
      "points": ["x1", "x2"],
      "measures":   {"nu":  {"x1": M, "x2": M}},
      "qrvs":       {"psi": {"x1": M, "x2": M}},
      "partitions": {"F":   [["x1"], ["x2"]]}
    }

Each ``M`` is a row-major ``dim x dim`` nested list whose entries are
``[re, im]`` pairs (a bare number is accepted as a real entry).  Matrices
whose asymmetry is at most ``SILENT_ASYMMETRY`` are symmetrized quietly, up
to ``MAX_ASYMMETRY`` with an :class:`AsymmetryWarning`, and rejected beyond.
A measure whose atoms sum to the identity is loaded as a probability measure.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DimensionError, InstanceError, NotPSDError, PreconditionError
from ..herm import DEFAULT_TOL, Tolerances
from ..measure import Partition, QuantumMeasure, SampleSpace
from ..qrv import QuantumRandomVariable

SILENT_ASYMMETRY = 1e-9
MAX_ASYMMETRY = 1e-6


class AsymmetryWarning(UserWarning):
    """A matrix in an instance file was slightly non-Hermitian and was symmetrized."""


@dataclass
class Instance:
    space: SampleSpace
    dim: int
    measures: dict[str, QuantumMeasure] = field(default_factory=dict)
    qrvs: dict[str, QuantumRandomVariable] = field(default_factory=dict)
    partitions: dict[str, Partition] = field(default_factory=dict)

    def _get(self, kind: str, name: str):
        table = getattr(self, kind)
        if name not in table:
            raise KeyError(f"no {kind[:-1]} named {name!r} (available: {sorted(table)})")
        return table[name]

    def measure(self, name: str) -> QuantumMeasure:
        return self._get("measures", name)

    def qrv(self, name: str) -> QuantumRandomVariable:
        return self._get("qrvs", name)

    def partition(self, name: str) -> Partition:
        return self._get("partitions", name)


def encode_matrix(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def _entry(z, path: str) -> complex:
    if isinstance(z, bool):
        raise InstanceError("expected a number or [re, im] pair", path)
    if isinstance(z, (int, float)):
        return complex(z)
    if isinstance(z, list) and len(z) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in z):
        return complex(z[0], z[1])
    raise InstanceError("expected a number or [re, im] pair", path)


def decode_matrix(raw, dim: int, path: str, hermitian: bool = True) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != dim:
        raise InstanceError(f"expected {dim} rows", path)
    M = np.empty((dim, dim), dtype=complex)
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != dim:
            raise InstanceError(f"expected {dim} entries", f"{path}[{i}]")
        for j, z in enumerate(row):
            M[i, j] = _entry(z, f"{path}[{i}][{j}]")
    if not np.all(np.isfinite(M)):
        raise InstanceError("non-finite entry", path)
    if hermitian:
        diff = np.abs(M - M.conj().T)
        worst = float(diff.max())
        if worst > MAX_ASYMMETRY:
            i, j = np.unravel_index(int(np.argmax(diff)), diff.shape)
            raise InstanceError(f"matrix is not Hermitian: |M[{i}][{j}] - conj(M[{j}][{i}])| = {worst:.3e}", f"{path}[{i}][{j}]")
        if worst > SILENT_ASYMMETRY:
            warnings.warn(f"{path}: symmetrized matrix with asymmetry {worst:.3e}", AsymmetryWarning, stacklevel=2)
        M = 0.5 * (M + M.conj().T)
    return M


def _pointwise(raw, space: SampleSpace, dim: int, path: str) -> np.ndarray:
    if not isinstance(raw, dict):
        raise InstanceError("expected an object mapping point labels to matrices", path)
    extra = set(raw) - set(space.labels)
    if extra:
        raise InstanceError(f"unknown points {sorted(extra)}", path)
    missing = [x for x in space.labels if x not in raw]
    if missing:
        raise InstanceError(f"missing points {missing}", path)
    return np.array([decode_matrix(raw[x], dim, f"{path}.{x}") for x in space.labels])


def _section(doc: dict, key: str) -> dict:
    sec = doc.get(key, {})
    if not isinstance(sec, dict):
        raise InstanceError("expected an object", f"$.{key}")
    return sec


def instance_from_dict(doc, tol: Tolerances = DEFAULT_TOL) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceError("top level must be an object")
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise InstanceError("dim must be a positive integer", "$.dim")
    points = doc.get("points")
    if not isinstance(points, list) or not points or not all(isinstance(p, str) for p in points):
        raise InstanceError("points must be a nonempty list of strings", "$.points")
    try:
        space = SampleSpace(tuple(points))
    except DimensionError as exc:
        raise InstanceError(str(exc), "$.points") from None
    inst = Instance(space, dim)

    for name, raw in _section(doc, "measures").items():
        path = f"$.measures.{name}"
        atoms = _pointwise(raw, space, dim, path)
        is_prob = np.linalg.norm(atoms.sum(axis=0) - np.eye(dim)) <= tol.residual
        try:
            inst.measures[name] = QuantumMeasure(space, atoms, bool(is_prob), tol)
        except (NotPSDError, PreconditionError, DimensionError) as exc:
            raise InstanceError(str(exc), path) from None

    for name, raw in _section(doc, "qrvs").items():
        inst.qrvs[name] = QuantumRandomVariable(space, _pointwise(raw, space, dim, f"$.qrvs.{name}"))

    for name, raw in _section(doc, "partitions").items():
        path = f"$.partitions.{name}"
        if not isinstance(raw, list) or not all(isinstance(b, list) for b in raw):
            raise InstanceError("expected a list of label lists", path)
        for k, b in enumerate(raw):
            unknown = [x for x in b if x not in space.labels]
            if unknown:
                raise InstanceError(f"unknown points {unknown}", f"{path}[{k}]")
        try:
            inst.partitions[name] = Partition.from_labels(space, raw)
        except DimensionError as exc:
            raise InstanceError(str(exc), path) from None
    return inst


def parse_instance(path, tol: Tolerances = DEFAULT_TOL) -> Instance:
    """Load and validate an instance file; raises :class:`InstanceError` on schema problems."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InstanceError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return instance_from_dict(doc, tol)


def instance_to_dict(inst: Instance) -> dict:
    labels = inst.space.labels

    def pointwise(stack):
        return {x: encode_matrix(M) for x, M in zip(labels, stack)}

    return {
        "dim": inst.dim,
        "points": list(labels),
        "measures": {k: pointwise(m.atoms) for k, m in inst.measures.items()},
        "qrvs": {k: pointwise(q.values) for k, q in inst.qrvs.items()},
        "partitions": {k: p.labels(inst.space) for k, p in inst.partitions.items()},
    }


def serialize_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"
