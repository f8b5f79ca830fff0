"""Portable ASCII field files (`.pfld`) and CSV export.

File layout::

    PFLD 1
    m=<int>
    counts=<int> ... <int>
    lower=<real> ...
    upper=<real> ...
    kind=scalar | kind=vector c=<m> | kind=skew | kind=alt3
    <whitespace-separated decimal values>

Values are written with 17 significant digits so a write/read round trip is
lossless for IEEE doubles. Scalar fields carry one block of node values in
flat C order (last axis fastest); vector fields carry m consecutive blocks;
skew fields m(m-1)/2 blocks in (i<j) lexicographic pair order; alternating
3-tensors C(m,3) blocks in lexicographic triple order.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .grids import (
    Alternating3Field,
    GridDomain,
    ScalarField,
    SingularMask,
    SkewField,
    VectorField,
    build_domain,
    pair_indices,
    triple_indices,
)

FORMAT_TAG = "PFLD 1"
_VALUES_PER_LINE = 8


class FieldFormatError(ValueError):
    """Raised for malformed `.pfld` content."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _blocks_of(field) -> tuple[str, list[np.ndarray]]:
    if isinstance(field, ScalarField):
        return "kind=scalar", [field.values]
    if isinstance(field, VectorField):
        m = field.domain.m
        return f"kind=vector c={m}", [field.values[k] for k in range(m)]
    if isinstance(field, SkewField):
        return "kind=skew", [field.entries[p] for p in range(field.entries.shape[0])]
    if isinstance(field, Alternating3Field):
        return "kind=alt3", [field.entries[p] for p in range(field.entries.shape[0])]
    raise TypeError(f"unsupported field type {type(field).__name__}")


def write_field(field, destination) -> None:
    """Write a field to `.pfld` text; the inverse of `read_field`."""
    kind_line, blocks = _blocks_of(field)
    domain = field.domain
    lines = [
        FORMAT_TAG,
        f"m={domain.m}",
        "counts=" + " ".join(str(n) for n in domain.counts),
        "lower=" + " ".join(_fmt(x) for x in domain.lower),
        "upper=" + " ".join(_fmt(x) for x in domain.upper),
        kind_line,
    ]
    for block in blocks:
        flat = block.ravel(order="C")
        for start in range(0, flat.size, _VALUES_PER_LINE):
            chunk = flat[start:start + _VALUES_PER_LINE]
            lines.append(" ".join(_fmt(x) for x in chunk))
    Path(destination).write_text("\n".join(lines) + "\n", encoding="ascii")


def _header_value(line: str, key: str) -> str:
    prefix = key + "="
    if not line.startswith(prefix):
        raise FieldFormatError(f"malformed header: expected '{key}=...', got {line!r}")
    return line[len(prefix):]


def read_field(source):
    """Read a `.pfld` file; returns the field type the header declares."""
    text = Path(source).read_text(encoding="ascii")
    lines = text.splitlines()
    if len(lines) < 6:
        raise FieldFormatError("malformed header: file too short")
    if lines[0].strip() != FORMAT_TAG:
        raise FieldFormatError(f"malformed header: bad format tag {lines[0]!r}")
    try:
        m = int(_header_value(lines[1].strip(), "m"))
        counts = [int(t) for t in _header_value(lines[2].strip(), "counts").split()]
        lower = [float(t) for t in _header_value(lines[3].strip(), "lower").split()]
        upper = [float(t) for t in _header_value(lines[4].strip(), "upper").split()]
    except ValueError as exc:
        if isinstance(exc, FieldFormatError):
            raise
        raise FieldFormatError(f"malformed header: {exc}") from exc
    try:
        domain = build_domain(m, lower, upper, counts)
    except ValueError as exc:
        raise FieldFormatError(f"malformed header: {exc}") from exc

    kind_tokens = lines[5].strip().split()
    kind = _header_value(kind_tokens[0], "kind")
    if kind == "scalar":
        nblocks = 1
    elif kind == "vector":
        if len(kind_tokens) != 2:
            raise FieldFormatError("malformed header: vector kind needs c=<m>")
        c = int(_header_value(kind_tokens[1], "c"))
        if c != m:
            raise FieldFormatError(f"malformed header: vector c={c} != m={m}")
        nblocks = m
    elif kind == "skew":
        nblocks = len(pair_indices(m))
    elif kind == "alt3":
        nblocks = len(triple_indices(m))
    else:
        raise FieldFormatError(f"malformed header: unknown kind {kind!r}")

    tokens = " ".join(lines[6:]).split()
    expected = nblocks * domain.node_count
    if len(tokens) != expected:
        raise FieldFormatError(
            f"count mismatch: expected {expected} values, found {len(tokens)}")
    values = np.empty(expected)
    for i, tok in enumerate(tokens):
        try:
            x = float(tok)
        except ValueError as exc:
            raise FieldFormatError(f"bad numeric token {tok!r}") from exc
        if not math.isfinite(x):
            raise FieldFormatError(f"non-finite token {tok!r}")
        values[i] = x

    blocks = values.reshape((nblocks,) + domain.counts)
    if kind == "scalar":
        return ScalarField(domain, blocks[0])
    if kind == "vector":
        return VectorField(domain, blocks)
    if kind == "skew":
        return SkewField(domain, blocks)
    return Alternating3Field(domain, blocks)


def read_scalar(source) -> ScalarField:
    field = read_field(source)
    if not isinstance(field, ScalarField):
        raise FieldFormatError(f"{source}: expected a scalar field")
    return field


def read_vector(source) -> VectorField:
    field = read_field(source)
    if not isinstance(field, VectorField):
        raise FieldFormatError(f"{source}: expected a vector field")
    return field


def _csv_columns(field) -> tuple[list[str], list[np.ndarray]]:
    if isinstance(field, ScalarField):
        return ["value"], [field.values]
    if isinstance(field, VectorField):
        m = field.domain.m
        return [f"v{k + 1}" for k in range(m)], [field.values[k] for k in range(m)]
    if isinstance(field, SkewField):
        names = [f"h_{i + 1}_{j + 1}" for i, j in field.pairs]
        return names, [field.entries[p] for p in range(len(names))]
    if isinstance(field, Alternating3Field):
        names = [f"t_{k + 1}_{i + 1}_{j + 1}" for k, i, j in field.triples]
        return names, [field.entries[p] for p in range(len(names))]
    if isinstance(field, SingularMask):
        return ["flag"], [field.flags.astype(float)]
    raise TypeError(f"unsupported field type {type(field).__name__}")


def write_csv(field, destination) -> None:
    """One row per node: coordinates then value(s), flat C node order."""
    domain: GridDomain = field.domain
    names, cols = _csv_columns(field)
    coords = [mesh.ravel(order="C") for mesh in domain.meshes()]
    flats = [col.ravel(order="C") for col in cols]
    header = ",".join([f"x{k + 1}" for k in range(domain.m)] + names)
    lines = [header]
    for idx in range(domain.node_count):
        row = [_fmt(c[idx]) for c in coords] + [_fmt(f[idx]) for f in flats]
        lines.append(",".join(row))
    Path(destination).write_text("\n".join(lines) + "\n", encoding="ascii")
