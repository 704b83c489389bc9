"""Raw binary persistence for fields and boundary operators.

Volumetric fields are written as little-endian float64 (re, im) pairs in node
order with x varying fastest, next to a JSON sidecar header.  Round trips are
bit exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DomainMismatch, ValidationError
from .grid import Grid, ScalarField


def save_field(field: ScalarField, path) -> None:
    """Write ``<path>`` (raw pairs) and ``<path>.json`` (header)."""
    path = Path(path)
    v = field.values.astype(np.complex128, copy=False)
    flat = v.flatten(order="F")  # x fastest
    pairs = np.empty((flat.size, 2), dtype="<f8")
    pairs[:, 0] = flat.real
    pairs[:, 1] = flat.imag
    pairs.tofile(path)
    header = {
        "n_per_axis": field.grid.n_per_axis,
        "box_halfwidth": field.grid.box_halfwidth,
        "kind": field.kind,
    }
    path.with_name(path.name + ".json").write_text(json.dumps(header, indent=2))


def load_field(path) -> ScalarField:
    path = Path(path)
    header = json.loads(path.with_name(path.name + ".json").read_text())
    grid = Grid(header["n_per_axis"], header["box_halfwidth"])
    pairs = np.fromfile(path, dtype="<f8")
    if pairs.size != 2 * grid.node_count:
        raise ValidationError(f"field dump {path} has wrong length")
    pairs = pairs.reshape(-1, 2)
    flat = pairs[:, 0] + 1j * pairs[:, 1]
    values = flat.reshape(grid.shape, order="F")
    return ScalarField(grid, values, header.get("kind", "generic"))


def save_dtn(dtn, path) -> None:
    """Persist a DtN map as header JSON plus a raw complex matrix dump."""
    path = Path(path)
    m = dtn.matrix.astype(np.complex128, copy=False)
    pairs = np.empty((m.size, 2), dtype="<f8")
    pairs[:, 0] = m.real.ravel()
    pairs[:, 1] = m.imag.ravel()
    pairs.tofile(path)
    header = {
        "label": dtn.label,
        "n_boundary": int(m.shape[0]),
        "domain_hash": dtn.domain.fingerprint,
    }
    path.with_name(path.name + ".json").write_text(json.dumps(header, indent=2))


def load_dtn_matrix(path, domain):
    """Load a DtN matrix dump, refusing a mismatched domain.

    Returns ``(label, matrix)``; the caller rebuilds the DtnMap against its
    own Domain object (node ordering is part of the hash).
    """
    path = Path(path)
    header = json.loads(path.with_name(path.name + ".json").read_text())
    if header["domain_hash"] != domain.fingerprint:
        raise DomainMismatch(
            f"DtN dump {path} was produced on a different domain")
    n = header["n_boundary"]
    pairs = np.fromfile(path, dtype="<f8").reshape(-1, 2)
    if pairs.shape[0] != n * n:
        raise ValidationError(f"DtN dump {path} has wrong length")
    matrix = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(n, n)
    return header["label"], matrix
