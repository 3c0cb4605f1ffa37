"""Field snapshots and counterexample dumps.

A snapshot is an ``.npz`` archive with two arrays:

- ``values``: the field payload in row-major order, shaped
  (C(N,q), *shape) for forms or (N, C(N,q), *shape) for row fields;
- ``header``: a JSON string with ``format_version``, ``field_type``, ``N``,
  ``q``, ``shape``, ``h``, ``origin``, ``component_order``, ``bc_mode`` and
  ``domain``. Counterexample dumps add ``assertion``, ``ratios`` and
  ``constants``.

Archives load with ``allow_pickle=False``.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any

import numpy as np

from src.services.exterior_core import component_labels
from src.services.grid_fields import (
    AnyField,
    BCMode,
    CurlField,
    DomainMask,
    FormField,
    RowField,
    TensorField,
    VectorField,
)
from src.utils.error_handler import IncompatibleFieldsError

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT_VERSION = 1

_ROW_TYPES: dict[str, type[RowField]] = {
    "VectorField": VectorField,
    "TensorField": TensorField,
    "CurlField": CurlField,
}


def snapshot_header(f: AnyField) -> dict[str, Any]:
    """JSON-serializable description of a field's layout."""
    mask = f.mask
    return {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "field_type": type(f).__name__,
        "N": mask.N,
        "q": f.q,
        "shape": list(mask.shape),
        "h": mask.h,
        "origin": list(mask.origin),
        "component_order": component_labels(mask.N, f.q),
        "bc_mode": f.bc_mode.value,
        "domain": mask.descriptor(),
    }


def export_snapshot(
    f: AnyField, path: str | Path, extra: dict[str, Any] | None = None
) -> Path:
    """Write ``f`` to ``path`` (``.npz`` appended if missing)."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)

    header = snapshot_header(f)
    header.update(extra or {})
    payload = f.components if isinstance(f, FormField) else f.values
    np.savez(path, values=np.ascontiguousarray(payload), header=np.array(json.dumps(header, sort_keys=True)))
    logger.debug(f"Wrote snapshot {path}", extra={"field_type": header["field_type"]})
    return path


def load_snapshot(path: str | Path) -> tuple[np.ndarray, dict[str, Any]]:
    """Raw values and header of a snapshot."""
    with np.load(Path(path), allow_pickle=False) as archive:
        values = archive["values"].copy()
        header = json.loads(str(archive["header"]))
    return values, header


def restore_field(path: str | Path, mask: DomainMask) -> AnyField:
    """Rebuild a field on ``mask``; the mask must match the snapshot's grid."""
    values, header = load_snapshot(path)
    if tuple(header["shape"]) != mask.shape or not np.isclose(header["h"], mask.h):
        raise IncompatibleFieldsError(
            "Snapshot grid does not match the mask",
            details={"snapshot_shape": header["shape"], "mask_shape": list(mask.shape)},
        )
    bc_mode = BCMode(header["bc_mode"])
    field_type = header["field_type"]
    if field_type == "FormField":
        return FormField(mask, int(header["q"]), values, bc_mode)
    if field_type not in _ROW_TYPES:
        raise IncompatibleFieldsError(f"Unknown field type {field_type!r} in snapshot")
    return _ROW_TYPES[field_type](mask, values, bc_mode)


def dump_counterexample(
    f: AnyField,
    assertion: str,
    ratios: dict[str, float],
    constants: dict[str, Any],
    directory: str | Path,
    tag: str = "",
) -> Path:
    """Snapshot of a field that broke ``assertion``, with the ratios and constants involved."""
    safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", f"{assertion}_{tag}".strip("_"))
    path = Path(directory) / f"counterexample_{safe}.npz"
    extra = {"assertion": assertion, "ratios": ratios, "constants": constants}
    written = export_snapshot(f, path, extra)
    logger.warning(f"Counterexample for {assertion} written to {written}", extra={"ratios": ratios})
    return written
