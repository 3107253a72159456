"""
Deterministic CSV / JSON artifacts tagged with the configuration hash.
"""
import csv
import io
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

SUMMARY = "summary.json"


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def to_jsonable(value: Any) -> Any:
    """Numpy scalars and arrays to plain Python; non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


class ArtifactWriter:
    """
    Writes the numeric tables and JSON documents of one experiment into a directory.

    Every file carries the config hash: CSV tables as a `# config_hash=<hex>` first line, JSON
    documents as a top-level `config_hash` key. Only the summary gets a timestamp.
    """

    def __init__(self, out_dir: Union[str, Path], config_hash: str):
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.written: List[Path] = []

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(path)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        buffer.write(f"# config_hash={self.config_hash}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{name}: row of length {len(row)} under a header of {len(header)} columns")
            writer.writerow([_cell(v) for v in row])
            count += 1
        path = self._target(name)
        path.write_text(buffer.getvalue(), encoding="utf-8")
        logger.debug("wrote %s (%d rows)", path, count)
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        document = dict(to_jsonable(payload))
        document["config_hash"] = self.config_hash
        path = self._target(name)
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.debug("wrote %s", path)
        return path

    def write_summary(self, payload: Dict[str, Any], generated_at: Union[str, None] = None) -> Path:
        """summary.json, the only artifact with a generation timestamp."""
        stamp = generated_at or datetime.now(timezone.utc).replace(microsecond=0).isoformat()
        document = dict(payload)
        document["generated_at"] = stamp
        document["artifacts"] = sorted(p.name for p in self.written)
        return self.write_json(SUMMARY, document)


def write_complex(writer: ArtifactWriter, complex_: Any) -> None:
    """Complex description JSON plus one coboundary triplet CSV per degree."""
    writer.write_json("complex.json", complex_.describe())
    for q in range(complex_.dimension):
        writer.write_csv(f"coboundary_{q}.csv", ("row", "col", "value"), complex_.coboundary_triplets(q))


def write_vectors(
    writer: ArtifactWriter, name: str, vectors: np.ndarray, branch_ids: Optional[Sequence[int]] = None
) -> Path:
    """
    Eigenvector snapshot keyed by (branch_id, cell_id): one row per cell, one column per branch.

    Columns are named branch_<id>; without `branch_ids` the ids are the column positions.
    """
    ids: Sequence[int] = range(vectors.shape[1]) if branch_ids is None else list(branch_ids)
    if len(ids) != vectors.shape[1]:
        raise ValueError(f"{len(ids)} branch ids for {vectors.shape[1]} vectors")
    header = ["cell_id"] + [f"branch_{b}" for b in ids]
    return writer.write_csv(name, header, ([i, *row] for i, row in enumerate(vectors.tolist())))
