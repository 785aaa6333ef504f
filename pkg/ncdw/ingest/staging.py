import csv
import io
import json
import logging
import os
import re
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from ncdw.core.errors import StorageError, UnknownBatchError
from ncdw.ingest.standardize import StagedRecord

logger = logging.getLogger(__name__)

# staging folder inside a warehouse root
STAGING_DIR = "staging"
_BATCH_FILE = re.compile(r"^batch_(\d{6})\.json$")


@dataclass(frozen=True)
class StagedBatch:
    batch_id: int
    source_id: str
    rows_in: int
    rejected: int
    deduplicated: int
    records: list

    @property
    def staged(self):
        return len(self.records)


def _atomic_write(path, text):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except OSError as e:
        Path(tmp).unlink(missing_ok=True)
        raise StorageError(f"cannot write {path}: {e}") from e


def deduplicate(records):
    """Drop repeated (pik, time, test code) rows, keeping the last occurrence"""
    latest = {}
    for position, record in enumerate(records):
        latest[record.dedup_key] = position
    keep = sorted(latest.values())
    return [records[i] for i in keep]


class StagingStore:
    """
    Directory of immutable staged batches.

    Each batch is one JSON document written atomically; rejects go to a
    sidecar TSV next to it. Appends are serialized per store.
    """
    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageError(f"cannot create staging directory {self.root}: {e}") from e

    def batch_path(self, batch_id):
        return self.root / f"batch_{batch_id:06d}.json"

    def rejects_path(self, batch_id):
        return self.root / f"batch_{batch_id:06d}.rejects.tsv"

    def batch_ids(self):
        ids = []
        for entry in self.root.iterdir():
            match = _BATCH_FILE.match(entry.name)
            if match:
                ids.append(int(match.group(1)))
        return sorted(ids)

    def stage_batch(self, records, source_id="", rejects=(), rows_in=None):
        """
        Persist a standardized batch and return its id.

        Duplicate rows inside the batch are removed (last one wins) before
        writing; nothing becomes visible unless the whole batch was written.
        """
        unique = deduplicate(list(records))
        deduplicated = len(records) - len(unique)
        rejects = list(rejects)
        if rows_in is None:
            rows_in = len(records) + len(rejects)

        with self._lock:
            existing = self.batch_ids()
            batch_id = existing[-1] + 1 if existing else 1
            document = {
                "batch_id": batch_id,
                "source_id": source_id,
                "rows_in": rows_in,
                "rejected": len(rejects),
                "deduplicated": deduplicated,
                "records": [record.to_json() for record in unique],
            }
            if rejects:
                self._write_rejects(batch_id, rejects)
            try:
                _atomic_write(self.batch_path(batch_id), json.dumps(document, sort_keys=True, separators=(",", ":")))
            except StorageError:
                self.rejects_path(batch_id).unlink(missing_ok=True)
                raise

        logger.info("staged batch %d from '%s': %d records, %d rejected, %d duplicates dropped",
                    batch_id, source_id, len(unique), len(rejects), deduplicated)
        return batch_id

    def _write_rejects(self, batch_id, rejects):
        buffer = io.StringIO()
        writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
        writer.writerow(("row_number", "reason", "detail"))
        for reject in rejects:
            writer.writerow((reject.row_number, reject.reason, reject.detail))
        _atomic_write(self.rejects_path(batch_id), buffer.getvalue())

    def read_batch(self, batch_id):
        """Load a staged batch back into StagedRecords"""
        path = self.batch_path(batch_id)
        if not path.exists():
            raise UnknownBatchError(f"no staged batch {batch_id} in {self.root}")
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise StorageError(f"cannot read staged batch {path}: {e}") from e
        return StagedBatch(
            batch_id=document["batch_id"],
            source_id=document["source_id"],
            rows_in=document["rows_in"],
            rejected=document["rejected"],
            deduplicated=document["deduplicated"],
            records=[StagedRecord.from_json(item) for item in document["records"]],
        )


def stage_batch(records, staging, source_id="", rejects=(), rows_in=None):
    """Stage standardized records into a StagingStore; returns the batch id"""
    return staging.stage_batch(records, source_id=source_id, rejects=rejects, rows_in=rows_in)
