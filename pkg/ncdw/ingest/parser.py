import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

from ncdw.core.errors import ParseError, RecordRejected, StorageError
from ncdw.ingest.descriptor import NUMERIC_FIELDS
from ncdw.ingest.units import parse_quantity, parse_result, parse_timestamp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawRecord:
    """One data row keyed by canonical field names (values still raw text)"""
    row_number: int
    source_id: str
    fields: dict


@dataclass(frozen=True)
class Reject:
    row_number: int
    reason: str
    detail: str = ""


@dataclass
class ParseResult:
    records: list
    rejects: list

    @property
    def rows_in(self):
        return len(self.records) + len(self.rejects)


def _read_text(file):
    try:
        if isinstance(file, (str, Path)):
            data = Path(file).read_bytes()
        elif isinstance(file, (bytes, bytearray)):
            data = bytes(file)
        else:
            data = file.read()
    except OSError as e:
        raise StorageError(f"cannot read source file: {e}") from e
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise ParseError(f"source file is not UTF-8: {e}") from e


def _check_row(fields, descriptor):
    for name in descriptor.required_fields:
        if not fields.get(name, "").strip():
            raise RecordRejected("missing", name)
    for name, value in fields.items():
        if not value.strip():
            continue
        if name in NUMERIC_FIELDS:
            parse_quantity(value)
        elif name == "result":
            parse_result(value)
        elif name in ("test_time", "obs_date"):
            parse_timestamp(value)


def parse_batch(descriptor, file):
    """
    Parse a delimited UTF-8 source file into raw records and rejects.

    Args:
        descriptor: SourceDescriptor of the source that produced the file
        file: path, bytes, or binary stream with a header row

    Returns:
        ParseResult: records keyed by canonical names plus per-row rejects
    """
    text = _read_text(file)
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"source '{descriptor.source_id}': file is empty") from None
    except csv.Error as e:
        raise ParseError(f"source '{descriptor.source_id}': bad header: {e}") from e

    header = [column.strip() for column in header]
    positions = {column: i for i, column in enumerate(header)}
    missing = [column for column in descriptor.field_map if column not in positions]
    if missing:
        raise ParseError(f"source '{descriptor.source_id}': header lacks mapped column(s) {', '.join(missing)}")

    records, rejects = [], []
    row_number = 1
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as e:
            row_number += 1
            rejects.append(Reject(row_number, "shape", str(e)))
            continue
        row_number += 1
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            rejects.append(Reject(row_number, "shape", f"expected {len(header)} columns, got {len(row)}"))
            continue
        fields = {
            canonical: row[positions[column]].strip()
            for column, canonical in descriptor.field_map.items() if column in positions
        }
        try:
            _check_row(fields, descriptor)
        except RecordRejected as e:
            rejects.append(Reject(row_number, e.reason, e.detail))
            continue
        records.append(RawRecord(row_number, descriptor.source_id, fields))

    if rejects:
        logger.warning("source '%s': %d of %d rows rejected at parse", descriptor.source_id,
                       len(rejects), len(rejects) + len(records))
    return ParseResult(records, rejects)
