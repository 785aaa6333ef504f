import csv
import logging
import os
import tempfile
import threading
from enum import Enum
from pathlib import Path

from ncdw.core.errors import StorageError
from ncdw.core.types import PIK, Gender
from ncdw.linkage.link_key import LinkKey

logger = logging.getLogger(__name__)

INDEX_FILE = "linkage_index.tsv"
_COLUMNS = ("pik", "token_codes", "age_band", "gender", "geo")


class MatchGrade(str, Enum):
    EXACT = "exact"
    NEAR = "near"


class LinkageIndex:
    """
    Blocking index over previously ingested link keys.

    Entries are blocked on the sorted multiset of token codes; candidates
    inside a block are filtered on gender and age band. Writers add whole
    batches under a lock, readers query between batches.
    """
    def __init__(self):
        self._blocks = {}
        self._lock = threading.RLock()

    def __len__(self):
        with self._lock:
            return sum(len(block) for block in self._blocks.values())

    def add(self, link_key, pik):
        """Register one link key under its PIK"""
        self.add_batch([(link_key, pik)])

    def add_batch(self, entries):
        """Register several (link_key, pik) pairs atomically with respect to readers"""
        with self._lock:
            for link_key, pik in entries:
                block = self._blocks.setdefault(link_key.code_block, {})
                block[(str(pik), link_key)] = None

    def match(self, query):
        """Candidates for a query key, exact grades first"""
        with self._lock:
            block = list(self._blocks.get(query.code_block, {}))

        results = {}
        for pik, candidate in block:
            grade = _grade(query, candidate)
            if grade is None:
                continue
            # A PIK matched exactly once stays exact
            if results.get(pik) != MatchGrade.EXACT:
                results[pik] = grade
        order = {MatchGrade.EXACT: 0, MatchGrade.NEAR: 1}
        return sorted(((PIK(pik), grade) for pik, grade in results.items()),
                      key=lambda item: (order[item[1]], item[0].value))

    def save(self, path):
        """Persist the index as TSV (atomic replace)"""
        path = Path(path)
        with self._lock:
            rows = [
                (pik, ",".join(key.token_codes), key.age_band, key.gender.value, "" if key.geo is None else key.geo)
                for block in self._blocks.values() for pik, key in block
            ]
        rows.sort(key=lambda row: tuple(str(part) for part in row))
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".index-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
                writer.writerow(_COLUMNS)
                writer.writerows(rows)
            os.replace(tmp, path)
        except OSError as e:
            Path(tmp).unlink(missing_ok=True)
            raise StorageError(f"cannot write linkage index {path}: {e}") from e

    @classmethod
    def load(cls, path):
        """Load an index saved by save(); a missing file yields an empty index"""
        index = cls()
        path = Path(path)
        if not path.exists():
            return index
        try:
            with open(path, newline="", encoding="utf-8") as handle:
                reader = csv.DictReader(handle, delimiter="\t")
                entries = [
                    (LinkKey(tuple(row["token_codes"].split(",")), int(row["age_band"]),
                             Gender(row["gender"]), int(row["geo"]) if row["geo"] else None),
                     row["pik"])
                    for row in reader
                ]
        except (OSError, KeyError, ValueError) as e:
            raise StorageError(f"cannot read linkage index {path}: {e}") from e
        index.add_batch(entries)
        logger.info("loaded %d linkage entries", len(entries))
        return index


def _grade(query, candidate):
    if query.gender != candidate.gender and Gender.UNKNOWN not in (query.gender, candidate.gender):
        return None
    band_gap = abs(query.age_band - candidate.age_band)
    if band_gap > 1:
        return None
    if band_gap == 0 and query.gender == candidate.gender and query.geo == candidate.geo:
        return MatchGrade.EXACT
    return MatchGrade.NEAR


def match_records(query, index):
    """
    Find previously ingested patients matching a link key.

    Args:
        query: LinkKey to look up
        index: LinkageIndex built from earlier ingestion

    Returns:
        list: (PIK, MatchGrade) pairs; empty when nothing matches
    """
    return index.match(query)
