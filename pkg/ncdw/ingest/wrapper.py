import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ncdw.core.errors import InvalidNameError, RangeError, RecordRejected
from ncdw.ingest.descriptor import load_code_map
from ncdw.ingest.parser import Reject, parse_batch
from ncdw.ingest.staging import deduplicate
from ncdw.ingest.standardize import Standardizer

logger = logging.getLogger(__name__)


@dataclass
class IngestReport:
    source_id: str
    batch_id: int
    rows_in: int
    staged: int
    rejected: int
    deduplicated: int
    reject_reasons: Counter = field(default_factory=Counter)

    @property
    def conserved(self):
        return self.rows_in == self.staged + self.rejected + self.deduplicated

    def summary(self):
        reasons = ", ".join(f"{reason}={count}" for reason, count in sorted(self.reject_reasons.items()))
        return (f"source {self.source_id}: batch {self.batch_id}, {self.rows_in} rows in, {self.staged} staged, "
                f"{self.rejected} rejected, {self.deduplicated} duplicates dropped"
                + (f" ({reasons})" if reasons else ""))


class SourceWrapper:
    """
    Per-source adapter: extracts rows from a source file, cleans and
    standardizes them, pseudonymizes patients and forwards the batch to
    staging. Optionally records link keys in a linkage index.
    """
    def __init__(self, descriptor, secret=None, code_map=None, index=None):
        self.descriptor = descriptor
        if code_map is None:
            code_map = load_code_map(descriptor.code_map_path)
        self.standardizer = Standardizer(descriptor, code_map, secret)
        self.index = index

    def standardize_all(self, parsed):
        """Standardize parsed records; returns (records, link entries, rejects)"""
        records, links, rejects = [], [], list(parsed.rejects)
        for raw in parsed.records:
            try:
                record, link_key = self.standardizer.standardize(raw)
            except RecordRejected as e:
                rejects.append(Reject(raw.row_number, e.reason, e.detail))
                continue
            except RangeError as e:
                rejects.append(Reject(raw.row_number, "range", str(e)))
                continue
            except InvalidNameError as e:
                rejects.append(Reject(raw.row_number, "missing", str(e)))
                continue
            records.append(record)
            if link_key is not None:
                links.append((link_key, record.pik))
        rejects.sort(key=lambda reject: reject.row_number)
        return records, links, rejects

    def run(self, file, staging):
        """Ingest one source file into staging and report what happened"""
        parsed = parse_batch(self.descriptor, file)
        records, links, rejects = self.standardize_all(parsed)
        rows_in = len(records) + len(rejects)
        batch_id = staging.stage_batch(records, source_id=self.descriptor.source_id,
                                       rejects=rejects, rows_in=rows_in)
        if self.index is not None and links:
            self.index.add_batch(links)

        unique = len(deduplicate(records))
        report = IngestReport(
            source_id=self.descriptor.source_id,
            batch_id=batch_id,
            rows_in=rows_in,
            staged=unique,
            rejected=len(rejects),
            deduplicated=len(records) - unique,
            reject_reasons=Counter(reject.reason for reject in rejects),
        )
        if report.rejected:
            logger.warning(report.summary())
        else:
            logger.info(report.summary())
        return report


def ingest_sources(jobs, staging, workers=4):
    """
    Run several (wrapper, file) jobs in parallel.
    Staging appends are serialized by the staging store; reports come back in job order.
    """
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(wrapper.run, file, staging) for wrapper, file in jobs]
        return [future.result() for future in futures]
