from ncdw.ingest.descriptor import SourceDescriptor, SourceKind, load_code_map
from ncdw.ingest.parser import ParseResult, RawRecord, Reject, parse_batch
from ncdw.ingest.staging import StagedBatch, StagingStore, stage_batch
from ncdw.ingest.standardize import StagedRecord, Standardizer, standardize
from ncdw.ingest.wrapper import IngestReport, SourceWrapper, ingest_sources
