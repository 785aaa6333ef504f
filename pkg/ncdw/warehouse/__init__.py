from ncdw.warehouse.loader import (
    DENGUE_CODES, LoadReport, check_integrity, compact, load_batch, load_pending, national_positive_share,
    positive_share, refresh_positive_share,
)
from ncdw.warehouse.query import Condition, filter_frame, parse_predicate, scan, scan_frame
from ncdw.warehouse.schema import DIMENSIONS, FACTS, dimension_schema, fact_schema
from ncdw.warehouse.store import WarehouseStore
