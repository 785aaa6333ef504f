import logging

from ncdw.core.errors import IntegrityError
from ncdw.olap.standard import precompute_standard
from ncdw.stages.base_stage import BaseStage
from ncdw.stages.mart_stage import MartStage
from ncdw.warehouse.loader import check_integrity, load_pending
from ncdw.warehouse.store import WarehouseStore

logger = logging.getLogger(__name__)


class LoadStage(BaseStage):
    """
    Loads every pending staged batch, then runs StandardStage on top of
    itself before moving on to the mart
    """
    name = "load"

    def enter(self):
        config = self.context["config"]
        self.store = WarehouseStore(config.warehouse_root, config.reporting_zone_offset_minutes)
        self.reports = None
        self.summarized = False

    def update(self):
        if self.reports is not None:
            # StandardStage popped itself; the warehouse is ready
            self.pipeline.change_stage(MartStage(self.pipeline))
            return
        config = self.context["config"]
        self.reports = load_pending(self.context["staging"], self.store, tuple(config.dengue_codes))
        violations = check_integrity(self.store)
        if violations:
            raise IntegrityError("; ".join(violations))
        self.context["store"] = self.store
        self.pipeline.push_stage(StandardStage(self.pipeline))

    def render(self, summary):
        if self.summarized:
            return
        self.summarized = True
        for report in self.reports:
            summary.append(f"load: {report.summary()}")
        counts = self.store.dimension_row_counts()
        summary.append("load: dimensions " + ", ".join(f"{name}={count}" for name, count in counts.items()))


class StandardStage(BaseStage):
    """
    Writes the standard aggregates and returns to the stage below it
    """
    name = "standard"

    def update(self):
        self.results = precompute_standard(self.context["store"])
        artifacts = self.pipeline.artifacts
        for name, frame in self.results.items():
            artifacts.register(f"standard:{name}", f"standard/{name}.tsv")
            artifacts.write_frame(f"standard:{name}", frame, sep="\t", float_format=None)
        self.pipeline.pop_stage()

    def render(self, summary):
        summary.append("standard: " + ", ".join(f"{name}={len(frame)} cells" for name, frame in self.results.items()))
