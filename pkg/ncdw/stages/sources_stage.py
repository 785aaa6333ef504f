import logging

from ncdw.bench.generator import DEFAULT_TOTAL_TESTS, generate_dengue_cohort, write_source_files
from ncdw.ingest.staging import STAGING_DIR, StagingStore
from ncdw.ingest.wrapper import SourceWrapper
from ncdw.linkage.index import INDEX_FILE, LinkageIndex
from ncdw.stages.base_stage import BaseStage
from ncdw.stages.warehouse_stage import LoadStage
from ncdw.utils.config import load_config

logger = logging.getLogger(__name__)


class GenerateStage(BaseStage):
    """
    Writes the planted dengue cohort as source files
    """
    name = "generate"

    def update(self):
        cohort = generate_dengue_cohort(seed=self.pipeline.seed,
                                        total_tests=self.pipeline.total_tests or DEFAULT_TOTAL_TESTS)
        paths = write_source_files(cohort, self.pipeline.out_dir / "sources", warehouse_root="../warehouse")
        self.context["cohort"] = cohort
        self.context["paths"] = paths
        self.pipeline.change_stage(IngestStage(self.pipeline))

    def render(self, summary):
        cohort = self.context["cohort"]
        summary.append(f"generate: {cohort.total_tests} dengue tests, {cohort.total_positives} positive, "
                       f"{len(cohort.weather_rows)} weather rows")


class IngestStage(BaseStage):
    """
    Runs every configured source through its wrapper into staging
    """
    name = "ingest"

    def enter(self):
        self.config = load_config(self.context["paths"]["config"])
        self.context["config"] = self.config
        self.staging = StagingStore(self.config.warehouse_root / STAGING_DIR)
        self.index = LinkageIndex.load(self.config.warehouse_root / INDEX_FILE)
        self.reports = []

    def update(self):
        secret = self.context["cohort"].demo_secret()
        # sources run one after the other so batch ids do not depend on thread timing
        for source in self.config.sources:
            wrapper = SourceWrapper(source.to_descriptor(), secret=secret, index=self.index)
            self.reports.append(wrapper.run(self.context["paths"][source.id], self.staging))
        self.index.save(self.config.warehouse_root / INDEX_FILE)
        self.context["staging"] = self.staging
        self.context["ingest_reports"] = self.reports

        self.pipeline.change_stage(LoadStage(self.pipeline))

    def render(self, summary):
        for report in self.reports:
            summary.append(f"ingest: {report.summary()}")
