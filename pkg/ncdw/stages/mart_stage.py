import logging

from ncdw.datamart.mart import MartSpec, derive_mart
from ncdw.datamart.report import build_mart_report, write_mart_report
from ncdw.datamart.series import month_label
from ncdw.stages.base_stage import BaseStage
from ncdw.stages.capacity_stage import CapacityStage

logger = logging.getLogger(__name__)

MART_NAME = "dengue"


class MartStage(BaseStage):
    """
    Derives the dengue mart and writes its analytics report
    """
    name = "mart"

    def update(self):
        config = self.context["config"]
        mart = derive_mart(MartSpec(MART_NAME, frozenset(config.dengue_codes)), self.context["store"])
        self.report = build_mart_report(mart, name=MART_NAME)
        write_mart_report(self.report, self.pipeline.artifacts, folder=MART_NAME)
        self.context["mart_report"] = self.report
        self.pipeline.change_stage(CapacityStage(self.pipeline))

    def render(self, summary):
        series = self.report.series
        summary.append(f"mart: {MART_NAME}, {int(series.tests.sum())} tests over {len(series)} months")
        headline = self.report.headline
        if headline is None:
            summary.append("mart: no outbreak flagged")
        else:
            summary.append(f"mart: outbreak onset {month_label(*headline.onset)}, "
                           f"peak {month_label(*headline.peak)}")
