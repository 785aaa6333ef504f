from ncdw.capacity.estimator import national_load, reference_inputs
from ncdw.stages.base_stage import BaseStage


class CapacityStage(BaseStage):
    """
    Estimates the national load, then closes the run with checksums
    """
    name = "capacity"

    def update(self):
        self.report = national_load(reference_inputs())
        artifacts = self.pipeline.artifacts
        artifacts.register("capacity", "capacity.csv")
        artifacts.write("capacity", self.report.to_csv())
        self.pipeline.finish()

    def render(self, summary):
        summary.append(f"capacity: {self.report.daily_total} records/day "
                       f"({self.report.govt_total} hospitals, {self.report.diagnostic_total} diagnostic)")
