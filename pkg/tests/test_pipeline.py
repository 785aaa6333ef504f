import pytest

from ncdw.cli import pipeline_demo
from ncdw.core.errors import UsageError
from ncdw.pipeline_state import MAX_STEPS, PipelineState
from ncdw.stages.base_stage import BaseStage


class LoopStage(BaseStage):
    name = "loop"

    def update(self):
        self.pipeline.change_stage(LoopStage(self.pipeline))


class RecordingStage(BaseStage):
    name = "recording"

    def enter(self):
        self.context.setdefault("events", []).append("enter")

    def exit(self):
        self.context["events"].append("exit")

    def update(self):
        self.pipeline.finish()

    def render(self, summary):
        summary.append("recorded")


def test_stage_lifecycle(tmp_path):
    pipeline = PipelineState(tmp_path)
    assert pipeline.run(RecordingStage(pipeline)) is pipeline
    assert pipeline.finished
    assert pipeline.current_stage is None
    assert pipeline.context["events"] == ["enter", "exit"]


def test_stage_stack(tmp_path):
    pipeline = PipelineState(tmp_path)
    first, second = RecordingStage(pipeline), RecordingStage(pipeline)
    pipeline.push_stage(first)
    pipeline.push_stage(second)
    assert pipeline.current_stage is second
    assert pipeline.pop_stage()
    assert pipeline.current_stage is first
    assert not pipeline.pop_stage()
    pipeline.update()
    assert pipeline.finished
    assert pipeline.summary == ["recorded"]
    assert pipeline.context["events"] == ["enter", "enter", "exit", "exit"]


class ParentStage(BaseStage):
    name = "parent"

    def update(self):
        if self.context.get("child_done"):
            self.pipeline.finish()
        else:
            self.pipeline.push_stage(ChildStage(self.pipeline))


class ChildStage(BaseStage):
    name = "child"

    def update(self):
        self.context["child_done"] = True
        assert self.pipeline.pop_stage()


def test_sub_stage_hands_back_to_its_parent(tmp_path):
    pipeline = PipelineState(tmp_path)
    parent = ParentStage(pipeline)
    pipeline.change_stage(parent)
    pipeline.update()
    assert isinstance(pipeline.current_stage, ChildStage)
    assert len(pipeline.stages_stack) == 2
    pipeline.update()
    assert pipeline.current_stage is parent
    pipeline.update()
    assert pipeline.finished


def test_runaway_pipeline_is_stopped(tmp_path):
    pipeline = PipelineState(tmp_path)
    with pytest.raises(UsageError, match=str(MAX_STEPS)):
        pipeline.run(LoopStage(pipeline))


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    return pipeline_demo(seed=0, out_dir=tmp_path_factory.mktemp("demo") / "run", total_tests=12000)


def test_demo_run(demo):
    out = demo.out_dir
    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "generate: 12000 dengue tests" in summary
    assert "mart: outbreak onset 2022-06, peak 2022-08" in summary
    assert "capacity: 19037398 records/day" in summary
    assert summary.count("load: dimensions") == 1
    assert "standard: diagnosis_counts=" in summary
    assert summary.index("load: dimensions") < summary.index("standard: ") < summary.index("mart: ")
    for file_name in ("monthly.csv", "age.csv", "weekday.csv", "correlation.csv", "outbreak.csv", "report.html"):
        assert (out / "dengue" / file_name).exists()
    assert (out / "capacity.csv").exists()
    assert (out / "standard" / "diagnosis_counts.tsv").exists()

    report = demo.context["mart_report"]
    correlation = report.correlation.set_index("factor")
    assert correlation.loc["rainfall", "r"] > 0.8
    assert abs(correlation.loc["temperature", "r"]) < 0.3
    assert sum(report.series.tests) == 12000


def test_demo_checksums(demo):
    out = demo.out_dir
    lines = (out / "CHECKSUMS").read_text(encoding="utf-8").splitlines()
    listed = {line.split("  ", 1)[1] for line in lines}
    assert "dengue/report.html" in listed
    assert "summary.txt" in listed
    assert lines == sorted(lines, key=lambda line: line.split("  ", 1)[1])


def test_demo_refuses_a_used_folder(demo):
    with pytest.raises(UsageError):
        pipeline_demo(seed=0, out_dir=demo.out_dir, total_tests=12000)


@pytest.mark.slow
def test_demo_is_reproducible(tmp_path, demo):
    again = pipeline_demo(seed=0, out_dir=tmp_path / "again", total_tests=12000)
    assert (again.out_dir / "CHECKSUMS").read_bytes() == (demo.out_dir / "CHECKSUMS").read_bytes()
