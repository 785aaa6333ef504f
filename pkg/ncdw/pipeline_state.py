import logging

from ncdw.core.errors import UsageError
from ncdw.utils.artifact_manager import ArtifactManager

logger = logging.getLogger(__name__)

MAX_STEPS = 100


class PipelineState:
    """
    Pipeline run manager for ncdw
    Handles stage transitions and the resources stages share
    """
    def __init__(self, out_dir, seed=0, total_tests=None, workers=1):
        self.current_stage = None
        self.stages_stack = []
        self.finished = False
        self.seed = seed
        self.total_tests = total_tests
        self.workers = workers
        # Every output file goes through the artifact manager
        self.artifacts = ArtifactManager(out_dir)
        self.out_dir = self.artifacts.out_dir
        # Values produced by one stage and consumed by later ones
        self.context = {}
        # One line per completed stage
        self.summary = []

    def change_stage(self, new_stage):
        """
        Change to a completely new stage, clearing the stage stack
        """
        while self.stages_stack:
            self.stages_stack.pop().exit()
        self.push_stage(new_stage)

    def push_stage(self, new_stage):
        """
        Push a new stage onto the stack (e.g. a sub-step run inside another stage)
        """
        self.stages_stack.append(new_stage)
        self.current_stage = new_stage
        logger.info("stage %s", new_stage.name)
        new_stage.enter()

    def pop_stage(self):
        """
        Remove the top stage and go back to the previous one
        """
        if len(self.stages_stack) > 1:
            self.stages_stack.pop().exit()
            self.current_stage = self.stages_stack[-1]
            return True
        return False

    def finish(self):
        while self.stages_stack:
            self.stages_stack.pop().exit()
        self.current_stage = None
        self.finished = True

    def update(self):
        """
        Run the current stage's work
        """
        if self.current_stage:
            stage = self.current_stage
            stage.update()
            stage.render(self.summary)

    def run(self, first_stage):
        """Drive stages until one of them finishes the pipeline"""
        self.change_stage(first_stage)
        steps = 0
        while not self.finished:
            steps += 1
            if steps > MAX_STEPS:
                raise UsageError(f"pipeline did not finish within {MAX_STEPS} stages")
            self.update()
        return self
