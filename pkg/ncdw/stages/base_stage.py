class BaseStage:
    """
    Base class for all pipeline stages
    """
    name = "stage"

    def __init__(self, pipeline):
        self.pipeline = pipeline

    @property
    def context(self):
        return self.pipeline.context

    def update(self):
        """
        Do the stage's work, then hand over to the next stage
        """
        pass

    def render(self, summary):
        """
        Append what the stage did to the run summary
        """
        pass

    def enter(self):
        """
        Called when the stage becomes active
        """
        pass

    def exit(self):
        """
        Called when the stage is no longer active
        """
        pass
