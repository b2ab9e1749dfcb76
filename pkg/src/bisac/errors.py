class BisacError(Exception):
    """Base class for optimization failures."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), "stage": self.stage}


class InfeasibleScenarioError(BisacError):
    """No beamformer meets the SINR constraints within the power budget."""

    def __init__(self, message, binding=None, stage=None):
        super().__init__(message, stage)
        self.binding = binding

    def to_dict(self):
        d = super().to_dict()
        d["binding"] = self.binding
        return d


class SolverFailure(BisacError):
    """A convex subproblem could not be solved to the requested accuracy."""

    def __init__(self, message, status=None, stage=None):
        super().__init__(message, stage)
        self.status = status

    def to_dict(self):
        d = super().to_dict()
        if self.status is not None:
            d["solver_state"] = self.status.state
            d["kkt_residuals"] = list(self.status.kkt_residuals)
        return d
