from spectral.exceptions import HomogenizationError


class StageError(HomogenizationError):
    """
    A failure inside one stage of a study.

    ``stage`` names the stage ('coefficients', 'cell', 'fine', ...), ``eps`` is
    the ε being processed or None for ε-independent stages, and
    ``partial_report`` holds the RateReport of the rows finished before the
    failure.
    """

    def __init__(self, stage, eps, cause, partial_report=None):
        where = stage if eps is None else f'{stage} at ε={eps:g}'
        super().__init__(f'Stage {where} failed: {cause}')
        self.stage = stage
        self.eps = eps
        self.cause = cause
        self.partial_report = partial_report
