class QstabError(Exception):
    """Base class for all errors raised by qstab."""


class DimensionError(QstabError, ValueError):
    """Operator or index set does not match the Hilbert space."""


class NotPositiveDefiniteError(QstabError, ValueError):
    pass


class NotCPTPError(QstabError, ValueError):
    pass


class NotProjectorError(QstabError, ValueError):
    pass


class ConvergenceError(QstabError, RuntimeError):
    """An iterative procedure hit its iteration cap."""


class DecompositionError(QstabError, RuntimeError):
    """Block structure of an algebra could not be extracted within tolerance."""


class NotQLSError(QstabError, ValueError):
    """Stabilizing maps were requested for a state that failed its QLS check."""


class ScenarioError(QstabError, ValueError):
    pass
