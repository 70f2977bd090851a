from __future__ import annotations


class BhdError(RuntimeError):
    """Base for failures that should end a CLI run with a specific exit code."""

    exit_code = 1


class ConfigError(BhdError):
    exit_code = 2


class NumericalError(BhdError):
    """Ill-conditioned inversion, quadrature non-convergence, truncation too coarse."""

    exit_code = 3


class ArtifactIOError(BhdError):
    exit_code = 4

    def __init__(self, message: str, *, path: object = None):
        self.path = path
        super().__init__(f"{message} ({path})" if path is not None else message)


class ReconstructionWarning(UserWarning):
    pass
