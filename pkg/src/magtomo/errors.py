"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MagtomoError(Exception):
    exit_code = 1


class ConfigError(MagtomoError, ValueError):
    exit_code = 2


class InfeasibleConfigError(ConfigError):
    """Scene configuration cannot be realised (e.g. a disk that never fits)."""


class ShapeMismatchError(MagtomoError, ValueError):
    exit_code = 3


class NumericalError(MagtomoError, ArithmeticError):
    exit_code = 4


class SolverError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleSceneError(NumericalError):
    """No conducting path between the electrodes."""


class SingularEvaluationError(NumericalError):
    """Biot-Savart evaluated too close to a source element."""


class NumericalOverflowError(NumericalError):
    def __init__(self, message, block_index=None):
        super().__init__(message)
        self.block_index = block_index


class DivergenceError(NumericalError):
    """Training loss became non-finite; ``model`` holds the last finite parameters."""

    def __init__(self, message, model=None, epoch=None):
        super().__init__(message)
        self.model = model
        self.epoch = epoch
