"""Exception types raised by etvgate."""


class EtvError(Exception):
    """Base class for all package errors."""


class SupportMismatchError(EtvError, ValueError):
    pass


class DegenerateResponseError(EtvError, ValueError):
    pass


class HierarchyError(EtvError, ValueError):
    pass


class OutOfSupportError(EtvError, KeyError):
    pass


class ParameterError(EtvError, ValueError):
    pass


class SampleSizeError(EtvError, ValueError):
    pass


class TrainingError(EtvError, RuntimeError):
    """A classifier or working model could not be trained.

    ``fold`` identifies the cross-validation fold, when there is one.
    """

    def __init__(self, message, fold=None):
        super().__init__(message if fold is None else f"fold {fold}: {message}")
        self.fold = fold


class NonConvergenceError(TrainingError):
    pass
