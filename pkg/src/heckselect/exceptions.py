"""Exception types raised by heckselect."""


class HeckselectError(Exception):
    """Base class for all package errors."""


class DomainError(HeckselectError, ValueError):
    """A parameter lies outside the domain of a distribution or operation."""


class DegenerateTruncationError(HeckselectError, ArithmeticError):
    """The truncation region carries (numerically) no probability mass."""


class MomentUndefinedError(HeckselectError, ValueError):
    """A requested moment does not exist for the given degrees of freedom."""


class NumericalUnderflowError(HeckselectError, ArithmeticError):
    """A log-likelihood contribution is not finite.

    Attributes
    ----------
    row : int
        Index of the first offending observation.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class SeparationError(HeckselectError):
    """The probit likelihood has no finite maximizer (perfect separation)."""


class CollinearityError(HeckselectError, ValueError):
    """A design or normal-equations matrix is (numerically) singular.

    Attributes
    ----------
    columns : list of str
        Names (or indices) of the columns involved in the dependency.
    """

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)
