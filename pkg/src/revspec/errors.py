"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` used by the command-line front end:
2 for bad user input, 3 for I/O problems, 4 for numerical failures.
"""


class RevspecError(Exception):
    exit_code = 2


class InputError(RevspecError):
    exit_code = 2


class IOFailure(RevspecError):
    exit_code = 3


class NumericalError(RevspecError):
    exit_code = 4


# spectra
class AxisOutOfRange(InputError):
    pass


class AxisMismatch(InputError):
    pass


class DegenerateSpectrum(NumericalError):
    pass


class DegenerateReference(NumericalError):
    pass


class NearZeroSlope(NumericalError):
    pass


class SpectrumFileError(InputError):
    pass


# speclib
class DuplicateName(InputError):
    pass


class EmptyLibrary(InputError):
    pass


class ManifestParseError(InputError):
    pass


class MissingSpectrumFile(IOFailure):
    pass


# bss
class RankDeficient(NumericalError):
    pass


class SingularSources(NumericalError):
    pass


class TooFewSamples(InputError):
    pass


# design
class InfeasibleBounds(InputError):
    pass


class UnsupportedQ(InputError):
    pass


# pls
class ZeroVarianceColumn(NumericalError):
    pass


class FoldTooSmall(InputError):
    pass


class EmptyTestSet(InputError):
    pass


# synth
class AxisTooNarrow(InputError):
    pass


class CompositionInvalid(InputError):
    pass


class ConvergenceWarning(UserWarning):
    """An iterative fit stopped at its iteration cap before meeting tolerance."""
