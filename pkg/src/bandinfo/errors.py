"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its documented codes: 2 for configuration problems, 3 for bad data and 4 for
numerical failures.
"""


class BandInfoError(Exception):
    exit_code = 1


class ConfigError(BandInfoError, ValueError):
    exit_code = 2


class DataError(BandInfoError, ValueError):
    exit_code = 3


class NumericalError(BandInfoError, ArithmeticError):
    exit_code = 4


# config
class UnknownCommand(ConfigError):
    pass


class IndexOutOfRange(ConfigError, IndexError):
    pass


class TooManyPlayers(ConfigError):
    pass


class InvalidRange(ConfigError):
    pass


class KernelTruncated(ConfigError):
    pass


class EmptyBandList(ConfigError):
    pass


class MetricTargetMismatch(ConfigError):
    pass


# data
class EmptyDataset(DataError):
    pass


class DimensionTooLarge(DataError):
    pass


class BadMagic(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class UnsupportedDtype(DataError):
    pass


class BasisShapeMismatch(DataError):
    pass


class ImageTooSmall(DataError):
    pass


class TooFewSamples(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class EmptyAudio(DataError):
    pass


class TooFewFrames(DataError):
    pass


class NotOrthonormal(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class BadRecordLength(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


# numerical
class AllZeroSpectrum(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class DegenerateDesign(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class SingularRidgeSystem(NumericalError):
    pass


class RankDeficientSignal(NumericalError):
    pass
