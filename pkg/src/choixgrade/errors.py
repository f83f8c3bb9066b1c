"""Exception hierarchy shared by every subpackage."""


class ChoixgradeError(Exception):
    pass


# -- data files ---------------------------------------------------------------

class DataError(ChoixgradeError):
    pass


class BadMagic(DataError):
    pass


class Truncated(DataError):
    pass


class TrailingBytes(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class HeterogeneousDimensions(DataError):
    pass


class WrongInputSize(DataError):
    pass


class EmptyInput(DataError):
    pass


class InsufficientData(DataError):
    pass


class PgmFormatError(DataError):
    pass


# -- numerics -----------------------------------------------------------------

class ShapeMismatch(ChoixgradeError, ValueError):
    pass


class NonIntegralOutputSize(ShapeMismatch):
    pass


class NonScalarLoss(ChoixgradeError):
    pass


class DoubleBackward(ChoixgradeError):
    pass


class BatchTooSmall(ChoixgradeError):
    pass


class TargetOutOfRange(ChoixgradeError, ValueError):
    pass


class InvalidConfig(ChoixgradeError, ValueError):
    pass


# -- optimisation / training --------------------------------------------------

class MissingGradient(ChoixgradeError):
    pass


class MissingCheckpoint(ChoixgradeError):
    pass


class UnexpectedCheckpoint(ChoixgradeError):
    pass


class EmptyDataset(ChoixgradeError):
    pass


class CheckpointError(ChoixgradeError):
    pass


class VersionMismatch(CheckpointError):
    pass


class ConfigMismatch(CheckpointError):
    pass


class CorruptFile(CheckpointError):
    pass


class MissingFile(CheckpointError, FileNotFoundError):
    pass


# -- grading ------------------------------------------------------------------

class KeyFormatError(ChoixgradeError, ValueError):
    pass
