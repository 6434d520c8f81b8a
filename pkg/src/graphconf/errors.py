"""Exception classes.

Every error raised by the library derives from :class:`GraphConfError`.
Each class carries a stable ``exit_code`` used by the command-line tool.
"""


class GraphConfError(ValueError):
    exit_code = 1


class ConfigError(GraphConfError):
    exit_code = 2


# graph-core
class DimensionMismatch(GraphConfError):
    exit_code = 10


class AsymmetricStructure(GraphConfError):
    exit_code = 11


class NonUniformWeights(GraphConfError):
    exit_code = 12


class LengthMismatch(GraphConfError):
    exit_code = 13


class NotOneHot(GraphConfError):
    exit_code = 14


class NonBinaryAdjacency(GraphConfError):
    exit_code = 15


# exact-ot / zgw
class MarginalMismatch(GraphConfError):
    exit_code = 20


class NonFiniteCost(GraphConfError):
    exit_code = 21


class TooLarge(GraphConfError):
    exit_code = 22


class SizeMismatch(GraphConfError):
    exit_code = 23


class MissingEdgeFeatures(GraphConfError):
    exit_code = 24


# conformal / scqr
class EmptyScores(GraphConfError):
    exit_code = 30


class AlphaOutOfRange(GraphConfError):
    exit_code = 31


class RangeError(GraphConfError):
    exit_code = 32


class TauOutOfRange(GraphConfError):
    exit_code = 33


class DegenerateData(GraphConfError):
    exit_code = 34


class DimMismatch(GraphConfError):
    exit_code = 35


# evaluation
class EmptyResults(GraphConfError):
    exit_code = 40


class DegenerateDenominator(GraphConfError):
    exit_code = 41


# synth
class GenerationFailure(GraphConfError):
    exit_code = 50


class TruthMissing(GraphConfError):
    exit_code = 51
