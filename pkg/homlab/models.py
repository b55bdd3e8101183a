"""Shared enums and schema constants for HomLab"""
import enum

SCHEMA_VERSION = '1.0'


class Classification(enum.Enum):
    C_GOOD = "c-good"
    C_BAD = "c-bad"


class CoefficientVariant(enum.Enum):
    EXPRESSION = "expression"
    IDENTITY = "identity"
    SCALAR_TIMES_IDENTITY = "scalar_times_identity"
    DIAGONAL_SEPARABLE = "diagonal_separable"
    DIAGONAL_MISSING_OWN_VARIABLE = "diagonal_missing_own_variable"
    LAYERED = "layered"
    SHIFTED_EVEN = "shifted_even"
    PROP31_BAD = "prop31_bad"
    THM16_PERTURBED = "thm16_perturbed"
    A_S_FAMILY = "a_s_family"


class Command(enum.Enum):
    CLASSIFY = "classify"
    EFFECTIVE = "effective"
    CELL = "cell"
    RATES = "rates"
    ASYMPTOTICS = "asymptotics"
    GALLERY = "gallery"


class OutputFormat(enum.Enum):
    JSON = "json"
    CSV = "csv"


class NodeSet(enum.Enum):
    """Which box nodes an error norm is taken over"""
    OWN = "own"
    COMMON = "common"
