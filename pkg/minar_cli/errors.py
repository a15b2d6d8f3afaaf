# minar-cli/minar_cli/errors.py
class MinarError(Exception):
    """Base class for all library errors"""


class DomainError(MinarError, ValueError):
    """Argument or model constraint violated"""


class DataFormatError(MinarError, ValueError):
    """Malformed series CSV or model/experiment JSON"""


class NumericalError(MinarError, ArithmeticError):
    """A numerical procedure failed to converge"""
