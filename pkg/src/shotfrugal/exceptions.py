"""Exception types raised across the package."""


class ShotFrugalError(Exception):
    """Base class for all package errors."""


class CapacityError(ShotFrugalError, ValueError):
    """Problem size exceeds what the dense simulator or grid is allowed to hold."""


class DegenerateError(ShotFrugalError, ValueError):
    """A normalising quantity vanished (zero divisor, flat spectrum, ar_opt == ar_ini)."""


class InfeasibleBudgetError(ShotFrugalError, ValueError):
    """The shot budget cannot cover the requested number of evaluations."""


class DegenerateSimplexError(ShotFrugalError, ArithmeticError):
    """The interpolation simplex of the linear trust-region method became singular."""


class MissingEntryError(ShotFrugalError, KeyError):
    """No fixed-parameter entry exists for the requested (family, p)."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CSVParseError(ShotFrugalError, ValueError):
    """Malformed returns CSV. Carries the 1-based row and column of the fault."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class GridSchemaError(ShotFrugalError, ValueError):
    """A landscape grid file is unreadable or has an unexpected layout."""


class ManifestError(ShotFrugalError, ValueError):
    """A benchmark manifest failed validation; the message names the field path."""
