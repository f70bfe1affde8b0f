"""Error taxonomy shared across the package.

The experiment runner maps these onto process exit codes:
ConfigError -> 2, DataError -> 3, NumericError -> 4. Plain logic errors
(mismatched lengths, out-of-range indices) raise the usual builtins.
"""


class CancLabError(Exception):
    pass


class ConfigError(CancLabError):
    """Invalid configuration: bad layer dimensions, fractions, rates, keys."""


class DataError(CancLabError):
    """Broken dataset files or scene/mask geometry problems."""


class NumericError(CancLabError):
    """Non-finite values encountered in a forward pass or gradient."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer
