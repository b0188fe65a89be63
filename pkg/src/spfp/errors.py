"""Error types shared across the package.

ConfigError covers bad parameters and malformed configuration; DataError
covers problems with input files and their contents. The CLI maps them to
distinct exit codes.
"""


class SpfpError(Exception):
    pass


class ConfigError(SpfpError):
    pass


class DataError(SpfpError):
    pass
