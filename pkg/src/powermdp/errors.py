"""Exception types shared by the library and mapped to CLI exit codes."""


class PowerMdpError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(PowerMdpError, ValueError):
    """Malformed or inconsistent user input (exit code 2)."""

    exit_code = 2


class DomainError(InputError):
    """A parameter lies outside the domain where the operation is defined."""


class SizeCapError(PowerMdpError):
    """An enumeration would exceed a configured size bound (exit code 3)."""

    exit_code = 3

    def __init__(self, what, size, cap):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(f"{what}: size {size} exceeds cap {cap}")
