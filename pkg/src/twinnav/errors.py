"""Error taxonomy shared across the package.

Exit-code contract for the CLI: 0 success, 1 usage, 2 contract violation,
3 unsolved retraining session.
"""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (shape, range, missing cache)."""


class NotEnoughSamples(RuntimeError):
    """A buffer was asked for more samples than it holds."""


class SpawnFailure(RuntimeError):
    """Episode spawn constraints could not be satisfied within budget."""

    def __init__(self, constraint: str, tries: int):
        super().__init__(f"spawn failed after {tries} tries: {constraint}")
        self.constraint = constraint
        self.tries = tries


class DecodeError(ValueError):
    """Malformed wire frame. `offset` is the byte offset of the frame start."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.reason = message
        self.offset = offset


class VersionError(DecodeError):
    """Frame carried an unsupported protocol version."""


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONTRACT = 2
EXIT_UNSOLVED = 3
