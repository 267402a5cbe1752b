"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad configuration: invalid parameters, malformed scenario files,
    preconditions violated at setup time. CLI maps this to exit code 2."""


class ProtocolBug(RuntimeError):
    """A protocol action did something the counter discipline forbids,
    e.g. decreasing a permanent counter or writing to an undeclared slot.

    This aborts the run: it indicates a bug in the protocol definition,
    not a property of the system under test.
    """


class KernelInvariantError(RuntimeError):
    """The simulation kernel detected a broken run-time contract, e.g. a
    counter family growing faster per region than its declared budget."""


class TraceFormatError(ValueError):
    """A trace file could not be parsed or has inconsistent records."""
