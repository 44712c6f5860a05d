"""Exception hierarchy shared across the simulator.

The CLI maps ConfigError subclasses to exit code 2 and scheduling failures
(SchedulerViolation, StarvationGuard) to exit code 3.
"""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimulationError):
    """Invalid configuration, schema or parameters."""


class SchemaError(ConfigError):
    """Input file does not match the documented schema (names the field)."""


class RangeError(ConfigError):
    """A value is outside its documented range (names the field)."""


class NonIntegerRatio(ConfigError):
    """Resampling requires quanta and delta to be integer multiples."""


class CapacityViolation(SimulationError):
    """A placement exceeds a node's free resources (scheduler bug)."""


class DuplicateJob(SimulationError):
    """An allocation already exists under this job id."""


class UnknownJob(SimulationError):
    """No allocation exists under this job id."""


class SchedulerViolation(SimulationError):
    """A scheduling decision failed capacity checks inside the engine."""


class StarvationGuard(SimulationError):
    """The simulation cannot make progress (unschedulable job)."""


class SessionStateError(SimulationError):
    """RL session driven out of order (step before reset / after done)."""


class ProtocolError(SimulationError):
    """Malformed protocol message or unknown command."""
