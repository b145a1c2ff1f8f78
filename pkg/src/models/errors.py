"""
Exception types shared across the simulator
Each keeps its constructor arguments in __reduce__ so it survives a process pool round trip
"""

from typing import Optional


class ScenarioParseError(ValueError):
    """Malformed scenario line"""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.message = message
        self.line = line

    def __reduce__(self):
        return (type(self), (self.message, self.line))


class ScenarioRangeError(ValueError):
    """Scenario value outside its allowed range; names the offending key"""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message

    def __reduce__(self):
        return (type(self), (self.key, self.message))


class InvariantViolation(RuntimeError):
    """Internal safety or bookkeeping invariant broken (overlap, duplicate mirror)"""


class CandidateLimitExceeded(RuntimeError):
    """Candidate enumeration grew past the configured cap"""

    def __init__(self, count: int, cap: int):
        super().__init__(
            f"{count} candidate decisions exceed the cap of {cap}; "
            "shorten the planning horizon or raise DBPL_CANDIDATE_CAP"
        )
        self.count = count
        self.cap = cap

    def __reduce__(self):
        return (type(self), (self.count, self.cap))


class RunFailure(RuntimeError):
    """A sweep cell failed; carries the failing (config, seed, strategy)"""

    def __init__(self, label: str, seed: int, strategy: str, cause: Optional[str] = None):
        detail = f": {cause}" if cause else ""
        super().__init__(f"run failed for config={label} seed={seed} strategy={strategy}{detail}")
        self.label = label
        self.seed = seed
        self.strategy = strategy
        self.cause = cause

    def __reduce__(self):
        return (type(self), (self.label, self.seed, self.strategy, self.cause))
