"""Exception types raised across the package."""


class AisRecError(Exception):
    """Base class for all errors raised by aisrec."""


class MalformedLine(AisRecError, ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OffGridScore(AisRecError, ValueError):
    pass


class DuplicateVote(AisRecError, ValueError):
    pass


class InvalidParams(AisRecError, ValueError):
    pass


class NotEnoughUsers(AisRecError, ValueError):
    pass


class ProfileTooSmall(AisRecError, ValueError):
    pass


class EmptyProfile(AisRecError, ValueError):
    pass


class PoolFull(AisRecError, RuntimeError):
    pass


class EmptyPool(AisRecError, RuntimeError):
    pass


class NoPrediction(AisRecError, LookupError):
    pass


class EmptyInput(AisRecError, ValueError):
    pass


class TooFewPairs(AisRecError, ValueError):
    pass


class LengthMismatch(AisRecError, ValueError):
    pass


class ConfigMismatch(AisRecError, ValueError):
    pass


class UnpairedUsers(AisRecError, ValueError):
    pass


class UnknownMetric(AisRecError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown metric"
