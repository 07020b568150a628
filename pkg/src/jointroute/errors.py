"""Exception types raised across the package."""


class JointRouteError(Exception):
    pass


class InvalidParameterError(JointRouteError, ValueError):
    pass


class MalformedDatasetError(JointRouteError, ValueError):
    def __init__(self, experiment, node_id, reason):
        self.experiment = experiment
        self.node_id = node_id
        super().__init__(f"experiment {experiment}: ID {node_id}: {reason}")


class DatasetParseError(JointRouteError, ValueError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class InvalidCompatibilityError(JointRouteError, ValueError):
    pass


class InvalidCutError(JointRouteError, ValueError):
    pass


class NotATwoFactorError(JointRouteError, ValueError):
    pass


class InvalidCycleError(JointRouteError, ValueError):
    pass


class InvalidOrderError(JointRouteError, ValueError):
    pass


class InfeasibleError(JointRouteError):
    pass


class TimeoutWithoutSolutionError(JointRouteError):
    pass


class OracleCapError(JointRouteError, ValueError):
    pass


class ProtocolError(JointRouteError):
    def __init__(self, line_no, line, reason="unparsable solver output"):
        self.line_no = line_no
        self.line = line
        super().__init__(f"{reason} at line {line_no}: {line!r}")


class NonConvergenceError(JointRouteError):
    def __init__(self, rounds, cut_count):
        self.rounds = rounds
        self.cut_count = cut_count
        super().__init__(f"no single cycle after {rounds} rounds ({cut_count} cuts added)")


class SchemaError(JointRouteError, ValueError):
    pass


class InternalConsistencyError(JointRouteError, RuntimeError):
    pass
