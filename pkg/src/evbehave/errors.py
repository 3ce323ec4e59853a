"""Exception types shared across the package."""


class EvBehaveError(ValueError):
    """Base class for all domain errors raised by this package."""


class MalformedRow(EvBehaveError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        self.detail = detail
        super().__init__(f"line {line_no}: malformed row{': ' + detail if detail else ''}")


class InvalidSession(EvBehaveError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: invalid session: {reason}")


class SessionParseError(EvBehaveError):
    """Strict-mode parse failure carrying every collected row error."""

    def __init__(self, errors):
        self.errors = list(errors)
        head = "; ".join(str(e) for e in self.errors[:5])
        more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
        super().__init__(f"{len(self.errors)} bad row(s): {head}{more}")


class DegenerateInput(EvBehaveError):
    pass


class InsufficientData(EvBehaveError):
    pass


class EmptyMatrix(EvBehaveError):
    pass


class TooFewUsers(EvBehaveError):
    pass


class ShapeMismatch(EvBehaveError):
    pass


class DivergenceDetected(EvBehaveError):
    pass


class NoSessions(EvBehaveError):
    pass


class EmptyCluster(EvBehaveError):
    pass


class InvalidPortions(EvBehaveError):
    pass


class InvalidSpec(EvBehaveError):
    pass


class LengthMismatch(EvBehaveError):
    pass


class AllSlotsExcluded(EvBehaveError):
    pass
