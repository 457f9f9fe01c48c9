"""Exception and warning types shared across the package."""


class ErgocertError(ValueError):
    """Base class for invalid inputs and violated preconditions."""


class ConditionError(ErgocertError):
    """A structural condition (positivity, drift, minorization) fails."""


class ConstantOverflowError(ErgocertError, OverflowError):
    """A constant left the representable range."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        super().__init__(f"overflow while computing {name}" + (f": {detail}" if detail else ""))


class CertificateVacuousError(ErgocertError):
    """The certified rate cannot be represented at the working precision."""


class InfeasibleMinorizationError(ConditionError):
    def __init__(self, violations):
        self.violations = list(violations)
        shown = ", ".join(f"({x}, {y})" for x, y in self.violations[:10])
        more = "" if len(self.violations) <= 10 else f" and {len(self.violations) - 10} more"
        super().__init__(f"P(x, y) < 2*delta*nu(y) at (x, y) = {shown}{more}")


class ReducibleChainError(ErgocertError):
    pass


class ClassMembershipError(ConditionError):
    """A drift does not belong to the declared functional class."""


class TruncationWarning(UserWarning):
    """Mass was moved into ``tail_mass_bound`` because the support cap was hit."""


class MassDeficitWarning(UserWarning):
    """A computed law left more residual mass than the tolerance allows."""


class HorizonWarning(UserWarning):
    """Too many simulated paths ran into the horizon."""
