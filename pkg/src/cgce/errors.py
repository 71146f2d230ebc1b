"""Exception hierarchy shared across the package."""


class CgceError(Exception):
    """Base class for all estimation errors."""


class LengthMismatch(CgceError):
    pass


class NonBinaryAssignment(CgceError):
    pass


class OneSidedViolation(CgceError):
    """t_i = 1 while z_i = 0, which one-sided noncompliance forbids."""


class PropensityOutOfBounds(CgceError):
    pass


class NoCompliersObserved(CgceError):
    pass


class DegenerateWeights(CgceError):
    pass


class NoCrossing(CgceError):
    """A step estimating function never changes sign on its support."""


class SingularDerivative(CgceError):
    pass


class SingularDenominator(CgceError):
    pass


class EmptyArm(CgceError):
    pass


class EmptySubgroup(CgceError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"subgroup '{name}' is empty")


class TrainingDiverged(CgceError):
    pass


class ZeroVarianceCovariate(CgceError):
    pass


class QuadratureFailure(CgceError):
    pass


class SchemaError(CgceError):
    pass


class ReplicationBudgetExceeded(CgceError):
    pass
