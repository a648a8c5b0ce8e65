"""Exception and warning types raised by the library."""


class HKError(Exception):
    """Base class for all library errors."""


class EmptyMeasure(HKError):
    pass


class DimensionMismatch(HKError):
    pass


class NoFeasiblePair(HKError):
    """Every atom pair is at distance >= pi/2, so no transport is possible."""


class ZeroMarginal(HKError):
    def __init__(self, index, side="source"):
        self.index = index
        self.side = side
        super().__init__(f"{side} atom {index} has zero coupling marginal")


class NegativeRatio(HKError):
    """Density ratio u1/u0 below 1e-12; the coupling is broken."""


class ApexBase(HKError):
    pass


class ApexEndpoint(HKError):
    pass


class ApexAtom(HKError):
    pass


class DiameterViolation(HKError):
    pass


class AtomMismatch(HKError):
    pass


class SingularPartDetected(HKError):
    def __init__(self, mass):
        self.mass = mass
        super().__init__(f"mass {mass:.3e} would couple to the apex")


class RadialUnderflow(HKError):
    pass


class ZeroIncomingMass(HKError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"target atom {index} receives no mass")


class NonConvergence(UserWarning):
    """Solver stopped at max_iters; the best iterate is returned."""
