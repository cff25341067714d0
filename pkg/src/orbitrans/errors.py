"""Exception hierarchy.

``MathematicalFailure`` subclasses signal that the requested construction does
not exist or cannot be carried out for the given input (CLI exit code 2).
``ScenarioError`` covers malformed input (exit code 1). Anything else escaping
the library is treated as an internal invariant violation (exit code 3).
"""


class OrbitransError(Exception):
    """Base class for all library errors."""


class ScenarioError(OrbitransError):
    pass


class MathematicalFailure(OrbitransError):
    pass


class NotOrthogonal(ScenarioError):
    pass


class ClosureExceedsCap(MathematicalFailure):
    pass


class NotEffective(MathematicalFailure):
    pass


class AmbiguousIsotropy(MathematicalFailure):
    pass


class NotInAnyComponent(MathematicalFailure):
    pass


class OutsideOverlap(MathematicalFailure):
    pass


class OutsideAllCharts(OrbitransError):
    pass


class StepTooLarge(MathematicalFailure):
    pass


class DifferentComponents(MathematicalFailure):
    pass


class TubeTooTight(MathematicalFailure):
    pass


class Sigma1Collision(MathematicalFailure):
    pass


class PathBlocked(MathematicalFailure):
    pass


class NoEquivariantMatch(MathematicalFailure):
    pass


class AmbiguousMatch(MathematicalFailure):
    pass


class WindingAmbiguous(MathematicalFailure):
    pass


class InvalidCurve(ScenarioError):
    pass
