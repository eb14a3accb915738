"""Exception hierarchy shared by every fogpaas module."""

from __future__ import annotations


class FogPaaSError(Exception):
    """Root of all errors raised by this package."""


# application graphs
class DescriptorSyntaxError(FogPaaSError, ValueError):
    """The descriptor document could not be decoded as JSON or YAML."""


class SchemaError(FogPaaSError, ValueError):
    """A field is missing, mistyped or carries an unknown value."""


class GraphError(FogPaaSError, ValueError):
    """The structure tree violates an application graph invariant."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class PlanError(FogPaaSError):
    """A deployment plan does not cover the components it is used with."""


class InfraError(FogPaaSError):
    """A node or link needed by a computation is absent from the infrastructure."""


# infrastructure repository
class DuplicateNode(FogPaaSError):
    pass


class DanglingLink(FogPaaSError):
    pass


class UnknownNode(FogPaaSError, LookupError):
    pass


class DuplicateSubscription(FogPaaSError):
    pass


class UnknownSubscription(FogPaaSError, LookupError):
    pass


# placement
class Infeasible(FogPaaSError):
    pass


class BudgetExceeded(FogPaaSError):
    pass


# chaining
class InstanceNotRunning(FogPaaSError):
    def __init__(self, component: str, node: str):
        super().__init__(f"no running instance of {component!r} on {node!r}")
        self.component = component
        self.node = node


class UnknownComponent(FogPaaSError, LookupError):
    pass


# migration
class NoCandidate(FogPaaSError):
    pass


class StepFailed(FogPaaSError):
    """A migration step failed; ``rollback`` describes what was restored."""

    def __init__(self, step: str, cause: BaseException, rollback: str):
        super().__init__(f"migration step {step} failed: {cause} (rollback: {rollback})")
        self.step = step
        self.cause = cause
        self.rollback = rollback


# simulator
class CapacityExceeded(FogPaaSError):
    pass


class UnknownInstance(FogPaaSError, LookupError):
    pass


class DuplicateInstance(FogPaaSError):
    """A component of an application already has a running instance."""


class Unreachable(FogPaaSError):
    pass


class AppNotRunning(FogPaaSError):
    pass


class InjectedFault(FogPaaSError):
    """Raised by the simulator when an operation hits an injected failure."""


# orchestrator
class PlacementFailed(FogPaaSError):
    pass


class DeploymentFailed(FogPaaSError):
    pass


class ChainingFailed(FogPaaSError):
    pass


class UnknownApplication(FogPaaSError, LookupError):
    pass


class InvalidState(FogPaaSError):
    """The application is not in a state that accepts the request."""


class NonTerminal(FogPaaSError):
    pass


# benchmark
class ScenarioError(FogPaaSError):
    pass
