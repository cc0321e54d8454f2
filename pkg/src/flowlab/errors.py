"""Exception hierarchy shared by all flowlab modules."""


class FlowlabError(Exception):
    """Base class for all library errors."""


class DomainError(FlowlabError):
    """A state is outside the admissible set of a manifold model."""


class ContractError(FlowlabError):
    """Inputs violate a documented precondition (e.g. non-tangent vector)."""


class CapabilityError(FlowlabError):
    """A backend, jacobian or curvature input needed for the request is missing."""


class SingularPointError(FlowlabError):
    """Evaluation at a point where the quantity is undefined (pole, oracle blow-up)."""
