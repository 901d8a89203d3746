"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class SchedulingInPast(SimError):
    """An event was scheduled before the current virtual clock."""


class UnknownStream(SimError):
    """A random draw referenced a stream that was never registered."""


class UnknownNode(SimError):
    """A topology operation referenced a node id that does not exist."""


class InvalidPartition(SimError):
    """Partition groups overlap, omit an up node, or the heal/partition sequence is wrong."""


class DeclarationConflict(SimError):
    """A broker entity was redeclared with different parameters."""


class UnknownEntity(SimError):
    """A reference to an exchange, queue, service or node that was never declared."""


class BrokerUnreachable(SimError):
    """The publisher's node cannot reach any broker cluster member."""


class UnknownService(SimError):
    """A registry operation referenced an undeclared service."""


class NoHealthyInstance(SimError):
    """Name resolution found no healthy, reachable instance."""


class InsufficientNodes(SimError):
    """Replica placement cannot satisfy its rule with the nodes available."""


class MismatchedScenario(SimError):
    """Two reports being compared came from different workloads, fault schedules or seeds."""


class ScenarioError(SimError):
    """Scenario text failed validation; carries the full list of issues."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


class InvariantViolation(SimError):
    """An internal consistency check failed. Runs abort loudly on these."""
