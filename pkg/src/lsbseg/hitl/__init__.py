"""Human-in-the-loop protocol: schedule, review queue, decisions, service."""

from lsbseg.hitl.schedule import HitlSchedule, build_schedule
from lsbseg.hitl.review import (
    DecisionConflict,
    HitlStore,
    ReviewItem,
    acceptance_stats,
    apply_decisions,
    enqueue_false_positives,
    oracle_reviewer,
    withhold_labels,
)

__all__ = [
    "HitlSchedule",
    "build_schedule",
    "DecisionConflict",
    "HitlStore",
    "ReviewItem",
    "acceptance_stats",
    "apply_decisions",
    "enqueue_false_positives",
    "oracle_reviewer",
    "withhold_labels",
]
