"""The review-epoch schedule: 30 initial epochs, four 5-epoch rounds,
three 10-epoch rounds, then uninterrupted training to the total."""

from __future__ import annotations

from dataclasses import dataclass

from lsbseg.errors import ConfigError

INITIAL_EPOCHS = 30
SHORT_ROUNDS = 4
SHORT_PERIOD = 5
LONG_ROUNDS = 3
LONG_PERIOD = 10
LAST_REVIEW_EPOCH = INITIAL_EPOCHS + SHORT_ROUNDS * SHORT_PERIOD + LONG_ROUNDS * LONG_PERIOD


@dataclass
class HitlSchedule:
    review_epochs: list[int]
    total_epochs: int

    def __post_init__(self) -> None:
        if any(b >= a for a, b in zip(self.review_epochs[1:], self.review_epochs)):
            raise ConfigError("review epochs must be strictly increasing")
        if self.review_epochs and self.review_epochs[-1] >= self.total_epochs:
            raise ConfigError("the last review must leave room for a final training phase")

    @property
    def rounds(self) -> int:
        return len(self.review_epochs)

    @property
    def final_phase(self) -> int:
        return self.total_epochs - self.review_epochs[-1]

    def round_of_epoch(self, epoch: int) -> int:
        """1-based review round happening at this completed-epoch count."""
        return self.review_epochs.index(epoch) + 1


def build_schedule(total_epochs: int = 200) -> HitlSchedule:
    """Seven review rounds at epochs [30, 35, 40, 45, 50, 60, 70, 80]."""
    if total_epochs <= LAST_REVIEW_EPOCH:
        raise ConfigError(
            f"total_epochs must exceed {LAST_REVIEW_EPOCH} to fit the review rounds "
            f"plus a final phase, got {total_epochs}"
        )
    epochs = [INITIAL_EPOCHS]
    for _ in range(SHORT_ROUNDS):
        epochs.append(epochs[-1] + SHORT_PERIOD)
    for _ in range(LONG_ROUNDS):
        epochs.append(epochs[-1] + LONG_PERIOD)
    return HitlSchedule(review_epochs=epochs, total_epochs=total_epochs)
