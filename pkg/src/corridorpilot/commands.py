"""The six-valued flight command alphabet.

Enum order fixes the class index used everywhere: dataset labels, network
logits, confusion matrices, and CLI arguments all agree on it.
"""

from __future__ import annotations

from enum import IntEnum

from .errors import DomainError


class FlightCommand(IntEnum):
    MOVE_FORWARD = 0
    MOVE_RIGHT = 1
    MOVE_LEFT = 2
    SPIN_RIGHT = 3
    SPIN_LEFT = 4
    STOP = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "FlightCommand":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise DomainError(f"unknown flight command {label!r}") from None


NUM_COMMANDS = len(FlightCommand)
COMMAND_LABELS = tuple(cmd.label for cmd in FlightCommand)
MOTION_COMMANDS = tuple(cmd for cmd in FlightCommand if cmd is not FlightCommand.STOP)
