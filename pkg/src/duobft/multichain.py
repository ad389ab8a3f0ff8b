"""Lane dispatch and round-barrier execution for multi-chain DuoBFT.

All lanes share one primary and one USIG per replica. Commands are spread
over lanes round-robin; execution waits until every lane has committed its
block for a round, then runs the round's blocks in lane order.
"""

from __future__ import annotations

from duobft.messages import Command


class Dispatcher:
    def __init__(self, lanes: int):
        if lanes < 1:
            raise ValueError("need at least one lane")
        self.lanes = lanes
        self.cursor = 0
        self.pinned: dict[tuple[int, int], int] = {}

    def dispatch(self, command: Command) -> int:
        """Lane for ``command``; a retransmitted command keeps its first lane."""
        lane = self.pinned.get(command.id)
        if lane is None:
            lane = self.cursor
            self.cursor = (self.cursor + 1) % self.lanes
            self.pinned[command.id] = lane
        return lane


class RoundBarrier:
    """Tracks per-lane committed heights for one fault model."""

    def __init__(self, lanes: int):
        self.heights = [0] * lanes
        self.executed_round = 0

    def committed(self, lane: int, height: int) -> None:
        if height > self.heights[lane]:
            self.heights[lane] = height

    def advance_rounds(self) -> list[int]:
        """Rounds that just became executable, oldest first."""
        top = min(self.heights)
        rounds = list(range(self.executed_round + 1, top + 1))
        self.executed_round = max(self.executed_round, top)
        return rounds
