"""
Homogeneous block-fading downlink for a 2-antenna transmitter.

Every user sees the same coherence time N; user j's first full block starts at
its offset. Channel coefficients are drawn per (user, coherence block) from a
counter-based generator so any lookup can be repeated in any order.
"""
from dataclasses import dataclass
from typing import NewType, Tuple

import numpy as np


BlockIndex = NewType("BlockIndex", int)

_SEED_LIMIT = 2 ** 64


class InvalidUser(IndexError):
    """Raised when a user index is outside the channel process."""


@dataclass(frozen=True)
class CoherenceSchedule:
    """One user's block-fading time structure."""

    N: int
    offset: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"Coherence length must be positive, got N={self.N}")
        if not 0 <= self.offset < self.N:
            raise ValueError(f"Offset must lie in [0, {self.N}), got {self.offset}")


def block_id(schedule: CoherenceSchedule, n: int) -> BlockIndex:
    """
    Label of the coherence block that contains slot n.

    The leading partial block (slots before the offset) is block 0 and the
    first full block is block 1, for every offset including 0.
    """
    if n < 0:
        raise ValueError(f"Slot index must be non-negative, got {n}")
    if n < schedule.offset:
        return BlockIndex(0)
    return BlockIndex((n - schedule.offset) // schedule.N + 1)


def block_ids(schedule: CoherenceSchedule, slots) -> np.ndarray:
    """Vectorised block_id over an array of slots."""
    slots = np.asarray(slots, dtype=np.int64)
    if np.any(slots < 0):
        raise ValueError("Slot indices must be non-negative")
    labels = (slots - schedule.offset) // schedule.N + 1
    return np.where(slots < schedule.offset, 0, labels)


def schedules_for(N: int, offset: int) -> Tuple[CoherenceSchedule, CoherenceSchedule]:
    """User 1 at offset 0, user 2 at the given offset."""
    return CoherenceSchedule(N, 0), CoherenceSchedule(N, offset)


class ChannelProcess:
    """
    Seeded map from (user, coherence block) to the pair [h_1j, h_2j].

    Each block gets its own Philox stream: the key is the seed and the counter
    carries (block, user), so the draw does not depend on which blocks were
    requested before it.
    """

    def __init__(self, seed: int, num_users: int = 2):
        """
        Args:
            seed: 64-bit unsigned key of the process
            num_users: Number of receivers served by the transmitter
        """
        if not 0 <= int(seed) < _SEED_LIMIT:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        if num_users < 1:
            raise ValueError(f"Number of users must be positive, got {num_users}")
        self.seed = int(seed)
        self.num_users = int(num_users)

    def __repr__(self):
        return f"ChannelProcess(seed={self.seed}, num_users={self.num_users})"

    def __eq__(self, other):
        if not isinstance(other, ChannelProcess):
            return NotImplemented
        return (self.seed, self.num_users) == (other.seed, other.num_users)

    def __hash__(self):
        return hash((self.seed, self.num_users))

    def _check_user(self, user: int):
        if not 0 <= user < self.num_users:
            raise InvalidUser(f"User {user} out of range for {self.num_users} users")

    def block_coefficients(self, user: int, block: int) -> np.ndarray:
        """
        Coefficient pair of one coherence block.

        Args:
            user: Receiver index
            block: Coherence block label (see block_id)

        Returns:
            complex128 array [h_1j, h_2j], i.i.d. CN(0, 1) entries
        """
        self._check_user(user)
        if block < 0:
            raise ValueError(f"Block index must be non-negative, got {block}")
        counter = np.array([0, block, user, 0], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=self.seed, counter=counter))
        draws = rng.standard_normal(4)
        return (draws[:2] + 1j * draws[2:]) / np.sqrt(2.0)

    def realization(self, seed: int, index: int) -> "ChannelProcess":
        """Independent process for Monte Carlo realization `index`."""
        state = np.random.SeedSequence([self.seed, int(seed), int(index)])
        derived = int(state.generate_state(1, dtype=np.uint64)[0])
        return ChannelProcess(derived, self.num_users)


def coefficients_at(process: ChannelProcess, schedule: CoherenceSchedule,
                    user: int, n: int) -> np.ndarray:
    """Channel vector H_j(n) = [h_1j(n), h_2j(n)] of `user` at slot n."""
    process._check_user(user)
    return process.block_coefficients(user, block_id(schedule, n))
