"""
Type-Z slot patterns and the decomposition of a 3N-slot window into N of them.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from fading import CoherenceSchedule, block_id, schedules_for

logger = logging.getLogger(__name__)

FAMILIES = ("gamma", "phi", "omega", "theta")


class InfeasibleOffset(ValueError):
    """Raised when the relative offset admits no type-Z decomposition."""


class DecompositionError(RuntimeError):
    """Raised when a constructed block does not classify as declared."""


class Orientation(str, Enum):
    RIGHT = "RIGHT"
    LEFT = "LEFT"
    NOT_Z = "NOT_Z"

    def flipped(self) -> "Orientation":
        if self is Orientation.RIGHT:
            return Orientation.LEFT
        if self is Orientation.LEFT:
            return Orientation.RIGHT
        return self


@dataclass(frozen=True)
class ZBlock:
    """
    Three slots n1 < n2 < n3 served as one supersymbol.

    user_blocks holds, per user, the coherence block labels at the three slots.
    """

    slots: Tuple[int, int, int]
    orientation: Orientation
    user_blocks: Tuple[Tuple[int, int, int], Tuple[int, int, int]]
    family: Optional[str] = None

    def __post_init__(self):
        n1, n2, n3 = self.slots
        if not n1 < n2 < n3:
            raise ValueError(f"Slots must be strictly increasing, got {self.slots}")
        if self.orientation is Orientation.NOT_Z:
            raise ValueError("A ZBlock must be RIGHT or LEFT")

    def shifted(self, delta: int, label_delta: int = 0) -> "ZBlock":
        labels = tuple(tuple(b + label_delta for b in user) for user in self.user_blocks)
        return ZBlock(tuple(n + delta for n in self.slots), self.orientation,
                      labels, self.family)

    def to_dict(self) -> Dict[str, Any]:
        return {"slots": list(self.slots), "orientation": self.orientation.value}


@dataclass(frozen=True)
class FamilyCounts:
    gamma: int
    phi: int
    omega: int
    theta: int

    @classmethod
    def for_tau(cls, N: int, tau: int) -> "FamilyCounts":
        return cls(tau, N - 2 * tau, 3 * tau - N, N - 2 * tau)

    @property
    def total(self) -> int:
        return self.gamma + self.phi + self.omega + self.theta

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.gamma, self.phi, self.omega, self.theta)

    def to_dict(self) -> Dict[str, int]:
        return dict(zip(FAMILIES, self.as_tuple()))


@dataclass(frozen=True)
class DecompositionPlan:
    """N type-Z blocks covering the window [start, start + 3N) exactly once."""

    N: int
    offset: int
    period: int
    tau: int
    start: int
    family_counts: FamilyCounts
    blocks: Tuple[ZBlock, ...] = field(default_factory=tuple)

    @property
    def window(self) -> range:
        return range(self.start, self.start + 3 * self.N)

    def shifted(self, periods: int) -> "DecompositionPlan":
        delta = 3 * self.N * periods
        return DecompositionPlan(self.N, self.offset, self.period + periods, self.tau,
                                 self.start + delta, self.family_counts,
                                 tuple(b.shifted(delta, 3 * periods) for b in self.blocks))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "offset": self.offset,
            "period": self.period,
            "tau": self.tau,
            "familyCounts": self.family_counts.to_dict(),
            "blocks": [b.to_dict() for b in self.blocks],
        }


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    failure: Optional[str] = None
    detail: str = ""

    def __bool__(self):
        return self.passed


# ============================================================================
# FEASIBILITY
# ============================================================================

def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def tau_of(N: int, offset: int) -> int:
    """Ring distance between the two users' block boundaries."""
    if not 0 <= offset < N:
        raise ValueError(f"Offset must lie in [0, {N}), got {offset}")
    return min(offset, N - offset)


def feasible(N: int, offset: int) -> bool:
    """True iff ceil(N/3) <= tau; tau <= floor(N/2) always holds."""
    return _ceil_div(N, 3) <= tau_of(N, offset)


# ============================================================================
# CLASSIFICATION
# ============================================================================

def _orientation_of(labels1: Sequence[int], labels2: Sequence[int]) -> Orientation:
    a1, b1, c1 = labels1
    a2, b2, c2 = labels2
    if a1 == b1 != c1 and a2 != b2 == c2:
        return Orientation.RIGHT
    if a1 != b1 == c1 and a2 == b2 != c2:
        return Orientation.LEFT
    return Orientation.NOT_Z


def classify_triple(sched1: CoherenceSchedule, sched2: CoherenceSchedule,
                    n1: int, n2: int, n3: int) -> Orientation:
    if not n1 < n2 < n3:
        raise ValueError(f"Slots must be strictly increasing, got {(n1, n2, n3)}")
    labels1 = tuple(block_id(sched1, n) for n in (n1, n2, n3))
    labels2 = tuple(block_id(sched2, n) for n in (n1, n2, n3))
    return _orientation_of(labels1, labels2)


def make_zblock(sched1: CoherenceSchedule, sched2: CoherenceSchedule,
                slots: Sequence[int], family: Optional[str] = None) -> ZBlock:
    """Classify a triple and wrap it as a ZBlock; NOT_Z triples are rejected."""
    n1, n2, n3 = (int(n) for n in slots)
    orientation = classify_triple(sched1, sched2, n1, n2, n3)
    if orientation is Orientation.NOT_Z:
        raise ValueError(f"Slots {(n1, n2, n3)} do not form a type-Z pattern")
    user_blocks = (tuple(int(block_id(sched1, n)) for n in (n1, n2, n3)),
                   tuple(int(block_id(sched2, n)) for n in (n1, n2, n3)))
    return ZBlock((n1, n2, n3), orientation, user_blocks, family)


# ============================================================================
# DECOMPOSITION
# ============================================================================

def _segments(start: int, lengths: Sequence[int]) -> List[List[int]]:
    out = []
    for length in lengths:
        out.append(list(range(start, start + length)))
        start += length
    return out


def _canonical_triples(N: int, tau: int, start: int) -> List[Tuple[str, Orientation, Tuple[int, int, int]]]:
    """
    Families for the zero-offset link on top and the tau-offset link below.

    Over the window the (top, bottom) block pair is constant on seven
    segments of lengths (tau, tau, N-tau, tau, N-tau, tau, N-2tau).
    """
    s1, s2, s3, s4, s5, s6, s7 = _segments(
        start, (tau, tau, N - tau, tau, N - tau, tau, N - 2 * tau))
    lean = N - 2 * tau
    wide = 3 * tau - N

    triples = []
    for t in zip(s1, s2, s3[:tau]):
        triples.append(("gamma", Orientation.LEFT, t))
    for t in zip(s3[tau:], s4[:lean], s5[:lean]):
        triples.append(("phi", Orientation.LEFT, t))
    for t in zip(s4[lean:], s5[lean:tau], s6[:wide]):
        triples.append(("omega", Orientation.RIGHT, t))
    for t in zip(s5[tau:], s6[wide:], s7):
        triples.append(("theta", Orientation.LEFT, t))
    return triples


def decompose_period(N: int, offset: int, period: int = 0) -> DecompositionPlan:
    """
    Split period `period` of the channel into N type-Z blocks.

    Offsets above floor(N/2) reuse the canonical construction with the users'
    roles swapped: the window is shifted by `offset`, which lines user 2's
    boundaries up with multiples of N, and every orientation flips.

    Raises:
        InfeasibleOffset: tau < ceil(N/3)
    """
    if period < 0:
        raise ValueError(f"Period must be non-negative, got {period}")
    if not feasible(N, offset):
        raise InfeasibleOffset(
            f"Offset {offset} with N={N} gives tau={tau_of(N, offset)} < ceil(N/3)={_ceil_div(N, 3)}")

    tau = tau_of(N, offset)
    mirrored = offset > N // 2
    shift = offset if mirrored else 0
    start = (N - tau) + 3 * N * period + shift
    sched1, sched2 = schedules_for(N, offset)

    logger.debug(f"Decomposing {3 * N} slots from slot {start} into {N} type-Z blocks "
                 f"(tau={tau}, mirrored={mirrored})")

    blocks = []
    for family, expected, slots in _canonical_triples(N, tau, start):
        if mirrored:
            expected = expected.flipped()
        block = make_zblock(sched1, sched2, slots, family)
        if block.orientation is not expected:
            raise DecompositionError(
                f"Block {slots} classified {block.orientation.value}, expected {expected.value}")
        blocks.append(block)

    return DecompositionPlan(N, offset, period, tau, start,
                             FamilyCounts.for_tau(N, tau), tuple(blocks))


def plan_periods(N: int, offset: int, periods: int) -> List[DecompositionPlan]:
    """Plans for periods 0..periods-1."""
    if periods < 1:
        raise ValueError(f"At least one period is required, got {periods}")
    return [decompose_period(N, offset, p) for p in range(periods)]


def unscheduled_slots(N: int, offset: int) -> range:
    """Leading slots before the first window; left for control traffic."""
    return range(0, decompose_period(N, offset, 0).start)


def effective_dof(N: int, offset: int, periods: int) -> float:
    """4/3 scaled by the share of slots actually carrying type-Z blocks."""
    head = len(unscheduled_slots(N, offset))
    used = 3 * N * periods
    return (4.0 / 3.0) * used / (head + used)


# ============================================================================
# VALIDATION
# ============================================================================

def validate_plan(plan: DecompositionPlan, sched1: CoherenceSchedule,
                  sched2: CoherenceSchedule) -> ValidationReport:
    """Check coverage, per-block classification and family counts."""
    used = Counter(n for block in plan.blocks for n in block.slots)
    expected = Counter(plan.window)
    if used != expected:
        duplicated = sorted(n for n, c in used.items() if c > 1)
        missing = sorted(set(expected) - set(used))
        outside = sorted(set(used) - set(expected))
        return ValidationReport(False, "coverage",
                                f"duplicated={duplicated} missing={missing} outside={outside}")
    if len(plan.blocks) != plan.N:
        return ValidationReport(False, "coverage",
                                f"{len(plan.blocks)} blocks for N={plan.N}")

    for block in plan.blocks:
        actual = classify_triple(sched1, sched2, *block.slots)
        if actual is not block.orientation:
            return ValidationReport(False, "classification",
                                    f"block {block.slots} is {actual.value}, "
                                    f"declared {block.orientation.value}")

    tau = tau_of(plan.N, plan.offset)
    wanted = FamilyCounts.for_tau(plan.N, tau)
    if plan.tau != tau or plan.family_counts != wanted or wanted.total != plan.N:
        return ValidationReport(False, "counts",
                                f"declared {plan.family_counts.as_tuple()} tau={plan.tau}, "
                                f"expected {wanted.as_tuple()} tau={tau}")
    tagged = Counter(b.family for b in plan.blocks)
    if any(b.family is not None for b in plan.blocks) and \
            tuple(tagged.get(f, 0) for f in FAMILIES) != wanted.as_tuple():
        return ValidationReport(False, "counts",
                                f"blocks per family {dict(tagged)}, expected {wanted.to_dict()}")

    return ValidationReport(True)
