"""
K-user offset combinatorics: can the transmitter find two users whose block
boundaries are far enough apart on the ring of N slots to run BIA?

All counts and probabilities are exact (int / Fraction); floats appear only
in Monte Carlo estimates and at the reporting boundary.
"""
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction
from multiprocessing import Pool
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = int(os.environ.get("BIA_ENUM_BUDGET", str(10 ** 8)))
ENUM_CHUNK = 1 << 20
MC_CHUNK = 1 << 16


class OutOfDomain(ValueError):
    """Raised when a closed form is evaluated outside its domain."""


class BudgetExceeded(RuntimeError):
    """Raised when exhaustive enumeration would exceed the tuple budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"Enumeration needs {required} tuples, budget is {budget}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class OffsetAssignment:
    """Block offsets of K users; user 0 is the reference at offset 0."""

    N: int
    offsets: tuple

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        if self.N < 1:
            raise ValueError(f"N must be positive, got {self.N}")
        if len(self.offsets) < 2:
            raise ValueError("An assignment needs at least two users")
        if self.offsets[0] != 0:
            raise ValueError(f"User 0 must sit at offset 0, got {self.offsets[0]}")
        if any(not 0 <= o < self.N for o in self.offsets):
            raise ValueError(f"Offsets must lie in [0, {self.N}), got {self.offsets}")

    @property
    def K(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True)
class PairwiseTau:
    i: int
    j: int
    tau: int


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    samples: int
    hits: int


@dataclass
class PairingReport:
    N: int
    K: int
    formula_value: Optional[int] = None
    oracle_count: Optional[int] = None
    p_exact: Optional[Fraction] = None
    p_lower_bound: Optional[Fraction] = None
    p_two_user: Optional[Fraction] = None
    p_montecarlo: Optional[MonteCarloEstimate] = None
    notes: List[str] = field(default_factory=list)

    @property
    def bound_holds(self) -> Optional[bool]:
        if self.p_exact is None or self.p_lower_bound is None:
            return None
        return self.p_lower_bound <= self.p_exact

    def to_row(self) -> Dict[str, Any]:
        """Flat record; exact values as 'p/q' strings plus 6-place decimals."""
        mc = self.p_montecarlo
        return {
            "N": self.N,
            "K": self.K,
            "formula": _blank(self.formula_value),
            "oracle": _blank(self.oracle_count),
            "p_exact": _blank(self.p_exact),
            "p_exact_decimal": _decimal(self.p_exact),
            "lower_bound": _blank(self.p_lower_bound),
            "lower_bound_decimal": _decimal(self.p_lower_bound),
            "bound_holds": _blank(self.bound_holds),
            "p_two_user": _blank(self.p_two_user),
            "p_montecarlo": "" if mc is None else f"{mc.value:.6f}",
            "p_montecarlo_stderr": "" if mc is None else f"{mc.stderr:.6f}",
            "samples": "" if mc is None else str(mc.samples),
        }


def _blank(value) -> str:
    return "" if value is None else str(value)


def _decimal(value: Optional[Fraction]) -> str:
    return "" if value is None else f"{float(value):.6f}"


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def ring_threshold(N: int) -> int:
    """ceil(N/3): the smallest ring distance that admits BIA."""
    return _ceil_div(N, 3)


# ============================================================================
# CLOSED FORMS
# ============================================================================

def theta(a: int, b: int) -> int:
    """Sum of i**b for i = 1..a, exact."""
    if b < 0:
        raise OutOfDomain(f"Exponent must be non-negative, got b={b}")
    if a < 1:
        raise OutOfDomain(f"Upper limit must be positive, got a={a}")
    return sum(i ** b for i in range(1, a + 1))


def f_formula(N: int, K: int) -> int:
    """Closed-form count of tuples with every pairwise distance below ceil(N/3)."""
    if N < 1:
        raise OutOfDomain(f"N must be positive, got {N}")
    if K < 3:
        raise OutOfDomain(f"Closed form needs K >= 3, got K={K}")
    c = ring_threshold(N)
    return 3 * theta(c, K - 2) - 2 * theta(c, K - 3)


def f_arc_sum(N: int, K: int) -> int:
    """
    f_formula written term by term as 1 + sum (3n+1)(n+1)**(K-3), n = 1..c-1.

    The substitution m = n + 1 turns it back into the theta form, so it checks
    the theta arithmetic only; the enumeration oracle is the independent count.
    """
    if N < 1:
        raise OutOfDomain(f"N must be positive, got {N}")
    if K < 3:
        raise OutOfDomain(f"Arc sum needs K >= 3, got K={K}")
    c = ring_threshold(N)
    return 1 + sum((3 * n + 1) * (n + 1) ** (K - 3) for n in range(1, c))


def p_lower_bound(N: int, K: int) -> Fraction:
    """1 - 3*theta(ceil(N/3), K-2) / N**(K-1); not clamped to [0, 1]."""
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    total = N ** (K - 1)
    return 1 - Fraction(3 * theta(ring_threshold(N), K - 2), total)


def p_exact_two_user(N: int) -> Fraction:
    """Probability that a uniform offset gives tau >= ceil(N/3)."""
    if N < 3:
        raise ValueError(f"N must be at least 3, got {N}")
    return Fraction(N - 2 * ring_threshold(N) + 1, N)


# ============================================================================
# ENUMERATION ORACLE
# ============================================================================

def _blocked_mask(offsets: np.ndarray, N: int) -> np.ndarray:
    """Rows of `offsets` in which every pair sits closer than ceil(N/3)."""
    c = ring_threshold(N)
    K = offsets.shape[1]
    blocked = np.ones(offsets.shape[0], dtype=bool)
    for i in range(K):
        for j in range(i + 1, K):
            d = np.abs(offsets[:, i] - offsets[:, j])
            blocked &= np.minimum(d, N - d) < c
    return blocked


def _count_chunk(task) -> int:
    N, K, start, stop = task
    index = np.arange(start, stop, dtype=np.int64)
    offsets = np.zeros((len(index), K), dtype=np.int64)
    for col in range(1, K):
        offsets[:, col] = index % N
        index = index // N
    return int(np.count_nonzero(_blocked_mask(offsets, N)))


def count_blocked_bruteforce(N: int, K: int, budget: int = DEFAULT_BUDGET,
                             workers: int = 1, show_progress: bool = False) -> int:
    """
    Count ordered offset tuples (user 0 at 0) with no BIA-feasible pair.

    Raises:
        BudgetExceeded: N**(K-1) > budget
    """
    if N < 1 or K < 2:
        raise ValueError(f"Need N >= 1 and K >= 2, got N={N}, K={K}")
    total = N ** (K - 1)
    if total > budget:
        raise BudgetExceeded(total, budget)

    logger.debug(f"Enumerating {total} offset tuples for N={N}, K={K}")
    tasks = [(N, K, start, min(start + ENUM_CHUNK, total))
             for start in range(0, total, ENUM_CHUNK)]
    if workers > 1 and len(tasks) > 1:
        with Pool(workers) as pool:
            counts = list(tqdm(pool.imap(_count_chunk, tasks), total=len(tasks),
                               desc="Enumerating", disable=not show_progress))
    else:
        counts = [_count_chunk(t) for t in tqdm(tasks, desc="Enumerating",
                                                disable=not show_progress)]
    return sum(counts)


def p_exact(N: int, K: int, budget: int = DEFAULT_BUDGET, workers: int = 1) -> Fraction:
    """1 - count_blocked_bruteforce(N, K) / N**(K-1)."""
    blocked = count_blocked_bruteforce(N, K, budget=budget, workers=workers)
    return 1 - Fraction(blocked, N ** (K - 1))


# ============================================================================
# MONTE CARLO
# ============================================================================

def _sample_chunk(task) -> int:
    N, K, seed, chunk, size = task
    rng = np.random.default_rng([seed, chunk])
    offsets = np.zeros((size, K), dtype=np.int64)
    offsets[:, 1:] = rng.integers(0, N, size=(size, K - 1))
    return int(size - np.count_nonzero(_blocked_mask(offsets, N)))


def p_montecarlo(N: int, K: int, samples: int, seed: int, workers: int = 1,
                 show_progress: bool = False) -> MonteCarloEstimate:
    """
    Fraction of sampled assignments with at least one pair at tau >= ceil(N/3).

    Samples are drawn in fixed chunks of MC_CHUNK keyed by (seed, chunk
    index), so the estimate is the same for any worker count.
    """
    if samples < 1:
        raise ValueError(f"At least one sample is required, got {samples}")
    if N < 1 or K < 2:
        raise ValueError(f"Need N >= 1 and K >= 2, got N={N}, K={K}")

    tasks = [(N, K, seed, chunk, min(MC_CHUNK, samples - start))
             for chunk, start in enumerate(range(0, samples, MC_CHUNK))]
    if workers > 1 and len(tasks) > 1:
        with Pool(workers) as pool:
            hits = list(tqdm(pool.imap(_sample_chunk, tasks), total=len(tasks),
                             desc="Sampling", disable=not show_progress))
    else:
        hits = [_sample_chunk(t) for t in tqdm(tasks, desc="Sampling",
                                               disable=not show_progress)]
    total_hits = sum(hits)
    p = total_hits / samples
    return MonteCarloEstimate(p, float(np.sqrt(p * (1 - p) / samples)), samples, total_hits)


# ============================================================================
# PAIR SELECTION
# ============================================================================

def pairwise_taus(assignment: OffsetAssignment) -> List[PairwiseTau]:
    N = assignment.N
    out = []
    for i in range(assignment.K):
        for j in range(i + 1, assignment.K):
            d = abs(assignment.offsets[i] - assignment.offsets[j])
            out.append(PairwiseTau(i, j, min(d, N - d)))
    return out


def select_pair(assignment: OffsetAssignment) -> Optional[PairwiseTau]:
    """Feasible pair with the largest tau; ties go to the smallest (i, j)."""
    c = ring_threshold(assignment.N)
    best = None
    for pair in pairwise_taus(assignment):
        if pair.tau >= c and (best is None or pair.tau > best.tau):
            best = pair
    return best


# ============================================================================
# REPORTS
# ============================================================================

def compare_formula_oracle(N: int, K: int, budget: int = DEFAULT_BUDGET,
                           workers: int = 1) -> PairingReport:
    """Closed form next to the enumeration count; no equality is asserted."""
    if K < 3:
        raise OutOfDomain(f"Comparison needs K >= 3, got K={K}")
    formula = f_formula(N, K)
    oracle = count_blocked_bruteforce(N, K, budget=budget, workers=workers)
    total = N ** (K - 1)
    report = PairingReport(N, K, formula_value=formula, oracle_count=oracle,
                           p_exact=1 - Fraction(oracle, total),
                           p_lower_bound=p_lower_bound(N, K))
    if formula != oracle:
        report.notes.append(f"closed form {formula} differs from enumeration {oracle}")
        logger.info(f"N={N}, K={K}: closed form {formula} vs enumeration {oracle}")
    return report


def pairing_report(N: int, K: int, budget: int = DEFAULT_BUDGET, skip_oracle: bool = False,
                   samples: int = 0, seed: int = 0, workers: int = 1,
                   show_progress: bool = False) -> PairingReport:
    """
    Every estimator that applies to (N, K).

    Raises:
        BudgetExceeded: enumeration is too large and skip_oracle is False
    """
    if N < 1 or K < 2:
        raise ValueError(f"Need N >= 1 and K >= 2, got N={N}, K={K}")
    report = PairingReport(N, K, p_lower_bound=p_lower_bound(N, K))
    try:
        report.formula_value = f_formula(N, K)
    except OutOfDomain as e:
        report.notes.append(str(e))
    if K == 2 and N >= 3:
        report.p_two_user = p_exact_two_user(N)
    if not skip_oracle:
        report.oracle_count = count_blocked_bruteforce(N, K, budget=budget, workers=workers,
                                                       show_progress=show_progress)
        report.p_exact = 1 - Fraction(report.oracle_count, N ** (K - 1))
    if samples > 0:
        report.p_montecarlo = p_montecarlo(N, K, samples, seed, workers=workers,
                                           show_progress=show_progress)
    return report


def lower_bound_sweep(ns: Iterable[int], ks: Iterable[int], with_exact: bool = False,
                      samples: int = 0, seed: int = 0, budget: int = DEFAULT_BUDGET,
                      workers: int = 1) -> pd.DataFrame:
    """Lower-bound curves P(N, K) >= ..., one row per (N, K)."""
    rows = []
    ks = list(ks)
    for N in ns:
        for K in ks:
            row = {"N": N, "K": K, "lower_bound": f"{float(p_lower_bound(N, K)):.6f}"}
            if with_exact:
                try:
                    row["exact"] = f"{float(p_exact(N, K, budget=budget, workers=workers)):.6f}"
                except BudgetExceeded:
                    row["exact"] = ""
            if samples > 0:
                row["mc"] = f"{p_montecarlo(N, K, samples, seed, workers=workers).value:.6f}"
            rows.append(row)
    return pd.DataFrame(rows)
