"""
Blind interference alignment over one type-Z block.

The transmitter only knows the orientation of the block (from N and the
offsets), never the coefficient values; receivers know their own
coefficients and zero-force the aligned interference.

The same model covers the 2x2 X channel: antenna 1 and antenna 2 play the
roles of two single-antenna transmitters.
"""
import logging
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from fading import ChannelProcess, CoherenceSchedule, coefficients_at
from zpattern import DecompositionPlan, Orientation, ZBlock

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
SCHEMES = ("bia", "single_stream")


class NotAZPattern(ValueError):
    """Raised when beamformers are requested for a NOT_Z triple."""


class SingularEffectiveChannel(np.linalg.LinAlgError):
    """Raised when the post-projection 2x2 channel is numerically singular."""


@dataclass(frozen=True)
class BeamformerSet:
    """Binary signaling vectors: v1, v2 on antenna 1; u1, u2 on antenna 2."""

    v1: Tuple[int, int, int]
    v2: Tuple[int, int, int]
    u1: Tuple[int, int, int]
    u2: Tuple[int, int, int]

    def matrices(self) -> Tuple[np.ndarray, np.ndarray]:
        """([v1 v2], [u1 u2]) as 3x2 float arrays."""
        V = np.array([self.v1, self.v2], dtype=float).T
        U = np.array([self.u1, self.u2], dtype=float).T
        return V, U


@dataclass(frozen=True)
class SymbolFrame:
    s11: complex
    s12: complex
    s21: complex
    s22: complex

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("Symbols must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.s11, self.s12, self.s21, self.s22], dtype=complex)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "SymbolFrame":
        """Unit-power circularly-symmetric Gaussian symbols."""
        draws = rng.standard_normal(8)
        s = (draws[:4] + 1j * draws[4:]) / np.sqrt(2.0)
        return cls(*s)


@dataclass(frozen=True, eq=False)
class ReceivedFrame:
    y: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        if np.shape(self.y) != (3,):
            raise ValueError(f"A received frame spans 3 slots, got shape {np.shape(self.y)}")
        if self.noise_variance < 0:
            raise ValueError("Noise variance must be non-negative")


@dataclass(frozen=True, eq=False)
class EffectiveChannel:
    """
    Desired-signal map after interference nulling.

    basis rows are an orthonormal basis of the complement of the interference
    direction; G = basis @ desired columns.
    """

    G: np.ndarray
    interference_direction: Optional[np.ndarray]
    basis: np.ndarray

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.G))


@dataclass
class DofEstimate:
    N: int
    offset: int
    snr_db_low: float
    snr_db_high: float
    realizations: int
    dof_mean: float
    dof_stderr: float
    singular_skips: int
    scheme: str = "bia"
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def to_row(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "offset": self.offset,
            "snr_db_low": self.snr_db_low,
            "snr_db_high": self.snr_db_high,
            "realizations": self.realizations,
            "dof_mean": self.dof_mean,
            "dof_stderr": self.dof_stderr,
            "singular_skips": self.singular_skips,
            "scheme": self.scheme,
        }


# ============================================================================
# PRECODING
# ============================================================================

def beamformers(orientation: Orientation) -> BeamformerSet:
    """Channel-blind signaling vectors for a type-Z block."""
    if orientation is Orientation.RIGHT:
        v1, v2 = (1, 1, 0), (0, 1, 1)
    elif orientation is Orientation.LEFT:
        v1, v2 = (0, 1, 1), (1, 1, 0)
    else:
        raise NotAZPattern(f"No blind beamformers for orientation {orientation}")
    return BeamformerSet(v1=v1, v2=v2, u1=v1, u2=v2)


def single_stream_beamformers(orientation: Orientation) -> BeamformerSet:
    """Baseline that sends s11 alone on v1; every other vector is zero."""
    full = beamformers(orientation)
    silent = (0, 0, 0)
    return BeamformerSet(v1=full.v1, v2=silent, u1=silent, u2=silent)


def transmit(frame: SymbolFrame, bf: BeamformerSet) -> np.ndarray:
    """
    Antenna signals over the three slots.

    Returns:
        3x2 complex array; column 0 is antenna 1, column 1 is antenna 2
    """
    V, U = bf.matrices()
    s = frame.as_array()
    return np.column_stack([V @ s[:2], U @ s[2:]])


# ============================================================================
# CHANNEL
# ============================================================================

def block_csir(process: ChannelProcess, schedules: Sequence[CoherenceSchedule],
               zblock: ZBlock) -> np.ndarray:
    """
    Coefficients seen by both receivers over the block.

    Returns:
        2x3x2 complex array indexed [receiver, slot, antenna]
    """
    return np.array([[coefficients_at(process, schedules[j], j, n) for n in zblock.slots]
                     for j in range(2)])


def propagate(process: ChannelProcess, schedules: Sequence[CoherenceSchedule],
              zblock: ZBlock, tx: np.ndarray, noise_variance: float,
              noise_seed: Optional[int] = None) -> Tuple[ReceivedFrame, ReceivedFrame]:
    """
    y_j[k] = h_1j(n_k) x_1[k] + h_2j(n_k) x_2[k] + z_j[k].

    Raises:
        ValueError: noise_variance > 0 without a noise_seed
    """
    if noise_variance < 0:
        raise ValueError(f"Noise variance must be non-negative, got {noise_variance}")
    if noise_variance > 0 and noise_seed is None:
        raise ValueError("A noise_seed is required when noise_variance > 0")
    csir = block_csir(process, schedules, zblock)
    tx = np.asarray(tx, dtype=complex)
    rng = np.random.default_rng(noise_seed)

    frames = []
    for j in range(2):
        y = np.sum(csir[j] * tx, axis=1)
        if noise_variance > 0:
            draws = rng.standard_normal((2, 3))
            y = y + np.sqrt(noise_variance / 2.0) * (draws[0] + 1j * draws[1])
        frames.append(ReceivedFrame(y, noise_variance))
    return frames[0], frames[1]


def signal_columns(csir_j: np.ndarray, bf: BeamformerSet) -> np.ndarray:
    """Received-signal map [H_1j v1, H_1j v2, H_2j u1, H_2j u2] at one receiver."""
    V, U = bf.matrices()
    return np.column_stack([csir_j[:, :1] * V, csir_j[:, 1:] * U])


# ============================================================================
# ALIGNMENT
# ============================================================================

def _sine(a: np.ndarray, b: np.ndarray) -> float:
    # |a x b| from 2x2 minors; identical products cancel exactly
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        return 0.0
    minors = [a[k] * b[m] - a[m] * b[k] for k in range(3) for m in range(k + 1, 3)]
    wedge = np.sqrt(sum(abs(x) ** 2 for x in minors))
    return float(min(1.0, wedge / (norm_a * norm_b)))


def alignment_residual(csir: np.ndarray, bf: BeamformerSet) -> float:
    """Largest sine between the two interfering columns at either receiver."""
    rx1 = signal_columns(csir[0], bf)
    rx2 = signal_columns(csir[1], bf)
    return max(_sine(rx1[:, 0], rx1[:, 2]), _sine(rx2[:, 1], rx2[:, 3]))


def check_alignment(process: ChannelProcess, schedules: Sequence[CoherenceSchedule],
                    zblock: ZBlock, bf: BeamformerSet) -> float:
    return alignment_residual(block_csir(process, schedules, zblock), bf)


# ============================================================================
# DECODING
# ============================================================================

_ROLE_COLUMNS = {
    # role: (interference columns, desired columns) of signal_columns
    1: ((0, 2), (1, 3)),
    2: ((1, 3), (0, 2)),
}


def effective_channel(csir_j: np.ndarray, bf: BeamformerSet, role: int) -> EffectiveChannel:
    """
    Project out the interference line and return the 2x2 desired map.

    Raises:
        SingularEffectiveChannel: condition number above CONDITION_LIMIT
    """
    if role not in _ROLE_COLUMNS:
        raise ValueError(f"Receiver role must be 1 or 2, got {role}")
    interfering, desired = _ROLE_COLUMNS[role]
    columns = signal_columns(np.asarray(csir_j, dtype=complex), bf)

    U, s, _ = np.linalg.svd(columns[:, interfering], full_matrices=True)
    direction = U[:, 0] if s[0] > 0 else None
    basis = U[:, 1:].conj().T
    eff = EffectiveChannel(basis @ columns[:, desired], direction, basis)

    condition = eff.condition
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularEffectiveChannel(
            f"Effective channel of receiver {role} has condition number {condition:.3g}")
    return eff


def zf_decode(rx: ReceivedFrame, csir: np.ndarray, bf: BeamformerSet,
              role: int) -> Tuple[np.ndarray, EffectiveChannel]:
    """
    Zero-forcing decoder of one receiver.

    Args:
        rx: Frame received over the three slots
        csir: 3x2 own coefficients, row k = [h_1j(n_k), h_2j(n_k)]
        bf: Beamformers used by the transmitter
        role: 1 decodes (s12, s22), 2 decodes (s11, s21)

    Returns:
        (decoded symbol pair, effective channel)
    """
    eff = effective_channel(csir, bf, role)
    projected = eff.basis @ np.asarray(rx.y, dtype=complex)
    symbols = np.linalg.lstsq(eff.G, projected, rcond=None)[0]
    return symbols, eff


# ============================================================================
# RATES
# ============================================================================

def _log_det_rate(G: np.ndarray, snr: float) -> float:
    gram = np.eye(G.shape[0]) + snr * (G @ G.conj().T)
    _, logdet = np.linalg.slogdet(gram)
    return float(logdet / np.log(2.0))


def sum_rate_from_csir(csir: np.ndarray, orientation: Orientation, snr: float) -> float:
    bf = beamformers(orientation)
    total = 0.0
    for role in (1, 2):
        eff = effective_channel(csir[role - 1], bf, role)
        total += _log_det_rate(eff.G, snr)
    return total / 3.0


def single_stream_rate_from_csir(csir: np.ndarray, orientation: Orientation, snr: float) -> float:
    bf = single_stream_beamformers(orientation)
    gain = signal_columns(csir[1], bf)[:, 0]
    return float(np.log2(1.0 + snr * np.vdot(gain, gain).real)) / 3.0


def sum_rate(process: ChannelProcess, schedules: Sequence[CoherenceSchedule],
             zblock: ZBlock, snr: float) -> float:
    """(R1 + R2) / 3 in bits per slot, R_j = log2 det(I + snr G_j G_j^H)."""
    if snr <= 0:
        raise ValueError(f"SNR must be positive, got {snr}")
    return sum_rate_from_csir(block_csir(process, schedules, zblock), zblock.orientation, snr)


def single_stream_rate(process: ChannelProcess, schedules: Sequence[CoherenceSchedule],
                       zblock: ZBlock, snr: float) -> float:
    """Rate of the baseline: s11 to receiver 2 only, bits per slot."""
    if snr <= 0:
        raise ValueError(f"SNR must be positive, got {snr}")
    return single_stream_rate_from_csir(block_csir(process, schedules, zblock),
                                        zblock.orientation, snr)


_RATE_FUNCTIONS = {
    "bia": sum_rate_from_csir,
    "single_stream": single_stream_rate_from_csir,
}


def _db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


# ============================================================================
# MONTE CARLO
# ============================================================================

def _realization_slope(task) -> Optional[float]:
    """DoF slope of one realization averaged over the plan; None if singular."""
    process, schedules, plan, snr_low, snr_high, scheme = task
    rate = _RATE_FUNCTIONS[scheme]
    span = np.log2(snr_high) - np.log2(snr_low)
    slopes = []
    try:
        for block in plan.blocks:
            csir = block_csir(process, schedules, block)
            gain = rate(csir, block.orientation, snr_high) - rate(csir, block.orientation, snr_low)
            slopes.append(gain / span)
    except SingularEffectiveChannel:
        return None
    return float(np.mean(slopes))


def _realization_rates(task) -> Optional[List[float]]:
    process, schedules, plan, snrs, scheme = task
    rate = _RATE_FUNCTIONS[scheme]
    try:
        per_block = [[rate(block_csir(process, schedules, block), block.orientation, snr)
                      for snr in snrs] for block in plan.blocks]
    except SingularEffectiveChannel:
        return None
    return list(np.mean(per_block, axis=0))


def _run(worker, tasks: List, workers: int, show_progress: bool, desc: str) -> List:
    if workers > 1:
        with Pool(workers) as pool:
            results = list(tqdm(pool.imap(worker, tasks), total=len(tasks),
                                desc=desc, disable=not show_progress))
    else:
        results = [worker(t) for t in tqdm(tasks, desc=desc, disable=not show_progress)]
    return results


def estimate_dof(process: ChannelProcess, schedules: Sequence[CoherenceSchedule],
                 plan: DecompositionPlan, snr_db_low: float, snr_db_high: float,
                 realizations: int, seed: int, scheme: str = "bia",
                 workers: int = 1, show_progress: bool = False) -> DofEstimate:
    """
    High-SNR slope of the rate, averaged over realizations and plan blocks.

    Realization r draws its channel from process.realization(seed, r), so the
    estimate does not depend on the number of workers.
    """
    if not snr_db_high > snr_db_low >= 30:
        raise ValueError(f"Need snr_db_high > snr_db_low >= 30, got {snr_db_low}, {snr_db_high}")
    if realizations < 1:
        raise ValueError(f"At least one realization is required, got {realizations}")
    if scheme not in SCHEMES:
        raise ValueError(f"Unknown scheme '{scheme}', expected one of {SCHEMES}")

    logger.info(f"Estimating {scheme} DoF over {realizations} realizations "
                f"({snr_db_low:g}-{snr_db_high:g} dB, N={plan.N}, offset={plan.offset})")

    snr_low, snr_high = _db_to_linear(snr_db_low), _db_to_linear(snr_db_high)
    tasks = [(process.realization(seed, r), tuple(schedules), plan, snr_low, snr_high, scheme)
             for r in range(realizations)]
    results = _run(_realization_slope, tasks, workers, show_progress, "DoF realizations")

    kept = np.array([x for x in results if x is not None], dtype=float)
    skips = len(results) - len(kept)
    if skips:
        logger.warning(f"Skipped {skips} realizations with a singular effective channel")
    if len(kept) == 0:
        raise SingularEffectiveChannel("Every realization was singular")

    stderr = float(np.std(kept, ddof=1) / np.sqrt(len(kept))) if len(kept) > 1 else 0.0
    return DofEstimate(plan.N, plan.offset, snr_db_low, snr_db_high, realizations,
                       float(np.mean(kept)), stderr, skips, scheme, kept)


def average_sum_rate(process: ChannelProcess, schedules: Sequence[CoherenceSchedule],
                     plan: DecompositionPlan, snr_db_grid: Sequence[float],
                     realizations: int, seed: int, scheme: str = "bia",
                     workers: int = 1, show_progress: bool = False) -> List[Dict[str, Any]]:
    """Mean rate (bits per slot) and its standard error at every grid SNR."""
    if len(snr_db_grid) == 0:
        raise ValueError("SNR grid is empty")
    if realizations < 1:
        raise ValueError(f"At least one realization is required, got {realizations}")
    if scheme not in SCHEMES:
        raise ValueError(f"Unknown scheme '{scheme}', expected one of {SCHEMES}")

    snrs = [_db_to_linear(x) for x in snr_db_grid]
    tasks = [(process.realization(seed, r), tuple(schedules), plan, snrs, scheme)
             for r in range(realizations)]
    results = _run(_realization_rates, tasks, workers, show_progress, "Rate realizations")
    kept = np.array([x for x in results if x is not None], dtype=float).reshape(-1, len(snrs))

    rows = []
    for i, snr_db in enumerate(snr_db_grid):
        column = kept[:, i]
        stderr = float(np.std(column, ddof=1) / np.sqrt(len(column))) if len(column) > 1 else 0.0
        rows.append({
            "snr_db": float(snr_db),
            "scheme": scheme,
            "sum_rate_mean": float(np.mean(column)) if len(column) else float("nan"),
            "sum_rate_stderr": stderr,
            "singular_skips": len(results) - len(kept),
        })
    return rows
