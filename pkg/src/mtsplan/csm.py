"""Phase-shift optimization against a black-box RSS oracle.

No channel estimation anywhere: the solver draws random binary phase
configurations, records the resulting per-user RSS (linear milliwatts),
and sets each atom to whichever of its two phase values has the larger
conditional sample mean of RSS. Multi-user solves run per user on the
shared sample log and are merged by per-bit majority voting. Greedy
best-sample and exhaustive search are provided as benchmarks.

Averaging is always done on linear power; tie-breaks always fall to
phase 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raytrace import phase_factors

EXHAUSTIVE_ATOM_LIMIT = 20


@dataclass(frozen=True)
class SampleLog:
    """Random phase samples and the RSS each one produced.

    bits: (T, N) uint8, one row per sample; rss: (T, U) linear mW, one
    column per user.
    """

    bits: np.ndarray
    rss: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        rss = np.asarray(self.rss, dtype=float)
        if rss.ndim == 1:
            rss = rss[:, None]
        if bits.shape[0] != rss.shape[0]:
            raise ValueError("bits and rss must have one row per sample")
        if not np.all(np.isfinite(rss)) or np.any(rss < 0):
            raise ValueError("rss values must be finite and non-negative")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "rss", rss)

    @property
    def T(self) -> int:
        return self.bits.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.bits.shape[1]

    @property
    def n_users(self) -> int:
        return self.rss.shape[1]

    def write_csv(self, path) -> None:
        """`sample_idx, bits_hex, rss_user0_mw, ...` rows for offline audit."""
        header = "sample_idx,bits_hex," + ",".join(
            f"rss_user{u}_mw" for u in range(self.n_users)
        )
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(header + "\n")
            for t in range(self.T):
                vals = ",".join(f"{v:.12g}" for v in self.rss[t])
                f.write(f"{t},{bits_to_hex(self.bits[t])},{vals}\n")


class RssOracle:
    """Behavioral contract: evaluate(bits) -> per-user RSS in linear mW."""

    def evaluate(self, bits) -> np.ndarray:
        raise NotImplementedError

    def evaluate_batch(self, bits) -> np.ndarray:
        """(B, N) bits -> (B, U) RSS; default loops over evaluate()."""
        return np.stack([self.evaluate(row) for row in np.asarray(bits)])


class SimulationOracle(RssOracle):
    """Oracle backed by cascaded channels: RSS = tx_mw * |h0 + sum a b s|^2."""

    def __init__(self, direct, a, b, tx_power_dbm: float = 0.0):
        self.direct = np.atleast_1d(np.asarray(direct, dtype=complex))  # (U,)
        self.a = np.asarray(a, dtype=complex)                           # (N,)
        b = np.asarray(b, dtype=complex)
        if b.ndim == 1:
            b = b[:, None]
        self.b = b                                                      # (N, U)
        self.tx_mw = 10.0 ** (tx_power_dbm / 10.0)
        if self.b.shape[0] != self.a.shape[0] or self.b.shape[1] != self.direct.shape[0]:
            raise ValueError("inconsistent channel dimensions")

    @property
    def n_atoms(self) -> int:
        return self.a.shape[0]

    @property
    def n_users(self) -> int:
        return self.direct.shape[0]

    def evaluate(self, bits) -> np.ndarray:
        return self.evaluate_batch(np.asarray(bits)[None, :])[0]

    def evaluate_batch(self, bits) -> np.ndarray:
        signs = phase_factors(np.asarray(bits))        # (B, N)
        fld = self.direct[None, :] + (signs * self.a[None, :]) @ self.b
        return self.tx_mw * np.abs(fld) ** 2


def draw_samples(n_atoms: int, T: int, seed: int) -> np.ndarray:
    """T random phase vectors, bits i.i.d. uniform over {0, 1}."""
    if n_atoms < 1 or T < 1:
        raise ValueError("need n_atoms >= 1 and T >= 1")
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=(T, n_atoms), dtype=np.uint8)


def conditional_sample_mean(log: SampleLog, atom: int, value: int, user: int = 0) -> float:
    """Mean RSS over the samples whose given atom bit equals value.

    Falls back to the unconditional mean when no sample matches (possible
    at tiny T), which leaves the atom's decision a tie.
    """
    if log.T == 0:
        raise ValueError("empty sample log")
    mask = log.bits[:, atom] == value
    col = log.rss[:, user]
    if not mask.any():
        return float(col.mean())
    return float(col[mask].mean())


def decide_from_log(log: SampleLog, user: int = 0) -> np.ndarray:
    """Per-atom argmax of the two conditional means; ties go to phase 0."""
    bits = log.bits
    rss = log.rss[:, user]
    n = log.n_atoms
    ones = bits != 0
    count1 = ones.sum(axis=0).astype(float)
    count0 = log.T - count1
    sum1 = rss @ ones
    sum0 = rss.sum() - sum1
    overall = rss.mean()
    mean0 = np.where(count0 > 0, sum0 / np.maximum(count0, 1), overall)
    mean1 = np.where(count1 > 0, sum1 / np.maximum(count1, 1), overall)
    return (mean1 > mean0).astype(np.uint8).reshape(n)


def csm_solve(oracle, n_atoms: int, T: int, seed: int, user: int = 0, samples=None):
    """Draw samples, query the oracle, and decide each bit by conditional
    sample mean for the given user.

    Returns (bits, log); pass samples to replay a fixed sequence instead
    of drawing.
    """
    if samples is None:
        samples = draw_samples(n_atoms, T, seed)
    else:
        samples = np.asarray(samples, dtype=np.uint8)
    rss = _evaluate(oracle, samples)
    log = SampleLog(bits=samples, rss=rss)
    return decide_from_log(log, user=user), log


def majority_vote(votes) -> np.ndarray:
    """Per-bit strict majority across vote vectors; exact ties go to 0."""
    votes = np.asarray(votes, dtype=np.uint8)
    if votes.ndim != 2 or votes.shape[0] < 1:
        raise ValueError("need at least one vote vector")
    ones = votes.sum(axis=0)
    return (2 * ones > votes.shape[0]).astype(np.uint8)


def greedy_baseline(oracle, n_atoms: int, T: int, seed: int, samples=None):
    """Best random sample by minimum per-user RSS.

    Returns (bits, log); pass samples to replay a fixed sequence.
    """
    if samples is None:
        samples = draw_samples(n_atoms, T, seed)
    else:
        samples = np.asarray(samples, dtype=np.uint8)
    rss = _evaluate(oracle, samples)
    log = SampleLog(bits=samples, rss=rss)
    best = int(np.argmax(log.rss.min(axis=1)))
    return log.bits[best].copy(), log


def exhaustive_solve(oracle, n_atoms: int) -> np.ndarray:
    """Global argmax of min-user RSS over all 2^n phase vectors.

    Ties resolve to the lexicographically smallest vector. Refuses more
    than EXHAUSTIVE_ATOM_LIMIT atoms.
    """
    if n_atoms > EXHAUSTIVE_ATOM_LIMIT:
        raise ValueError(
            f"exhaustive search over 2^{n_atoms} states refused "
            f"(limit {EXHAUSTIVE_ATOM_LIMIT} atoms)"
        )
    best_bits = None
    best_score = -np.inf
    shifts = np.arange(n_atoms - 1, -1, -1)
    for start in range(0, 2 ** n_atoms, 65536):
        stop = min(start + 65536, 2 ** n_atoms)
        codes = np.arange(start, stop, dtype=np.int64)
        # big-endian bit layout: enumeration order is lexicographic on bits
        block = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
        scores = _evaluate(oracle, block).min(axis=1)
        k = int(np.argmax(scores))
        if scores[k] > best_score:
            best_score = float(scores[k])
            best_bits = block[k].copy()
    return best_bits


def bits_to_hex(bits) -> str:
    """Pack a bit vector into a hex string (bit 0 is the MSB of byte 0)."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()


def hex_to_bits(hexstr: str, n_atoms: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hexstr), dtype=np.uint8)
    return np.unpackbits(raw)[:n_atoms]


def _evaluate(oracle, samples) -> np.ndarray:
    rss = np.asarray(oracle.evaluate_batch(samples), dtype=float)
    if rss.ndim == 1:
        rss = rss[:, None]
    return rss
