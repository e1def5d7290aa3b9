"""
Monte-Carlo ground truth for the residual distribution and alarm rate

The residual obeys e+ = (F-LC) e + v - L eta, r = C e + eta. Noise for step t
comes from block t // mc_block_size of the stream (seed, block), so the same
trajectory is drawn whatever the batch partition. Batches cover contiguous
step ranges and warm up from zero error over the burn_in steps before their
range.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy import linalg as la
from scipy.signal import lfilter
from scipy.stats import kstest

from src.config import settings
from src.models.detector import ChiSquaredDetector
from src.models.mixture import Gmm
from src.models.response import EmpiricalSummary
from src.models.system import LtiSystem
from src.services import gmm as gmm_ops
from src.services.detector import distance_measure
from src.services.lti_core import require_stable
from src.utils.errors import DomainError, StructuralError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class Accumulator:
    """
    Streaming counts, moments and histograms; merge is associative

    ks_hist counts the first residual component on a fine fixed grid with
    open outer bins, for a KS distance in O(ks_bins) memory.
    """

    count: int
    alarms: int
    mean: np.ndarray
    m2: np.ndarray
    hist: np.ndarray
    ks_hist: np.ndarray | None = None

    @classmethod
    def empty(cls, p: int, bins: int, ks_bins: int | None = None) -> "Accumulator":
        ks_hist = None if ks_bins is None else np.zeros(ks_bins + 2, dtype=np.int64)
        return cls(0, 0, np.zeros(p), np.zeros((p, p)), np.zeros(bins, dtype=np.int64), ks_hist)

    def merge(self, other: "Accumulator") -> "Accumulator":
        count = self.count + other.count
        if count == 0:
            return self
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / count)
        m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.count * other.count / count)
        ks_hist = None
        if self.ks_hist is not None and other.ks_hist is not None:
            ks_hist = self.ks_hist + other.ks_hist
        return Accumulator(count, self.alarms + other.alarms, mean, m2, self.hist + other.hist, ks_hist)


def histogram_edges(det: ChiSquaredDetector, bins: int | None = None, span: float | None = None) -> np.ndarray:
    """Fixed edges mean +- span*sd on the first residual component"""
    bins = settings.histogram_bins if bins is None else bins
    span = settings.histogram_span if span is None else span
    center, sd = det.mean[0], float(np.sqrt(det.cov[0, 0]))
    return np.linspace(center - span * sd, center + span * sd, bins + 1)


def _chunk_accumulator(
    residuals: np.ndarray,
    det: ChiSquaredDetector,
    edges: np.ndarray,
    ks_edges: np.ndarray | None,
) -> Accumulator:
    z = distance_measure(det, residuals)
    first = residuals[:, 0]
    idx = np.clip(np.searchsorted(edges, first, side="right") - 1, 0, len(edges) - 2)
    mean = residuals.mean(axis=0)
    centered = residuals - mean
    ks_hist = None
    if ks_edges is not None:
        ks_hist = np.bincount(np.searchsorted(ks_edges, first, side="right"), minlength=len(ks_edges) + 1)
    return Accumulator(
        count=residuals.shape[0],
        alarms=int(np.count_nonzero(z > det.threshold)),
        mean=mean,
        m2=centered.T @ centered,
        hist=np.bincount(idx, minlength=len(edges) - 1).astype(np.int64),
        ks_hist=None if ks_hist is None else ks_hist.astype(np.int64),
    )


class ResidualFilter:
    """
    Error dynamics driven by w = [v, eta], stepped chunk by chunk with the
    state carried over

    The state is kept in the complex Schur basis of F-LC, where every
    coordinate is a first-order recursion driven by the coordinates after it.
    """

    def __init__(self, system: LtiSystem):
        T, Z = la.schur(system.closed_loop, output="complex")
        self.n, self.p = system.n, system.p
        self.poles = np.diag(T).copy()
        self.coupling = np.triu(T, k=1)
        self.to_schur = Z.conj().T
        self.output = system.C @ Z
        self.L = system.L
        self.state = np.zeros(self.n, dtype=complex)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        v, eta = w[:, : self.n], w[:, self.n :]
        steps = w.shape[0]
        drive = (v - eta @ self.L.T) @ self.to_schur.T
        z = np.empty((steps, self.n), dtype=complex)
        final = np.empty(self.n, dtype=complex)
        for i in range(self.n - 1, -1, -1):
            u = drive[:, i] + z[:, i + 1 :] @ self.coupling[i, i + 1 :]
            pole = self.poles[i]
            # y[k] is the coordinate at step k+1
            y, _ = lfilter([1.0], [1.0, -pole], u, zi=[pole * self.state[i]])
            z[0, i] = self.state[i]
            z[1:, i] = y[:-1]
            final[i] = y[-1]
        self.state = final
        return (z @ self.output.T).real + eta


def noise_block(noise_eta: Gmm, noise_v: Gmm, seed: int, block: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """(v, eta) for the steps of one block, drawn from the stream (seed, block)"""
    rng = np.random.default_rng([seed, block])
    return noise_v.draw(size, rng), noise_eta.draw(size, rng)


def residual_stream(
    system: LtiSystem,
    noise_eta: Gmm,
    noise_v: Gmm,
    seed: int,
    start: int,
    stop: int,
    block_size: int | None = None,
) -> Iterator[np.ndarray]:
    """Yield residual chunks for steps start..stop-1, with zero error at step start"""
    block_size = settings.mc_block_size if block_size is None else block_size
    filt = ResidualFilter(system)
    step = start
    while step < stop:
        block, offset = divmod(step, block_size)
        size = min(block_size - offset, stop - step)
        v, eta = noise_block(noise_eta, noise_v, seed, block, block_size)
        yield filt(np.hstack([v[offset : offset + size], eta[offset : offset + size]]))
        step += size


def _run_batch(
    system: LtiSystem,
    noise_eta: Gmm,
    noise_v: Gmm,
    det: ChiSquaredDetector,
    first: int,
    count: int,
    burn_in: int,
    seed: int,
    with_ks: bool,
) -> Accumulator:
    """Samples first..first+count-1 after the burn-in, warmed up from step first"""
    edges = histogram_edges(det)
    ks_edges = histogram_edges(det, bins=settings.ks_bins) if with_ks else None
    acc = Accumulator.empty(system.p, len(edges) - 1, settings.ks_bins if with_ks else None)
    skipped = 0
    for chunk in residual_stream(system, noise_eta, noise_v, seed, first, first + burn_in + count):
        if skipped < burn_in:
            drop = min(burn_in - skipped, chunk.shape[0])
            skipped += drop
            chunk = chunk[drop:]
        if chunk.shape[0]:
            acc = acc.merge(_chunk_accumulator(chunk, det, edges, ks_edges))
    logger.debug("Monte-Carlo batch done", first=first, samples=acc.count, alarms=acc.alarms)
    return acc


def batch_sizes(total: int, batches: int) -> List[int]:
    base, extra = divmod(total, batches)
    return [base + (1 if b < extra else 0) for b in range(batches)]


def ks_from_histogram(counts: np.ndarray, edges: np.ndarray, model: Gmm) -> float:
    """
    Largest gap between the empirical and mixture CDFs over the grid edges

    counts has one open bin below the first edge and one above the last; the
    result is within the largest per-bin model mass of the exact statistic.
    """
    if model.dim != 1:
        raise DomainError(f"ks needs a 1-D mixture, got dimension {model.dim}")
    total = counts.sum()
    if total == 0:
        raise DomainError("ks needs at least one sample")
    empirical = np.cumsum(counts[:-1]) / total
    return float(np.max(np.abs(empirical - gmm_ops.cdf_1d(model, edges))))


def summarize(acc: Accumulator, det: ChiSquaredDetector, reference: Gmm | None = None) -> EmpiricalSummary:
    ks = None
    if reference is not None and acc.ks_hist is not None:
        ks = ks_from_histogram(acc.ks_hist, histogram_edges(det, bins=settings.ks_bins), reference)
    count = max(acc.count, 1)
    return EmpiricalSummary(
        sample_count=acc.count,
        alarm_count=acc.alarms,
        alarm_rate=acc.alarms / count,
        alpha=det.threshold,
        empirical_mean=acc.mean.tolist(),
        empirical_cov=(acc.m2 / count).tolist(),
        ks_distance=ks,
        bin_edges=histogram_edges(det).tolist(),
        histogram=acc.hist.tolist(),
    )


def empirical_false_alarm(
    system: LtiSystem,
    noise_eta: Gmm,
    noise_v: Gmm | None,
    det: ChiSquaredDetector,
    N: int,
    burn_in: int,
    seed: int,
    batches: int = 1,
    reference: Gmm | None = None,
) -> EmpiricalSummary:
    """
    Alarm fraction of z_k > threshold over N post-burn-in steps

    The N samples are split into contiguous batches of one trajectory; batch
    b starting at sample s filters from step s so it discards the same
    burn_in steps. noise_v=None means no system noise. With a 1-D reference
    mixture the KS distance of the first residual component is reported.
    """
    if N < 1 or batches < 1 or burn_in < 0:
        raise DomainError(f"need N >= 1, batches >= 1, burn_in >= 0 (got {N}, {batches}, {burn_in})")
    if det.p != system.p:
        raise StructuralError("detector", f"dimension {det.p} does not match p={system.p}")
    require_stable(system)
    noise_v = Gmm.point_mass(system.n) if noise_v is None else noise_v
    if noise_eta.dim != system.p:
        raise StructuralError("noise_eta", f"dimension {noise_eta.dim} does not match p={system.p}")
    if noise_v.dim != system.n:
        raise StructuralError("noise_v", f"dimension {noise_v.dim} does not match n={system.n}")
    if reference is not None and reference.dim != 1:
        raise DomainError(f"KS reference must be a 1-D mixture, got dimension {reference.dim}")
    with_ks = reference is not None

    sizes = batch_sizes(N, batches)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    jobs = [(int(first), size) for first, size in zip(starts, sizes) if size > 0]

    def run(job: Tuple[int, int]) -> Accumulator:
        return _run_batch(system, noise_eta, noise_v, det, job[0], job[1], burn_in, seed, with_ks)

    if settings.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    total = Accumulator.empty(system.p, settings.histogram_bins, settings.ks_bins if with_ks else None)
    for acc in results:
        total = total.merge(acc)

    summary = summarize(total, det, reference)
    logger.info(
        "Monte-Carlo false-alarm estimate",
        samples=summary.sample_count,
        alarm_rate=summary.alarm_rate,
        standard_error=summary.standard_error,
    )
    return summary


def merge_summaries(a: EmpiricalSummary, b: EmpiricalSummary) -> EmpiricalSummary:
    """Combine two summaries taken at the same threshold and histogram edges"""
    if a.alpha != b.alpha or a.bin_edges != b.bin_edges:
        raise DomainError("summaries were taken with different thresholds or histogram edges")
    merged = _from_summary(a).merge(_from_summary(b))
    count = max(merged.count, 1)
    return EmpiricalSummary(
        sample_count=merged.count,
        alarm_count=merged.alarms,
        alarm_rate=merged.alarms / count,
        alpha=a.alpha,
        empirical_mean=merged.mean.tolist(),
        empirical_cov=(merged.m2 / count).tolist(),
        bin_edges=a.bin_edges,
        histogram=merged.hist.tolist(),
    )


def _from_summary(s: EmpiricalSummary) -> Accumulator:
    return Accumulator(
        count=s.sample_count,
        alarms=s.alarm_count,
        mean=np.asarray(s.empirical_mean, dtype=float),
        m2=np.asarray(s.empirical_cov, dtype=float) * s.sample_count,
        hist=np.asarray(s.histogram, dtype=np.int64),
    )


def ks_1d(samples: Sequence[float] | np.ndarray, model: Gmm) -> float:
    """Sup distance between the empirical CDF of samples and the mixture CDF"""
    if model.dim != 1:
        raise DomainError(f"ks_1d needs a 1-D mixture, got dimension {model.dim}")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("ks_1d needs at least one sample")
    return float(kstest(x, lambda t: gmm_ops.cdf_1d(model, t)).statistic)


def histogram_rows(summary: EmpiricalSummary) -> List[Tuple[float, float, int]]:
    edges = summary.bin_edges
    return [(edges[i], edges[i + 1], c) for i, c in enumerate(summary.histogram)]
