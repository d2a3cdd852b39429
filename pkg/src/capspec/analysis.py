"""Baselines, statistical performance formulas, and Monte Carlo harnesses.

Provides the Nyquist-rate averaged periodogram, the NMSE figure of
merit, the fourth-moment covariance of the sample coset covariance for
jointly Gaussian signals together with its propagation to per-bin
periodogram variance, the white-noise closed forms, and drivers for
Monte Carlo reconstruction and threshold-detection experiments.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import NAP, Periodogram, estimate_multicluster
from .patterns import CosetPattern
from .sensing import ScenarioConfig, dbm_to_linear, synthesize_observations
from .structure import SystemMatrixRc, build_system_matrix


def nyquist_ap(records: np.ndarray) -> Periodogram:
    """Averaged periodogram of full-rate records (sensors x grid points)."""
    x = np.atleast_2d(records)
    tau, n_grid = x.shape
    spectra = np.fft.fft(x, axis=1)
    values = np.mean(np.abs(spectra) ** 2, axis=0) / n_grid
    return Periodogram(
        thetas=np.arange(n_grid) / n_grid,
        values=values,
        estimator=NAP,
        count=tau,
    )


def average_periodograms(parts: list[Periodogram]) -> Periodogram:
    """Equal-weight average, e.g. of per-cluster baselines."""
    if not parts:
        raise ValueError("nothing to average")
    values = np.mean([p.values for p in parts], axis=0)
    return Periodogram(
        thetas=parts[0].thetas,
        values=values,
        estimator=parts[0].estimator,
        count=sum(p.count for p in parts),
        clusters=len(parts),
        source=parts[0].source,
        max_imag_ratio=max(p.max_imag_ratio for p in parts),
    )


def nmse(estimate, reference) -> float:
    """Sum-of-squares error ratio over the full frequency grid."""
    est = estimate.values if isinstance(estimate, Periodogram) else np.asarray(estimate)
    ref = reference.values if isinstance(reference, Periodogram) else np.asarray(reference)
    if est.shape != ref.shape:
        raise ValueError(f"grids disagree: {est.shape} vs {ref.shape}")
    denom = float(np.sum(ref**2))
    if denom == 0.0:
        raise ValueError("reference periodogram is identically zero")
    return float(np.sum((est - ref) ** 2) / denom)


class GaussianMoments:
    """Second moments of the per-bin spectra, supplied analytically.

    ``cross(t, tp)[i, b]``  = E[X_{t,i} X*_{tp,b}]
    ``pseudo(t, tp)[i, b]`` = E[X_{t,i} X_{tp,b}]
    for bin indices i, b in 0..N-1 and sensor indices t, tp in 0..tau-1.
    """

    def cross(self, t: int, tp: int) -> np.ndarray:
        raise NotImplementedError

    def pseudo(self, t: int, tp: int) -> np.ndarray:
        raise NotImplementedError


class WhiteNoiseMoments(GaussianMoments):
    """Circular white Gaussian noise of variance sigma2 on ``n_grid`` samples."""

    def __init__(self, n_bins: int, n_grid: int, sigma2: float):
        self.n_bins = n_bins
        self._cross = n_grid * sigma2 * np.eye(n_bins)
        self._zero = np.zeros((n_bins, n_bins))

    def cross(self, t, tp):
        return self._cross if t == tp else self._zero

    def pseudo(self, t, tp):
        return self._zero


class SingleBinMoments(GaussianMoments):
    """One occupied bin, independent across sensors, circular symbols."""

    def __init__(self, n_bins: int, bin_index: int, variance: float):
        self.n_bins = n_bins
        self._cross = np.zeros((n_bins, n_bins))
        self._cross[bin_index, bin_index] = variance
        self._zero = np.zeros((n_bins, n_bins))

    def cross(self, t, tp):
        return self._cross if t == tp else self._zero

    def pseudo(self, t, tp):
        return self._zero


def analytical_gaussian_covariance(
    moments: GaussianMoments, pattern: CosetPattern, tau: int
) -> np.ndarray:
    """Covariance of the entries of the averaged coset covariance.

    Evaluates the Gaussian fourth-moment expansion over all bin pairs and
    sensor pairs: entry (M*mp + m, M*ap + a) of the returned M^2 x M^2
    matrix is Cov[cov_entry(m, mp), cov_entry(a, ap)].
    """
    n = pattern.period
    m_cnt = pattern.size
    marks = np.asarray(pattern.marks)
    bins = np.arange(n)
    w = np.exp(2j * np.pi * np.outer(marks, bins) / n)      # (M, N)
    term1 = np.zeros((m_cnt,) * 4, dtype=complex)           # [m, a, mp, ap]
    term2 = np.zeros((m_cnt,) * 4, dtype=complex)           # [m, ap, mp, a]
    for t in range(tau):
        for tp in range(tau):
            f1 = w @ moments.cross(t, tp) @ w.conj().T
            term1 += np.einsum("ma,bc->mabc", f1, f1.conj())
            p1 = moments.pseudo(t, tp)
            if np.any(p1):
                g1 = w @ p1 @ w.T
                term2 += np.einsum("ma,bc->mabc", g1, g1.conj())
    norm = n**4 * tau**2
    sigma = term1.transpose(2, 0, 3, 1) + term2.transpose(2, 0, 1, 3)
    return sigma.reshape(m_cnt * m_cnt, m_cnt * m_cnt) / norm


def propagate_variance(
    sigma_ry: np.ndarray, sysmat: SystemMatrixRc, samples_per_coset: int
) -> np.ndarray:
    """Per-bin periodogram variance implied by a covariance of the
    vectorized coset covariance estimate.

    Chains the LS solve (normal matrix diag(gamma)), the circulant
    expansion, and the de-modulation, whose diagonal reduces to a
    quadratic form in the lag-domain covariance.
    """
    n = sysmat.pattern.period
    m2 = sysmat.row_map.size
    if sigma_ry.shape != (m2, m2):
        raise ValueError(f"expected {(m2, m2)} covariance, got {sigma_ry.shape}")
    rc = np.zeros((m2, n))
    rc[np.arange(m2), sysmat.row_map] = 1.0
    sigma_lag = (rc.T @ sigma_ry @ rc) / np.outer(sysmat.gamma, sysmat.gamma)
    bins = np.arange(n)
    phase = np.exp(2j * np.pi * np.outer(bins, bins) / n)   # phase[i, k]
    n_grid = n * samples_per_coset
    quad = np.einsum("ik,kl,il->i", phase.conj(), sigma_lag, phase)
    return np.real(quad) * (n / n_grid) ** 2


@dataclass(frozen=True)
class WhiteNoiseVariance:
    """Closed-form periodogram variance under pure white Gaussian noise."""

    variance: float
    nmse: float
    identifiable: bool


def whitenoise_variance_closed_form(
    pattern: CosetPattern | SystemMatrixRc, sigma2: float, tau: int
) -> WhiteNoiseVariance:
    """sigma^4/(M tau) + (sigma^4/tau) sum_k 1/gamma_k over nonzero lags.

    A pattern missing some modular difference has a zero gamma entry and
    an unbounded variance; that case is reported as +inf rather than an
    error.  The matching analytical NMSE against the flat sigma^2 truth
    is variance / sigma^4.
    """
    sysmat = pattern if isinstance(pattern, SystemMatrixRc) else build_system_matrix(pattern)
    if not sysmat.identifiable:
        return WhiteNoiseVariance(math.inf, math.inf, False)
    gamma = sysmat.gamma.astype(float)
    variance = sigma2**2 / tau * float(np.sum(1.0 / gamma))
    return WhiteNoiseVariance(variance, variance / sigma2**2, True)


def run_seed(base_seed: int, run_index: int) -> tuple[int, int]:
    """Entropy key for one Monte Carlo run."""
    return (int(base_seed), int(run_index))


def mc_caps(
    config: ScenarioConfig,
    runs: int,
    seed: int,
    threads: int = 1,
    keep_nap: bool = False,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Monte Carlo reconstructions: one averaged periodogram per run.

    Returns (caps, naps) arrays of shape (runs, grid); ``naps`` is None
    unless ``keep_nap``.  Runs are independently seeded by (seed, run),
    so results are identical for any thread count.
    """
    n_grid = config.grid_size
    caps = np.empty((runs, n_grid))
    naps = np.empty((runs, n_grid)) if keep_nap else None

    def one(run: int) -> None:
        sensed = synthesize_observations(
            config, seed=run_seed(seed, run), keep_full_rate=keep_nap
        )
        _, averaged = estimate_multicluster(sensed.sets)
        caps[run] = averaged.values
        if keep_nap:
            parts = [nyquist_ap(obs.full_rate) for obs in sensed.sets]
            naps[run] = average_periodograms(parts).values

    if threads <= 1:
        for run in range(runs):
            one(run)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(runs)))
    return caps, naps


@dataclass
class VarianceReport:
    """Analytical vs Monte Carlo per-bin variance for one configuration."""

    pattern: CosetPattern
    tau: int
    sigma2_dbm: float
    runs: int
    analytical_variance: float
    analytical_nmse: float
    empirical_by_theta: np.ndarray = field(repr=False)
    empirical_nmse: float = 0.0
    thetas: np.ndarray = field(repr=False, default=None)

    @property
    def empirical_variance(self) -> float:
        return float(np.mean(self.empirical_by_theta))

    @property
    def relative_gap(self) -> float:
        return abs(self.empirical_variance - self.analytical_variance) / self.analytical_variance

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("theta,analytical,empirical\n")
            analytical = float(self.analytical_variance)
            for theta, emp in zip(self.thetas, self.empirical_by_theta):
                f.write(f"{float(theta)!r},{analytical!r},{float(emp)!r}\n")


def whitenoise_variance_report(
    config: ScenarioConfig, runs: int, seed: int, threads: int = 1
) -> VarianceReport:
    """Monte Carlo check of the white-noise variance closed form."""
    if config.users:
        raise ValueError("variance check expects a noise-only scenario")
    sigma2 = dbm_to_linear(config.noise_dbm)
    tau = config.sensors_per_cluster
    closed = whitenoise_variance_closed_form(config.pattern, sigma2, tau)
    caps, _ = mc_caps(config, runs, seed, threads=threads)
    empirical = np.var(caps, axis=0, ddof=1)
    emp_nmse = float(np.mean((caps - sigma2) ** 2) / sigma2**2)
    return VarianceReport(
        pattern=config.pattern,
        tau=tau,
        sigma2_dbm=config.noise_dbm,
        runs=runs,
        analytical_variance=closed.variance,
        analytical_nmse=closed.nmse,
        empirical_by_theta=empirical,
        empirical_nmse=emp_nmse,
        thetas=np.arange(config.grid_size) / config.grid_size,
    )


@dataclass(frozen=True)
class DetectorSpec:
    """Block-averaging threshold detector over designated bands.

    The periodogram is averaged over ``avg_width`` consecutive grid
    points (non-overlapping blocks); detection events are counted on
    blocks inside the active bands, false alarms on blocks inside the
    quiet bands.  ``points_per_band`` trims each active band to a fixed
    number of centered grid points (a multiple of ``avg_width``).
    """

    active_bands: tuple[tuple[float, float], ...]
    quiet_bands: tuple[tuple[float, float], ...]
    avg_width: int = 11
    points_per_band: int | None = None
    quiet_points: int | None = None

    def __post_init__(self):
        for lo, hi in self.active_bands:
            for qlo, qhi in self.quiet_bands:
                if max(lo, qlo) < min(hi, qhi):
                    raise ValueError(
                        f"active band ({lo},{hi}) overlaps quiet band ({qlo},{qhi})"
                    )


def _band_blocks(
    band: tuple[float, float], n_grid: int, width: int, points: int | None
) -> np.ndarray:
    lo, hi = band
    first = math.ceil(lo * n_grid)
    last = math.floor(hi * n_grid)
    count = last - first + 1
    usable = (count // width) * width
    if points is not None:
        if points % width:
            raise ValueError(f"points_per_band {points} not a multiple of {width}")
        usable = min(usable, points)
    if usable < width:
        raise ValueError(f"band {band} holds no full {width}-point block")
    start = first + (count - usable) // 2
    return np.arange(start, start + usable).reshape(-1, width)


def detection_blocks(
    spec: DetectorSpec, n_grid: int
) -> tuple[np.ndarray, np.ndarray]:
    """Grid-index blocks (rows of avg_width points) for active/quiet bands."""
    active = np.vstack(
        [_band_blocks(b, n_grid, spec.avg_width, spec.points_per_band)
         for b in spec.active_bands]
    )
    quiet = np.vstack(
        [_band_blocks(b, n_grid, spec.avg_width, spec.quiet_points)
         for b in spec.quiet_bands]
    )
    return active, quiet


@dataclass
class RocCurve:
    """Detection vs false-alarm probability over a threshold sweep."""

    thresholds: np.ndarray
    pfa: np.ndarray
    pd: np.ndarray
    runs: int = 0
    avg_width: int = 11

    @property
    def auc(self) -> float:
        order = np.argsort(self.pfa, kind="stable")
        return float(np.trapezoid(self.pd[order], self.pfa[order]))


def roc_from_scores(active: np.ndarray, quiet: np.ndarray) -> RocCurve:
    """Exact ROC over the pooled block statistics."""
    thresholds = np.unique(np.concatenate([active.ravel(), quiet.ravel()]))
    pd = np.array([np.mean(active > t) for t in thresholds])
    pfa = np.array([np.mean(quiet > t) for t in thresholds])
    # endpoints: threshold below/above everything
    thresholds = np.concatenate(([-np.inf], thresholds))
    pd = np.concatenate(([1.0], pd))
    pfa = np.concatenate(([1.0], pfa))
    return RocCurve(thresholds=thresholds, pfa=pfa, pd=pd)


def roc_harness(
    config: ScenarioConfig,
    detector: DetectorSpec,
    runs: int,
    seed: int,
    threads: int = 1,
) -> RocCurve:
    """Monte Carlo detection experiment on the reconstructed periodogram."""
    active_blocks, quiet_blocks = detection_blocks(detector, config.grid_size)
    active_stats = np.empty((runs, active_blocks.shape[0]))
    quiet_stats = np.empty((runs, quiet_blocks.shape[0]))

    def one(run: int) -> None:
        sensed = synthesize_observations(config, seed=run_seed(seed, run))
        _, averaged = estimate_multicluster(sensed.sets)
        active_stats[run] = averaged.values[active_blocks].mean(axis=1)
        quiet_stats[run] = averaged.values[quiet_blocks].mean(axis=1)

    if threads <= 1:
        for run in range(runs):
            one(run)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(runs)))
    curve = roc_from_scores(active_stats, quiet_stats)
    curve.runs = runs
    curve.avg_width = detector.avg_width
    return curve
