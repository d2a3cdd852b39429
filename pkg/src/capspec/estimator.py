"""Least-squares reconstruction of the averaged periodogram.

The pipeline per in-bin frequency point: average per-sensor outer
products of the coset DTFT vectors into a sample covariance, map its
entries onto circulant lags via the gamma diagonal (the closed form of
the LS normal equations, since Rc^T Rc is diagonal), and read the
periodogram off the diagonal of the de-modulated bin covariance, which
a length-N transform of the lag vector delivers in O(N log N) per point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .patterns import CosetPattern, PatternFamily
from .sensing import CosetObservationSet
from .structure import PsiMatrix, SystemMatrixRc, build_psi, build_system_matrix

CAP_UB = "CAP-UB"
CAP_CB = "CAP-CB"
NAP = "NAP"


class IdentifiabilityError(ValueError):
    """The sampling design does not determine the quantity being solved for."""

    def __init__(self, message: str, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


@dataclass
class CovarianceStack:
    """Sample covariance of the coset DTFT vector at each grid point.

    ``matrices[l]`` is the M x M Hermitian average over ``count`` sensors
    at theta = l / (period * L).
    """

    thetas: np.ndarray
    matrices: np.ndarray
    count: int
    pattern: CosetPattern

    def hermitian_defect(self) -> float:
        m = self.matrices
        return float(np.max(np.abs(m - m.conj().transpose(0, 2, 1))))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.matrices)))


@dataclass
class CosetCorrelationVector:
    """Reconstructed circulant lags, one length-N vector per grid point."""

    thetas: np.ndarray
    values: np.ndarray          # (L, N) complex
    pattern: CosetPattern


@dataclass
class Periodogram:
    """Power estimate on the full grid of period * L frequency points."""

    thetas: np.ndarray
    values: np.ndarray
    estimator: str
    count: int = 0
    clusters: int = 1
    source: str = ""
    max_imag_ratio: float = 0.0

    @property
    def negative_count(self) -> int:
        return int(np.sum(self.values < 0.0))

    def write_csv(self, path, run_id: int = 0) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("theta,value,estimator,run_id\n")
            for theta, value in zip(self.thetas, self.values):
                f.write(f"{float(theta)!r},{float(value)!r},{self.estimator},{run_id}\n")


def _grid(period: int, samples_per_coset: int) -> np.ndarray:
    return np.arange(period * samples_per_coset) / (period * samples_per_coset)


def sample_covariance(observations: CosetObservationSet) -> CovarianceStack:
    """Average the per-sensor outer products of the coset DTFT vectors."""
    y = observations.dtft
    tau = y.shape[0]
    if tau == 0:
        raise ValueError("no sensors to average over")
    matrices = np.einsum("tml,tnl->lmn", y, y.conj()) / tau
    n_grid = observations.pattern.period * y.shape[2]
    thetas = np.arange(y.shape[2]) / n_grid
    return CovarianceStack(
        thetas=thetas, matrices=matrices, count=tau, pattern=observations.pattern
    )


def ls_reconstruct_rbar(
    stack: CovarianceStack, sysmat: SystemMatrixRc | None = None
) -> CosetCorrelationVector:
    """Solve the per-point LS problem for the circulant lag vector.

    Because the normal matrix is diag(gamma), the solution for lag k is
    the mean of the covariance entries whose mark difference is k.
    Raises IdentifiabilityError when some lag is observed by no pair.
    """
    if sysmat is None:
        sysmat = build_system_matrix(stack.pattern)
    if sysmat.pattern != stack.pattern:
        raise ValueError("system matrix belongs to a different pattern")
    if not sysmat.identifiable:
        missing = sysmat.missing_differences
        raise IdentifiabilityError(
            f"pattern {stack.pattern} is not a circular sparse ruler: "
            f"modular differences {list(missing)} are unrealized",
            missing=missing,
        )
    n = stack.pattern.period
    m = stack.pattern.size
    l_pts = stack.matrices.shape[0]
    # vec ordering q = M*col + row, matching the row map.
    vec = stack.matrices.transpose(0, 2, 1).reshape(l_pts, m * m)
    values = np.zeros((l_pts, n), dtype=complex)
    np.add.at(values, (slice(None), sysmat.row_map), vec)
    values /= sysmat.gamma
    return CosetCorrelationVector(
        thetas=stack.thetas, values=values, pattern=stack.pattern
    )


def assemble_cap(
    rbar: CosetCorrelationVector, samples_per_coset: int | None = None
) -> Periodogram:
    """Expand lag vectors to the periodogram on the full frequency grid.

    The de-modulated bin covariance is circulant, so its diagonal is N
    times the forward length-N transform of the lag vector; dividing by
    the grid size leaves fft(rbar)/L per bin.  Values are kept as-is
    (small negatives included); the worst imaginary residue is recorded.
    """
    l_pts, n = rbar.values.shape
    if samples_per_coset is None:
        samples_per_coset = l_pts
    if samples_per_coset != l_pts:
        raise ValueError("lag vectors do not cover the expected grid")
    diag = np.fft.fft(rbar.values, axis=1) / samples_per_coset
    scale = np.max(np.abs(diag))
    max_imag = float(np.max(np.abs(diag.imag)) / scale) if scale > 0 else 0.0
    # bin i of point l sits at global grid index i*L + l
    values = diag.real.T.reshape(-1).copy()
    return Periodogram(
        thetas=_grid(n, samples_per_coset),
        values=values,
        estimator=CAP_UB,
        source=str(rbar.pattern),
        max_imag_ratio=max_imag,
    )


def reconstruct_cap(
    observations: CosetObservationSet, sysmat: SystemMatrixRc | None = None
) -> Periodogram:
    """Full single-cluster pipeline: covariance, LS lags, periodogram."""
    stack = sample_covariance(observations)
    rbar = ls_reconstruct_rbar(stack, sysmat)
    cap = assemble_cap(rbar)
    cap.count = stack.count
    return cap


def estimate_multicluster(
    observation_sets: list[CosetObservationSet],
) -> tuple[list[Periodogram], Periodogram]:
    """Run the pipeline per cluster and average the periodograms."""
    if not observation_sets:
        raise ValueError("no clusters to estimate from")
    for obs in observation_sets:
        if obs.count == 0:
            raise ValueError(f"cluster {obs.label} is empty")
        if obs.pattern != observation_sets[0].pattern:
            raise ValueError("clusters use different patterns")
    sysmat = build_system_matrix(observation_sets[0].pattern)
    caps = [reconstruct_cap(obs, sysmat) for obs in observation_sets]
    mean_values = np.mean([c.values for c in caps], axis=0)
    averaged = Periodogram(
        thetas=caps[0].thetas,
        values=mean_values,
        estimator=CAP_UB,
        count=sum(c.count for c in caps),
        clusters=len(caps),
        source=caps[0].source,
        max_imag_ratio=max(c.max_imag_ratio for c in caps),
    )
    return caps, averaged


def estimate_correlated_bins(
    group_observations: list[CosetObservationSet],
    psi: PsiMatrix | None = None,
) -> Periodogram:
    """LS reconstruction without the circulant assumption.

    Per grid point, the per-group sample covariances provide one equation
    per ordered coset pair; with Psi^T Psi diagonal the LS solution for
    each bin-covariance entry is the mean of its observations across the
    groups that saw that pair.  The periodogram is then the diagonal of
    the de-modulated matrix, evaluated through modular-diagonal sums and
    a length-N transform.
    """
    if not group_observations:
        raise ValueError("no groups to estimate from")
    family = PatternFamily(
        period=group_observations[0].pattern.period,
        patterns=tuple(obs.pattern for obs in group_observations),
    )
    if psi is None:
        psi = build_psi(family)
    elif psi.family.patterns != family.patterns:
        raise ValueError("psi matrix belongs to a different family")
    if not psi.identifiable:
        missing = psi.uncovered
        raise IdentifiabilityError(
            f"family does not cover coset pairs {list(missing)}; "
            "the bin covariance is not identifiable",
            missing=missing,
        )

    n = family.period
    m = family.marks_per_pattern
    l_pts = group_observations[0].dtft.shape[2]
    acc = np.zeros((l_pts, n * n), dtype=complex)
    for z, obs in enumerate(group_observations):
        if obs.count == 0:
            raise ValueError(f"group {z} is empty")
        if obs.dtft.shape[2] != l_pts:
            raise ValueError("groups disagree on grid size")
        cov = np.einsum("tml,tnl->lmn", obs.dtft, obs.dtft.conj()) / obs.count
        np.add.at(acc, (slice(None), psi.vec_index[z].reshape(-1)), cov.reshape(l_pts, -1))
    acc /= psi.pair_counts

    # vec index q = N*col + row: reshape then swap to (row, col)
    rbarx = acc.reshape(l_pts, n, n).transpose(0, 2, 1)
    lag = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    sums = np.zeros((l_pts, n), dtype=complex)
    np.add.at(sums, (slice(None), lag.reshape(-1)), rbarx.reshape(l_pts, -1))
    diag = np.fft.fft(sums, axis=1) / (n * l_pts)
    scale = np.max(np.abs(diag))
    max_imag = float(np.max(np.abs(diag.imag)) / scale) if scale > 0 else 0.0
    return Periodogram(
        thetas=_grid(n, l_pts),
        values=diag.real.T.reshape(-1).copy(),
        estimator=CAP_CB,
        count=sum(obs.count for obs in group_observations),
        clusters=len(group_observations),
        source=f"family Z={family.size}, M={m}, N={n}",
        max_imag_ratio=max_imag,
    )
