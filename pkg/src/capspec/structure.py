"""Structured matrices of the compressed covariance model.

The model chains three linear maps: an inverse-DFT-style modulation
matrix B couples the N frequency bins to the N coset spectra, a
repetition matrix T expands the N circulant lags to all N^2 covariance
entries, and selection matrices C pick the active cosets.  The
compressed system matrix Rc = (C kron C) T is never materialized in the
reconstruction hot path; its rows are rows of the identity indexed by
modular mark differences, so the whole least-squares solve reduces to
index bookkeeping.  Dense builders are provided for verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .patterns import CosetPattern, PatternFamily


@dataclass(frozen=True)
class ModulationMatrix:
    """N x N matrix with entries exp(j 2 pi n i / N) / N."""

    order: int
    matrix: np.ndarray = field(repr=False, compare=False)

    def unitarity_defect(self) -> float:
        b = self.matrix
        return float(
            np.max(np.abs(self.order * (b @ b.conj().T) - np.eye(self.order)))
        )


@dataclass(frozen=True)
class RepetitionMatrix:
    """N^2 x N binary matrix mapping circulant lags to vectorized entries.

    Row q carries a single one in column ((q - floor(q/N)) mod N): the
    vectorized entry at (row r, column c) equals lag (r - c) mod N.
    """

    order: int
    matrix: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class SystemMatrixRc:
    """Index form of the compressed system matrix.

    ``row_map[q]`` gives, for the q-th vectorized covariance entry
    (q = M*col + row), the modular difference (marks[row] - marks[col])
    mod N, i.e. which lag that entry observes.  ``gamma[k]`` counts the
    entries observing lag k; it is exactly the diagonal of Rc^T Rc.
    """

    pattern: CosetPattern
    row_map: np.ndarray = field(repr=False, compare=False)
    gamma: np.ndarray = field(repr=False, compare=False)

    @property
    def identifiable(self) -> bool:
        return bool(np.min(self.gamma) >= 1)

    @property
    def missing_differences(self) -> tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.gamma == 0))


@dataclass(frozen=True)
class PsiMatrix:
    """Index form of the stacked per-group selection system.

    ``vec_index[z, m, mp]`` is the vectorized position (N*col + row) of
    the coset-correlation entry observed by group z at covariance slot
    (m, mp).  ``pair_counts`` is the diagonal of Psi^T Psi: how many
    groups observe each ordered coset pair.
    """

    family: PatternFamily
    vec_index: np.ndarray = field(repr=False, compare=False)
    pair_counts: np.ndarray = field(repr=False, compare=False)

    @property
    def identifiable(self) -> bool:
        return bool(np.min(self.pair_counts) >= 1)

    @property
    def uncovered(self) -> tuple[tuple[int, int], ...]:
        n = self.family.period
        flat = np.flatnonzero(self.pair_counts == 0)
        return tuple((int(q % n), int(q // n)) for q in flat)


def build_modulation_matrix(n: int) -> ModulationMatrix:
    if n < 1:
        raise ValueError(f"order must be positive, got {n}")
    rows = np.arange(n)[:, None]
    cols = np.arange(n)[None, :]
    matrix = np.exp(2j * np.pi * rows * cols / n) / n
    matrix.setflags(write=False)
    return ModulationMatrix(order=n, matrix=matrix)


def build_repetition_matrix(n: int) -> RepetitionMatrix:
    q = np.arange(n * n)
    lag = (q - q // n) % n
    matrix = np.zeros((n * n, n))
    matrix[q, lag] = 1.0
    matrix.setflags(write=False)
    return RepetitionMatrix(order=n, matrix=matrix)


def build_selection_matrix(pattern: CosetPattern) -> np.ndarray:
    """Dense M x N row-selection matrix for the active cosets."""
    c = np.zeros((pattern.size, pattern.period))
    c[np.arange(pattern.size), list(pattern.marks)] = 1.0
    return c


def build_system_matrix(pattern: CosetPattern) -> SystemMatrixRc:
    """Row map and gamma diagonal of Rc = (C kron C) T for ``pattern``."""
    n = pattern.period
    marks = np.asarray(pattern.marks)
    # vec ordering is column-major (q = M*col + row), so
    # row_map[q] = (marks[q % M] - marks[q // M]) mod N.
    row_map = ((marks[None, :] - marks[:, None]) % n).reshape(-1)
    gamma = np.bincount(row_map, minlength=n)
    row_map.setflags(write=False)
    gamma.setflags(write=False)
    return SystemMatrixRc(pattern=pattern, row_map=row_map, gamma=gamma)


def dense_rc(pattern: CosetPattern) -> np.ndarray:
    """Materialize Rc = (C kron C) T; M^2 x N. Verification path only."""
    c = build_selection_matrix(pattern)
    t = build_repetition_matrix(pattern.period).matrix
    return np.kron(c, c) @ t


def check_identifiability(pattern: CosetPattern) -> bool:
    """True iff every modular difference is realized (min gamma >= 1)."""
    return build_system_matrix(pattern).identifiable


def build_psi(family: PatternFamily) -> PsiMatrix:
    """Vectorized-index map and ordered-pair counts for a pattern family."""
    n = family.period
    m = family.marks_per_pattern
    z = family.size
    vec_index = np.empty((z, m, m), dtype=np.int64)
    for zi, pattern in enumerate(family.patterns):
        marks = np.asarray(pattern.marks)
        # Slot (m, mp) observes the entry at row marks[m], column marks[mp].
        vec_index[zi] = n * marks[None, :] + marks[:, None]
    pair_counts = np.bincount(vec_index.reshape(-1), minlength=n * n)
    vec_index.setflags(write=False)
    pair_counts.setflags(write=False)
    return PsiMatrix(family=family, vec_index=vec_index, pair_counts=pair_counts)


def dense_psi(family: PatternFamily) -> np.ndarray:
    """Materialize Psi by stacking C_z kron C_z; M^2 Z x N^2. Tests only."""
    blocks = [
        np.kron(build_selection_matrix(p), build_selection_matrix(p))
        for p in family.patterns
    ]
    return np.vstack(blocks)
