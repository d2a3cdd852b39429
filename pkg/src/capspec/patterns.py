"""Design and verification of multi-coset sampling patterns.

A sampling pattern selects M of the N cosets in each period of the
Nyquist grid.  The key design object is the circular sparse ruler: a
mark set whose pairwise differences mod N cover every residue, which
is exactly the condition for the compressed covariance system to be
identifiable.  For the correlated-bins estimator the requirement is
stronger: a family of patterns must jointly contain every unordered
pair of cosets.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CosetPattern:
    """A sampling period ``period`` and the active coset indices ``marks``.

    Marks are stored sorted ascending; they must be distinct integers in
    ``[0, period)``.
    """

    period: int
    marks: tuple[int, ...]

    def __post_init__(self):
        if self.period < 1:
            raise ValueError(f"period must be positive, got {self.period}")
        marks = tuple(sorted(int(m) for m in self.marks))
        if not marks:
            raise ValueError("pattern needs at least one mark")
        if len(set(marks)) != len(marks):
            raise ValueError(f"duplicate marks in {marks}")
        if marks[0] < 0 or marks[-1] >= self.period:
            raise ValueError(f"marks {marks} outside [0, {self.period})")
        object.__setattr__(self, "marks", marks)

    @property
    def size(self) -> int:
        return len(self.marks)

    def __str__(self) -> str:
        return f"{{{','.join(map(str, self.marks))}}} mod {self.period}"


@dataclass(frozen=True)
class ModularDifferenceSet:
    """All values ``(a - b) mod period`` over ordered mark pairs, with counts."""

    period: int
    differences: frozenset[int]
    multiplicity: dict[int, int] = field(compare=False)

    @property
    def missing(self) -> tuple[int, ...]:
        return tuple(d for d in range(self.period) if d not in self.differences)

    @property
    def is_complete(self) -> bool:
        return len(self.differences) == self.period


@dataclass(frozen=True)
class PatternFamily:
    """Z patterns with a common period and mark count (one per sensor group)."""

    period: int
    patterns: tuple[CosetPattern, ...]

    def __post_init__(self):
        patterns = tuple(self.patterns)
        if not patterns:
            raise ValueError("family needs at least one pattern")
        sizes = {p.size for p in patterns}
        if len(sizes) != 1:
            raise ValueError(f"patterns have mixed mark counts {sorted(sizes)}")
        if any(p.period != self.period for p in patterns):
            raise ValueError("patterns have mixed periods")
        object.__setattr__(self, "patterns", patterns)

    @property
    def size(self) -> int:
        return len(self.patterns)

    @property
    def marks_per_pattern(self) -> int:
        return self.patterns[0].size


@dataclass(frozen=True)
class RulerSearchResult:
    """Outcome of a minimal-ruler search.

    ``minimal`` is False when the node budget was exhausted before every
    smaller cardinality could be ruled out, in which case ``pattern`` is a
    verified (complete) but possibly suboptimal ruler.
    """

    pattern: CosetPattern
    minimal: bool
    nodes: int


def modular_difference_set(pattern: CosetPattern) -> ModularDifferenceSet:
    """Enumerate ``(a - b) mod N`` over all ordered pairs of marks."""
    n = pattern.period
    counts = Counter(
        (a - b) % n for a in pattern.marks for b in pattern.marks
    )
    return ModularDifferenceSet(
        period=n, differences=frozenset(counts), multiplicity=dict(counts)
    )


def is_circular_sparse_ruler(pattern: CosetPattern) -> bool:
    """True iff the modular differences of the marks cover 0..N-1."""
    return modular_difference_set(pattern).is_complete


def _pair_differences(mark: int, marks: tuple[int, ...], n: int) -> int:
    """Bitmask of differences contributed by adding ``mark`` to ``marks``."""
    bits = 0
    for m in marks:
        bits |= 1 << ((mark - m) % n)
        bits |= 1 << ((m - mark) % n)
    return bits


def _greedy_ruler(n: int) -> tuple[int, ...]:
    """Deterministic greedy complete ruler; used as an upper bound."""
    marks = [0]
    covered = 1  # difference 0
    full = (1 << n) - 1
    while covered != full:
        best_mark, best_gain = -1, -1
        for c in range(1, n):
            if c in marks:
                continue
            gain = bin(_pair_differences(c, tuple(marks), n) & ~covered).count("1")
            if gain > best_gain:
                best_mark, best_gain = c, gain
        marks.append(best_mark)
        covered |= _pair_differences(best_mark, tuple(marks[:-1]), n) | (1 << 0)
    return tuple(sorted(marks))


def _dfs_ruler(n: int, size: int, budget: int) -> tuple[tuple[int, ...] | None, bool, int]:
    """Depth-first search for a complete ruler with ``size`` marks, 0 anchored.

    Candidates are explored in ascending order so the first solution is the
    lexicographically smallest one.  Returns (marks or None, truncated,
    nodes used).  ``truncated`` means the budget ran out before the level
    was exhausted, so absence of a solution is not proven.
    """
    full = (1 << n) - 1
    nodes = 0
    truncated = False

    def rec(marks: list[int], covered: int) -> tuple[int, ...] | None:
        nonlocal nodes, truncated
        if covered == full:
            return tuple(marks)
        remaining = size - len(marks)
        if remaining == 0:
            return None
        k = len(marks)
        # Each future mark pairs with <= k + j prior marks, two directions each.
        bound = 2 * k * remaining + remaining * (remaining - 1)
        if bin(covered).count("1") + bound < n:
            return None
        for c in range(marks[-1] + 1, n - remaining + 1):
            nodes += 1
            if nodes > budget:
                truncated = True
                return None
            sol = rec(marks + [c], covered | _pair_differences(c, tuple(marks), n))
            if sol is not None:
                return sol
            if truncated:
                return None
        return None

    if size == 1:
        return ((0,), False, 0) if n == 1 else (None, False, 0)
    sol = rec([0], 1)
    return sol, truncated, nodes


def minimal_circular_sparse_ruler(
    n: int, node_budget: int = 5_000_000
) -> RulerSearchResult:
    """Search for a minimum-cardinality circular sparse ruler of period ``n``.

    Branch-and-bound over mark sets anchored at 0, trying cardinalities
    upward from the counting bound M(M-1)+1 >= N.  Ties are broken toward
    the lexicographically smallest mark set, which makes the output
    deterministic.  The node budget keeps the search bounded for large
    periods; if it is exhausted the best complete ruler found is returned
    with ``minimal=False``.
    """
    if n < 1:
        raise ValueError(f"period must be positive, got {n}")
    if n == 1:
        return RulerSearchResult(CosetPattern(1, (0,)), True, 0)

    fallback = _greedy_ruler(n)
    lower = 2
    while lower * (lower - 1) + 1 < n:
        lower += 1

    total_nodes = 0
    any_truncated = False
    for size in range(lower, len(fallback) + 1):
        marks, truncated, nodes = _dfs_ruler(n, size, node_budget)
        total_nodes += nodes
        any_truncated = any_truncated or truncated
        if marks is not None:
            return RulerSearchResult(
                CosetPattern(n, marks), minimal=not any_truncated, nodes=total_nodes
            )
    # Every level up to the greedy size was truncated without a solution.
    return RulerSearchResult(
        CosetPattern(n, fallback), minimal=False, nodes=total_nodes
    )


def exhaustive_minimal_ruler(n: int) -> CosetPattern:
    """Plain enumeration oracle: smallest cardinality, lexicographically first.

    Enumerates 0-anchored mark sets in lexicographic order for each
    cardinality (any complete set can be rotated to contain 0, so this
    loses no solutions).  Intended for modest periods; cost grows as
    C(n-1, M-1).
    """
    if n < 1:
        raise ValueError(f"period must be positive, got {n}")
    for size in range(1, n + 1):
        for rest in itertools.combinations(range(1, n), size - 1):
            pattern = CosetPattern(n, (0,) + rest)
            if is_circular_sparse_ruler(pattern):
                return pattern
    raise AssertionError("unreachable: the full mark set is always complete")


def _pairs_of(marks: tuple[int, ...]) -> set[tuple[int, int]]:
    return {(a, b) for a, b in itertools.combinations(sorted(marks), 2)}


def design_pair_cover_family(n: int, m: int) -> PatternFamily:
    """Build patterns of ``m`` cosets jointly covering all unordered pairs.

    Round by round, a candidate pattern is grown element-greedily from
    every possible starting coset; the candidate closing the most
    still-uncovered pairs wins the round (earliest start breaks ties, so
    the output is deterministic).  Rounds repeat until every pair of
    {0..n-1} appears in some pattern.  The group count Z is minimized
    greedily, not provably.
    """
    if m < 2:
        raise ValueError(f"need at least 2 marks per pattern to cover a pair, got {m}")
    if m > n:
        raise ValueError(f"marks per pattern {m} exceeds period {n}")

    uncovered: set[tuple[int, int]] = {
        (a, b) for a, b in itertools.combinations(range(n), 2)
    }
    patterns: list[CosetPattern] = []
    while uncovered:
        freq = Counter()
        for a, b in uncovered:
            freq[a] += 1
            freq[b] += 1
        best_pattern, best_gain = None, -1
        for start in range(n):
            if freq[start] == 0:
                continue
            candidate = _greedy_pattern(n, m, uncovered, freq, start)
            gain = len(_pairs_of(candidate) & uncovered)
            if gain > best_gain:
                best_pattern, best_gain = candidate, gain
        if best_pattern is None or best_gain == 0:
            raise AssertionError("greedy round covered nothing; pair set inconsistent")
        uncovered -= _pairs_of(best_pattern)
        patterns.append(CosetPattern(n, best_pattern))
    return PatternFamily(period=n, patterns=tuple(patterns))


def _greedy_pattern(
    n: int,
    m: int,
    uncovered: set[tuple[int, int]],
    freq: Counter,
    start: int,
) -> tuple[int, ...]:
    """Grow a pattern from ``start``, adding the coset that closes the most
    uncovered pairs (residual pair frequency, then lowest index, on ties)."""
    chosen = [start]
    while len(chosen) < m:
        best, best_key = -1, (-1, -1, 0)
        for c in range(n):
            if c in chosen:
                continue
            gain = sum(1 for x in chosen if (min(c, x), max(c, x)) in uncovered)
            key = (gain, freq[c], -c)
            if key > best_key:
                best, best_key = c, key
        chosen.append(best)
    return tuple(sorted(chosen))


def verify_pair_coverage(family: PatternFamily) -> bool:
    """True iff every unordered coset pair and every singleton is covered."""
    n = family.period
    seen_pairs: set[tuple[int, int]] = set()
    seen_single: set[int] = set()
    for pattern in family.patterns:
        seen_single.update(pattern.marks)
        seen_pairs.update(_pairs_of(pattern.marks))
    all_pairs = set(itertools.combinations(range(n), 2))
    return seen_single == set(range(n)) and seen_pairs == all_pairs


def uncovered_pairs(family: PatternFamily) -> list[tuple[int, int]]:
    """Ordered coset pairs (including singletons) observed by no pattern."""
    n = family.period
    counts = [[0] * n for _ in range(n)]
    for pattern in family.patterns:
        for a in pattern.marks:
            for b in pattern.marks:
                counts[a][b] += 1
    return [(a, b) for a in range(n) for b in range(n) if counts[a][b] == 0]
