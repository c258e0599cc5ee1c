"""Network matrices over the complete directed graph and their entrywise order."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence


class DimensionError(ValueError):
    pass


@lru_cache(maxsize=None)
def link_list(n: int) -> tuple[tuple[int, int], ...]:
    """The ``n*(n-1)`` directed links ``(src, dst)`` in column order."""
    return tuple((s, d) for s in range(n) for d in range(n) if s != d)


@dataclass(frozen=True)
class NetworkMatrix:
    """Counts of each message kind (rows) on each link (columns)."""

    rows: int
    cols: int
    flat: tuple[int, ...]

    def __post_init__(self):
        if len(self.flat) != self.rows * self.cols:
            raise DimensionError("flat length does not match rows*cols")
        if any(v < 0 for v in self.flat):
            raise ValueError("network matrix entries must be nonnegative")

    def __getitem__(self, ij: tuple[int, int]) -> int:
        i, j = ij
        return self.flat[i * self.cols + j]

    @property
    def counts(self) -> tuple[tuple[int, ...], ...]:
        c = self.cols
        return tuple(self.flat[i * c:(i + 1) * c] for i in range(self.rows))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "NetworkMatrix":
        return cls(rows, cols, (0,) * (rows * cols))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "NetworkMatrix":
        r = len(rows)
        c = len(rows[0]) if r else 0
        return cls(r, c, tuple(v for row in rows for v in row))

    def total(self) -> int:
        return sum(self.flat)

    def __le__(self, other: "NetworkMatrix") -> bool:
        return le(self, other)


def matrix_of(network: Sequence[Sequence[int]], alphabet: Sequence[int]) -> NetworkMatrix:
    """Matrix view of per-link pending messages (one entry of ``network`` per link)."""
    row_of = {sym: i for i, sym in enumerate(alphabet)}
    cols = len(network)
    flat = [0] * (len(alphabet) * cols)
    for j, link in enumerate(network):
        for sym in link:
            flat[row_of[sym] * cols + j] += 1
    return NetworkMatrix(len(alphabet), cols, tuple(flat))


def _same_shape(a: NetworkMatrix, b: NetworkMatrix) -> None:
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise DimensionError(
            f"shape mismatch: {a.rows}x{a.cols} vs {b.rows}x{b.cols}"
        )


def le(n1: NetworkMatrix, n2: NetworkMatrix) -> bool:
    _same_shape(n1, n2)
    return all(x <= y for x, y in zip(n1.flat, n2.flat))


def delta(before: NetworkMatrix, after: NetworkMatrix) -> tuple[int, ...]:
    """Entrywise ``after - before`` in flat (row-major) order."""
    _same_shape(before, after)
    return tuple(y - x for x, y in zip(before.flat, after.flat))


def _vec(m) -> tuple[int, ...]:
    return m.flat if isinstance(m, NetworkMatrix) else tuple(m)


def _vle(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    if len(a) != len(b):
        raise DimensionError("vectors of different length")
    return all(x <= y for x, y in zip(a, b))


def longest_chain(seq: Sequence) -> list[int]:
    """Indices of a maximum-length chain ``seq[t1] <= seq[t2] <= ...``.

    Accepts matrices or plain count vectors. Among maximum chains the
    lexicographically smallest index list is returned.
    """
    vecs = [_vec(m) for m in seq]
    n = len(vecs)
    if n == 0:
        return []
    # longest chain starting at t, filled right to left
    best = [1] * n
    for t in range(n - 2, -1, -1):
        vt = vecs[t]
        for u in range(t + 1, n):
            if best[u] + 1 > best[t] and _vle(vt, vecs[u]):
                best[t] = best[u] + 1
    k = max(best)
    chain = [best.index(k)]
    for need in range(k - 1, 0, -1):
        last = chain[-1]
        for u in range(last + 1, n):
            if best[u] == need and _vle(vecs[last], vecs[u]):
                chain.append(u)
                break
    return chain


def is_chain(seq: Sequence, idx: Sequence[int]) -> bool:
    vecs = [_vec(seq[i]) for i in idx]
    return list(idx) == sorted(set(idx)) and all(
        _vle(a, b) for a, b in zip(vecs, vecs[1:])
    )


def is_antichain(vectors: Sequence) -> bool:
    vecs = [_vec(v) for v in vectors]
    return all(
        not _vle(vecs[a], vecs[b]) and not _vle(vecs[b], vecs[a])
        for a in range(len(vecs))
        for b in range(a + 1, len(vecs))
    )


def grid_width(cells: int, bound: int) -> int:
    """Largest antichain in ``{0..bound}^cells`` under the entrywise order.

    Products of chains are Sperner, so this is the size of the largest rank
    level (vectors with a fixed coordinate sum).
    """
    levels: dict[int, int] = {}
    for v in product(range(bound + 1), repeat=cells):
        s = sum(v)
        levels[s] = levels.get(s, 0) + 1
    return max(levels.values())
