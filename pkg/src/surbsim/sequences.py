"""Finite-sequence combinatorics: suffixes, repetition, common dividers and
the canonical incremental 0/1 stream.

Sequences are plain tuples of small ints. Every public function also accepts
strings of digits (``"0011"``) for convenience.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd, isqrt
from typing import Iterable, Optional, Sequence, Union

SeqLike = Union[str, Sequence[int]]
Seq = tuple


class PreconditionError(ValueError):
    """Raised when an operation is called outside its documented domain."""


def seq(s: SeqLike | Iterable[int]) -> tuple[int, ...]:
    """Coerce ``s`` to a tuple of ints; ``"0110"`` becomes ``(0, 1, 1, 0)``."""
    if isinstance(s, str):
        return tuple(int(ch) for ch in s)
    return tuple(s)


@dataclass(frozen=True)
class DividerWitness:
    divider: tuple[int, ...]
    n: int
    r: int


def is_suffix(a: SeqLike, b: SeqLike) -> bool:
    a, b = seq(a), seq(b)
    if len(a) > len(b):
        return False
    return b[len(b) - len(a):] == a


def repeat(s: SeqLike, q: int) -> tuple[int, ...]:
    if q < 0:
        raise PreconditionError("repeat count must be nonnegative")
    return seq(s) * q


def _check_pair(a1: tuple, a2: tuple) -> None:
    if not a1 or not a2:
        raise PreconditionError("divider operations need two non-empty sequences")
    if len(a1) > len(a2):
        raise PreconditionError(
            f"expected |a1| <= |a2|, got {len(a1)} > {len(a2)}"
        )


def _divisors(k: int) -> list[int]:
    small = [d for d in range(1, isqrt(k) + 1) if k % d == 0]
    return sorted(set(small + [k // d for d in small]))


def common_divider(a1: SeqLike, a2: SeqLike) -> Optional[DividerWitness]:
    """Shortest ``S`` with ``a1 == S*n`` and ``a2 == S*r``, or ``None``."""
    a1, a2 = seq(a1), seq(a2)
    _check_pair(a1, a2)
    for d in _divisors(gcd(len(a1), len(a2))):
        cand = a1[:d]
        if cand * (len(a1) // d) == a1 and cand * (len(a2) // d) == a2:
            return DividerWitness(cand, len(a1) // d, len(a2) // d)
    return None


def swap_equal(a1: SeqLike, a2: SeqLike) -> bool:
    """Whether ``a1+a1+a2 == a1+a2+a1``."""
    a1, a2 = seq(a1), seq(a2)
    _check_pair(a1, a2)
    return a1 + a1 + a2 == a1 + a2 + a1


def primitive_root(s: SeqLike) -> tuple[int, ...]:
    """Shortest ``p`` such that ``s`` is ``p`` repeated a whole number of times."""
    s = seq(s)
    if not s:
        raise PreconditionError("empty sequence has no primitive root")
    for d in _divisors(len(s)):
        if s[:d] * (len(s) // d) == s:
            return s[:d]
    return s  # unreachable: d == len(s) always matches


def incremental_symbol(i: int) -> int:
    """Symbol at position ``i`` of 0 1 00 11 000 111 ...

    Block ``k`` (``0^k 1^k``) starts at ``k*(k-1)``.
    """
    if i < 0:
        raise PreconditionError("negative position")
    k = (1 + isqrt(1 + 4 * i)) // 2
    while k * (k - 1) > i:
        k -= 1
    while (k + 1) * k <= i:
        k += 1
    return 0 if i - k * (k - 1) < k else 1


def incremental_prefix(length: int) -> tuple[int, ...]:
    out: list[int] = []
    k = 1
    while len(out) < length:
        out.extend([0] * k)
        out.extend([1] * k)
        k += 1
    return tuple(out[:length])


def runs(s: SeqLike) -> list[tuple[int, int, int]]:
    """Maximal constant runs as ``(symbol, start, length)`` triples."""
    s = seq(s)
    out: list[tuple[int, int, int]] = []
    start = 0
    for i in range(1, len(s) + 1):
        if i == len(s) or s[i] != s[start]:
            out.append((s[start], start, i - start))
            start = i
    return out


def _periodic_match(m: tuple, j: int, root: tuple, horizon: int) -> int:
    """Length of the longest prefix of ``m[j:horizon]`` that repeats ``root``."""
    p = len(root)
    matched = 0
    # compare whole periods at a time, then finish symbol by symbol
    while j + matched + p <= horizon and m[j + matched:j + matched + p] == root:
        matched += p
    while j + matched < horizon and m[j + matched] == root[matched % p]:
        matched += 1
    return matched


def find_divider_free_cut(m: SeqLike, i: int, j: int, horizon: int) -> Optional[int]:
    """Smallest ``r`` in ``(j, horizon]`` such that ``m[j:r]`` is longer than
    ``m[i:j]`` and shares no common divider with it, and the same holds for
    every ``r'`` in ``[r, horizon]``.

    A common divider of ``m[i:j]`` and ``m[j:r']`` exists exactly when
    ``m[j:r']`` is a whole power of the primitive root of ``m[i:j]``, so the
    offending ``r'`` form a contiguous family that is found with one scan.
    """
    m = seq(m)
    if not (0 <= i < j <= horizon <= len(m)):
        raise PreconditionError(
            f"need 0 <= i < j <= horizon <= |m|, got i={i} j={j} "
            f"horizon={horizon} |m|={len(m)}"
        )
    root = primitive_root(m[i:j])
    p = len(root)
    matched = _periodic_match(m, j, root, horizon)
    start = j + (j - i) + 1
    if matched >= p:
        start = max(start, j + (matched // p) * p + 1)
    return start if start <= horizon else None
