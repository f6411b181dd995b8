"""Self-checks of the fast Chebyshev evaluator against the plain recurrence."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

import numpy as np

from .crypto import TEST_PRIME, ChebyParams, cheby_eval


def naive_cheby(n: int, y: int, p: int) -> int:
    """T_n(y) mod p by running the three-term recurrence n times."""
    if n == 0:
        return 1 % p
    prev, cur = 1 % p, y % p
    for _ in range(n - 1):
        prev, cur = cur, (2 * y * cur - prev) % p
    return cur


def naive_table(n_max: int, p: int) -> np.ndarray:
    """``table[k, y] = T_k(y) mod p`` for every k <= n_max and y in Z_p (small p only)."""
    if p >= 1 << 15:
        raise ValueError("table oracle is for small primes")
    ys = np.arange(p, dtype=np.int64)
    table = np.empty((n_max + 1, p), dtype=np.int16)
    prev = np.ones(p, dtype=np.int64) % p
    cur = ys.copy()
    table[0] = prev
    if n_max >= 1:
        table[1] = cur
    for k in range(2, n_max + 1):
        prev, cur = cur, (2 * ys * cur - prev) % p
        table[k] = cur
    return table


@dataclass
class SuiteResult:
    name: str
    checked: int
    mismatches: int
    seconds: float

    @property
    def ok(self) -> bool:
        return self.mismatches == 0 and self.checked > 0

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.checked} checks, {self.mismatches} mismatches, {self.seconds:.1f}s"


def semigroup_suite(p: int = TEST_PRIME, n_max: int = 300) -> SuiteResult:
    """Check T_n(T_m(y)) = T_nm(y) = T_m(T_n(y)) for all n, m <= n_max and all y.

    Both sides come from the fast evaluator; every value is also compared
    with the recurrence table.
    """
    start = time.perf_counter()
    params = ChebyParams(p, 2)
    oracle = naive_table(n_max * n_max, p)
    ys = range(p)
    small = np.array([[cheby_eval(n, y, params) for y in ys] for n in range(n_max + 1)], dtype=np.int16)
    mismatches = int(np.count_nonzero(small != oracle[: n_max + 1]))
    checked = small.size

    products = sorted({n * m for n in range(n_max + 1) for m in range(n_max + 1)})
    fast = np.zeros((n_max * n_max + 1, p), dtype=np.int16)
    for k in products:
        fast[k] = [cheby_eval(k, y, params) for y in ys]
    prod_idx = np.array(products)
    mismatches += int(np.count_nonzero(fast[prod_idx] != oracle[prod_idx]))
    checked += prod_idx.size * p

    n = np.arange(n_max + 1)
    for m in range(n_max + 1):
        inner_m = small[m]                      # T_m(y)
        lhs = small[:, inner_m]                 # T_n(T_m(y)), shape (n, y)
        rhs = small[m][small]                   # T_m(T_n(y))
        mid = fast[n * m]                       # T_nm(y)
        ref = oracle[n * m]
        bad = (lhs != mid) | (rhs != mid) | (mid != ref)
        mismatches += int(np.count_nonzero(bad))
        checked += bad.size
    return SuiteResult(f"semigroup p={p} n,m<={n_max}", checked, mismatches, time.perf_counter() - start)


def oracle_suite(params: ChebyParams, pairs: int = 1000, n_max: int = 10**5, seed: int = 0,
                 y_pool: int = 100) -> SuiteResult:
    """Compare the fast evaluator with the recurrence on random (n, y) pairs.

    Pairs share ``y_pool`` distinct arguments so one recurrence pass per
    argument serves every degree drawn for it.
    """
    start = time.perf_counter()
    rng = random.Random(seed)
    p = params.p
    pool = [rng.randrange(p) for _ in range(min(y_pool, pairs))]
    wanted: dict[int, list[int]] = {}
    for k in range(pairs):
        wanted.setdefault(pool[k % len(pool)], []).append(rng.randint(0, n_max))
    mismatches = 0
    for y, degrees in wanted.items():
        targets = set(degrees)
        top = max(degrees)
        expected = {0: 1 % p} if 0 in targets else {}
        prev, cur = 1 % p, y
        if 1 in targets:
            expected[1] = cur
        for k in range(2, top + 1):
            prev, cur = cur, (2 * y * cur - prev) % p
            if k in targets:
                expected[k] = cur
        mismatches += sum(cheby_eval(n, y, params) != expected[n] for n in degrees)
    bits = p.bit_length()
    return SuiteResult(f"oracle {bits}-bit p, {pairs} pairs, n<={n_max}", pairs, mismatches,
                       time.perf_counter() - start)


def run_selftest(n_max: int = 300, pairs: int = 1000) -> list[SuiteResult]:
    params = ChebyParams.test()
    return [semigroup_suite(params.p, n_max), oracle_suite(params, pairs)]
