"""Operation counters.

Primitives in :mod:`roadauth.crypto` call :func:`record` on every hash,
Chebyshev evaluation, symmetric-cipher call and random draw.  Nothing is
recorded unless a :func:`track` block is active, so the primitives stay pure
from the caller's point of view.
"""

from __future__ import annotations

import contextvars
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field

KINDS = ("hash_ops", "cheby_evals", "sym_ops", "rng_draws")

_active: contextvars.ContextVar[dict | None] = contextvars.ContextVar(
    "roadauth_counter_slot", default=None
)


def record(kind: str, n: int = 1) -> None:
    slot = _active.get()
    if slot is not None:
        slot[kind] += n


@dataclass
class OpCounters:
    """Counts keyed by ``(phase, entity)``."""

    table: dict = field(default_factory=lambda: defaultdict(lambda: dict.fromkeys(KINDS, 0)))

    def slot(self, phase: str, entity: str) -> dict:
        return self.table[(phase, entity)]

    def phases(self) -> list[str]:
        return sorted({p for p, _ in self.table})

    def entities(self, phase: str) -> list[str]:
        return sorted(e for p, e in self.table if p == phase)

    def phase_totals(self, phase: str) -> dict:
        total = dict.fromkeys(KINDS, 0)
        for (p, _), counts in self.table.items():
            if p == phase:
                for k in KINDS:
                    total[k] += counts[k]
        return total

    def as_dict(self) -> dict:
        out = {}
        for phase in self.phases():
            out[phase] = {
                "total": self.phase_totals(phase),
                "by_entity": {e: dict(self.table[(phase, e)]) for e in self.entities(phase)},
            }
        return out


@contextmanager
def track(counters: OpCounters | None, phase: str, entity: str):
    """Attribute every primitive call inside the block to ``(phase, entity)``."""
    if counters is None:
        yield
        return
    token = _active.set(counters.slot(phase, entity))
    try:
        yield
    finally:
        _active.reset(token)
