"""Single-phase drivers used by ``bench`` and by the cost accounting.

These run the protocol functions back to back on one simulated clock, with
no channel in between, so each iteration is exactly one phase.
"""

from __future__ import annotations

import random
import time

from .. import address as addr_ops
from .. import protocol as proto
from ..counters import OpCounters, track
from ..crypto import ChebyParams, SimClock
from .config import AdversarySpec, ScenarioConfig
from .report import collect_counters
from .scenario import run_scenario

PHASES = ("first-login", "consequent", "address")


class Bench:
    def __init__(self, params: ChebyParams, seed: int = 0):
        self.params = params
        self.rng = random.Random(seed)
        self.clock = SimClock()
        self.counters = OpCounters()
        self.server = proto.MixZoneServerState.create(params, self.rng)
        self.rsu = self.server.provision_rsu("rsu-bench")
        self.pool = addr_ops.AddressPool(addr_ops.rsu_prefix(0, addr_ops.AddressSplit()))
        self._n = 0

    def register(self) -> tuple[proto.SmartCard, bytes]:
        self._n += 1
        ident, pw = f"bench-{self._n}", b"pw-%d" % self._n
        with track(self.counters, "registration", "user"):
            req, nonce = proto.user_begin_registration(ident, pw, b"iris", self.rng)
        with track(self.counters, "registration", "server"):
            resp = proto.server_complete_registration(self.server, req, self.rng)
        with track(self.counters, "registration", "user"):
            card = proto.user_finalize_registration(resp, ident, pw, nonce)
        return card, pw

    def first_login(self, card, pw) -> bytes:
        c, rng, clock, rsu, phase = self.counters, self.rng, self.clock, self.rsu, "first-login"
        with track(c, phase, "user"):
            m1, us = proto.user_first_login(card, pw, rsu.rsuid, clock, rng)
        with track(c, phase, "rsu"):
            m2, rs = proto.rsu_process_m1(rsu, m1, clock, rng)
        with track(c, phase, "server"):
            m3, _ = proto.server_process_m2(self.server, m2)
        with track(c, phase, "rsu"):
            m4 = proto.rsu_process_m3(rsu, rs, m3, clock, rng)
        with track(c, phase, "user"):
            m5, sk_user = proto.card_process_m4(card, pw, us, m4)
        with track(c, phase, "rsu"):
            sk_rsu = proto.rsu_process_m5(rsu, rs, m5)
        assert sk_user == sk_rsu
        return sk_user

    def consequent(self, card, pw) -> bytes:
        c, rng, clock, rsu, phase = self.counters, self.rng, self.clock, self.rsu, "consequent"
        with track(c, phase, "user"):
            c1, us = proto.user_consequent_login(card, pw, rsu.rsuid, clock, rng)
        with track(c, phase, "rsu"):
            c2, rs = proto.rsu_process_c1(rsu, c1, clock, rng)
        with track(c, phase, "user"):
            c3, sk_user = proto.card_process_c2(card, us, c2)
        with track(c, phase, "rsu"):
            sk_rsu = proto.rsu_process_c3(rsu, rs, c3)
        assert sk_user == sk_rsu
        return sk_user

    def address(self, sk: bytes, cid: bytes):
        c, phase = self.counters, "address"
        with track(c, phase, "user"):
            req = addr_ops.vehicle_request_address(sk, cid, self.clock, self.rng)
        with track(c, phase, "rsu"):
            resp, _ = addr_ops.rsu_handle_addr_request(self.rsu, self.pool, req, self.clock, self.rng)
        with track(c, phase, "user"):
            return addr_ops.vehicle_handle_addr_response(sk, resp, self.clock)


def bench_phase(phase: str, iters: int, prime: str = "default", seed: int = 0) -> dict:
    """Time ``iters`` runs of one phase and return timings plus counters."""
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}")
    params = ChebyParams.test() if prime == "test" else ChebyParams.default()
    b = Bench(params, seed)
    card, pw = b.register()
    b.first_login(card, pw)
    # address requests are idempotent per pseudo-identity, so each one needs its own vehicle
    keyed = []
    if phase == "address":
        for _ in range(iters):
            c2, pw2 = b.register()
            keyed.append((b.first_login(c2, pw2), c2.entries[b.rsu.rsuid].cid))
    b.counters = OpCounters()
    start = time.perf_counter()
    for k in range(iters):
        if phase == "first-login":
            b.first_login(card, pw)
        elif phase == "consequent":
            b.consequent(card, pw)
        else:
            b.address(*keyed[k])
    elapsed = time.perf_counter() - start
    return {
        "phase": phase,
        "iters": iters,
        "prime": prime,
        "seconds": elapsed,
        "ms_per_iter": 1000 * elapsed / iters if iters else 0.0,
        "cost": collect_counters(b.counters, {phase: iters}),
    }


def fuzz(trials: int, seed: int = 0, prime: str = "default", sessions_per_vehicle: int = 1):
    """Run ``trials`` single-bit-flip trials, one per vehicle."""
    config = ScenarioConfig(
        num_vehicles=trials,
        num_rsus=max(1, min(16, trials // 250)),
        prime=prime,
        seed=seed,
        sessions_per_vehicle=sessions_per_vehicle,
        leak_check=False,
        adversaries=[AdversarySpec("bitflip", {"trials": trials})],
    )
    return run_scenario(config)
