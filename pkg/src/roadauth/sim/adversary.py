"""Dolev-Yao adversaries on the simulated channel.

Adversaries see and rewrite envelopes in flight and inject their own, but
never touch card, RSU or server state.  Every action opens an
:class:`~roadauth.sim.engine.AttackRecord`; the simulation marks it
succeeded if any session completes, address is allocated or beacon is
endorsed because of it.
"""

from __future__ import annotations

import random

from ..crypto import DIGEST_SIZE, encode_fields, sym_encrypt, ts_bytes
from ..errors import ProtocolError
from ..messages import CID_SIZE, REGISTRY, AddrConflict, AddrReq, Beacon, decode_message
from .engine import MESSAGES_PER_KIND, Envelope, SinkNode, Simulation

_KIND_OF_MESSAGE = {"M1": "first", "C1": "consequent", "AddrReq": "address", "AddrResp": "address"}


def _message_name(data: bytes) -> str | None:
    cls = REGISTRY.get(data[1]) if len(data) > 1 else None
    return cls.__name__ if cls else None


class Adversary:
    kind = ""

    def __init__(self, sim: Simulation, rng: random.Random, params: dict, index: int):
        self.sim = sim
        self.rng = rng
        self.params = params
        self.name = f"adv-{self.kind}-{index}"
        sim.add_node(SinkNode(self.name, sim))

    def on_send(self, env: Envelope) -> Envelope | None:
        return env

    def start(self) -> None:
        pass

    def _honest(self, env: Envelope):
        rec = self.sim.sessions.get(env.sid)
        return rec if rec is not None and rec.honest else None

    def _victims(self):
        now = self.sim.clock.now()
        return [v for _, v in sorted(self.sim.vehicles.items())
                if v.address is not None and v.lease_expiry > now and not v.halted]

    def _retry_or(self, action, victims) -> bool:
        if victims:
            return False
        tries = getattr(self, "_tries", 0)
        if tries < 20:
            self._tries = tries + 1
            self.sim.loop.after(5.0, action)
        return True


class ReplayAdversary(Adversary):
    """Capture M1 / C1 / AddrReq / AddrResp and play them back.

    Stale copies go back to the original receiver after ``delay_secs``
    (default delta + 1).  With ``fresh`` set, C1 and AddrReq are also replayed
    one second later, inside the freshness window.  Captured AddrResp messages
    are delivered to a different vehicle.
    """

    kind = "replay"

    def __init__(self, sim, rng, params, index):
        super().__init__(sim, rng, params, index)
        self.targets = set(params.get("targets", ["M1", "C1", "AddrReq", "AddrResp"]))
        self.delay = float(params.get("delay_secs", sim.delta + 1))
        self.fresh = bool(params.get("fresh", True))
        self.fresh_delay = float(params.get("fresh_delay_secs", 1))
        self.max_per_target = int(params.get("max_per_target", 3))
        self.captured: dict[str, int] = {}

    def on_send(self, env):
        name = _message_name(env.data)
        rec = self._honest(env)
        if name not in self.targets or rec is None or self.captured.get(name, 0) >= self.max_per_target:
            return env
        self.captured[name] = self.captured.get(name, 0) + 1
        if name == "AddrResp":
            self._misdeliver(env)
            return env
        self._replay(env, name, self.delay, "stale")
        if self.fresh and name in ("C1", "AddrReq"):
            self._replay(env, name, self.fresh_delay, "fresh")
        return env

    def _replay(self, env, name, delay, label):
        attack = self.sim.new_attack(self.kind, f"{name} {label}")
        sid = self.sim.new_session(_KIND_OF_MESSAGE[name], None, env.dst, attack=attack.id)
        self.sim.net.inject(Envelope(self.name, env.dst, sid, env.data), delay)

    def _misdeliver(self, env):
        others = [n for n, v in sorted(self.sim.vehicles.items()) if n != env.dst and v.sk is not None]
        if not others:
            return
        target = self.rng.choice(others)
        attack = self.sim.new_attack(self.kind, "AddrResp to other vehicle")
        sid = self.sim.new_session("address", None, env.src, attack=attack.id)
        self.sim.net.inject(Envelope(self.name, target, sid, env.data))


class ForgeAddressAdversary(Adversary):
    """Claim a victim's address in beacons.

    Three variants per forgery: a beacon under the victim's pseudo-identity
    but a key the adversary made up; one under a fresh random
    pseudo-identity; and an insider (a legitimately authenticated vehicle)
    claiming the victim's address under its own key.  The insider also sends
    a beacon for its own address as a control, which must be accepted.
    """

    kind = "forge_address"

    def __init__(self, sim, rng, params, index):
        super().__init__(sim, rng, params, index)
        self.forgeries = int(params.get("forgeries", 3))
        self.at = float(params.get("at_secs", 20.0))
        self.neighbours = int(params.get("neighbours", 3))
        self.control_sids: list[int] = []

    def start(self):
        self.sim.loop.at(self.at, self.strike)

    def _forged_beacon(self, victim, cid: bytes, action: str):
        sim = self.sim
        attack = sim.new_attack(self.kind, action)
        key = self.rng.randbytes(DIGEST_SIZE)
        body = encode_fields([int(victim.address).to_bytes(16, "big"), b"forged", ts_bytes(sim.clock.now())])
        beacon = Beacon(cid, sym_encrypt(key, body, self.rng, b"beacon"))
        sid = sim.new_session("beacon", None, victim.rsu.name, attack=attack.id)
        data = beacon.to_bytes(sim.params.element_width)
        sim.net.inject(Envelope(self.name, victim.rsu.name, sid, data))
        for n in self._neighbours(victim):
            sim.net.inject(Envelope(self.name, n.name, sid, data))

    def _neighbours(self, victim):
        near = [v for v in self._victims() if v.rsu is victim.rsu and v is not victim]
        return near[: self.neighbours]

    def strike(self):
        victims = self._victims()
        if self._retry_or(self.strike, victims):
            return
        for _ in range(self.forgeries):
            victim = self.rng.choice(victims)
            self._forged_beacon(victim, victim.cid, "beacon with victim pseudo-identity")
            self._forged_beacon(victim, self.rng.randbytes(CID_SIZE), "beacon with fresh pseudo-identity")
            insiders = self._neighbours(victim)
            if insiders:
                insider = insiders[0]
                attack = self.sim.new_attack(self.kind, "insider claims victim address")
                sid = insider.send_beacon(b"forged", claimed=victim.address)
                if sid is not None:
                    self.sim.taint(sid, attack)
                control = insider.send_beacon(b"control")
                if control is not None:
                    self.control_sids.append(control)


class FakeConflictAdversary(Adversary):
    """Broadcast address-conflict claims against vehicles holding leases."""

    kind = "fake_conflict"

    def __init__(self, sim, rng, params, index):
        super().__init__(sim, rng, params, index)
        self.conflicts = int(params.get("conflicts", 3))
        self.at = float(params.get("at_secs", 20.0))
        self.watch: list[tuple[object, object, object]] = []

    def start(self):
        self.sim.loop.at(self.at, self.strike)

    def strike(self):
        sim = self.sim
        victims = self._victims()
        if self._retry_or(self.strike, victims):
            return
        for _ in range(self.conflicts):
            victim = self.rng.choice(victims)
            attack = sim.new_attack(self.kind, "conflict claim")
            msg = AddrConflict(int(victim.address), self.rng.randbytes(8))
            sid = sim.new_session("beacon", None, victim.rsu.name, attack=attack.id)
            data = msg.to_bytes(sim.params.element_width)
            for dst in [victim.rsu.name, victim.name] + [
                v.name for v in victims if v.rsu is victim.rsu and v is not victim
            ][:3]:
                sim.net.inject(Envelope(self.name, dst, sid, data))
            self.watch.append((attack, victim, victim.address))
        sim.loop.after(1.0, self.check)

    def check(self):
        now = self.sim.clock.now()
        for attack, victim, address in self.watch:
            lease = victim.rsu.pool.lease_for(victim.cid, now)
            if victim.address != address or lease is None or lease.address != address:
                attack.succeeded = True
                attack.reason = "victim lost its address"


class ExhaustionAdversary(Adversary):
    """Flood RSUs with address requests that are not under any session key.

    Half of the requests reuse pseudo-identities observed on the channel, the
    rest use random ones.
    """

    kind = "exhaustion"

    def __init__(self, sim, rng, params, index):
        super().__init__(sim, rng, params, index)
        self.requests = int(params.get("requests", 1000))
        self.at = float(params.get("at_secs", 20.0))
        self.spacing = float(params.get("spacing_secs", 0.001))
        self.observed: list[bytes] = []
        self.occupancy_before: int | None = None
        self.occupancy_after: int | None = None

    def on_send(self, env):
        if _message_name(env.data) == "AddrReq":
            try:
                msg = decode_message(env.data, self.sim.params.element_width)
            except ProtocolError:
                return env
            if msg.cid not in self.observed:
                self.observed.append(msg.cid)
        return env

    def start(self):
        self.sim.loop.at(self.at, self.strike)

    def _occupancy(self) -> int:
        now = self.sim.clock.now()
        return sum(r.pool.occupancy(now) for r in self.sim.rsus.values())

    def strike(self):
        sim = self.sim
        rsus = sorted(sim.rsus)
        self.occupancy_before = self._occupancy()
        for k in range(self.requests):
            if self.observed and k % 2:
                cid = self.rng.choice(self.observed)
            else:
                cid = self.rng.randbytes(CID_SIZE)
            key = self.rng.randbytes(DIGEST_SIZE)
            box = sym_encrypt(key, encode_fields([cid, ts_bytes(sim.clock.now())]), self.rng, b"addr-req")
            attack = sim.new_attack(self.kind, "unauthenticated address request")
            rsu = rsus[k % len(rsus)]
            sid = sim.new_session("address", None, rsu, attack=attack.id)
            sim.net.inject(Envelope(self.name, rsu, sid, AddrReq(cid, box).to_bytes(sim.params.element_width)),
                           k * self.spacing)
        sim.loop.after(self.requests * self.spacing + 1.0, self._after)

    def _after(self):
        self.occupancy_after = self._occupancy()


class BitflipAdversary(Adversary):
    """Flip one uniformly chosen bit of one uniformly chosen message.

    ``trials`` vehicles are sampled up front; for each, one message position
    across its whole plan (first login, address exchange, consequent logins)
    is drawn uniformly and that message is corrupted in flight.
    """

    kind = "bitflip"

    def __init__(self, sim, rng, params, index, plan_messages: int, vehicle_names: list[str]):
        super().__init__(sim, rng, params, index)
        trials = min(int(params.get("trials", 100)), len(vehicle_names))
        chosen = rng.sample(sorted(vehicle_names), trials)
        self.targets = {name: rng.randrange(plan_messages) for name in sorted(chosen)}
        self.seen: dict[str, int] = {}
        self.flipped_types: dict[str, int] = {}

    def on_send(self, env):
        rec = self._honest(env)
        if rec is None or rec.vehicle not in self.targets or rec.kind not in MESSAGES_PER_KIND:
            return env
        idx = self.seen.get(rec.vehicle, 0)
        self.seen[rec.vehicle] = idx + 1
        if idx != self.targets[rec.vehicle]:
            return env
        name = _message_name(env.data) or "?"
        bit = self.rng.randrange(len(env.data) * 8)
        data = bytearray(env.data)
        data[bit // 8] ^= 1 << (bit % 8)
        attack = self.sim.new_attack(self.kind, f"flip bit {bit} of {name}")
        self.sim.taint(env.sid, attack)
        self.flipped_types[name] = self.flipped_types.get(name, 0) + 1
        return Envelope(env.src, env.dst, env.sid, bytes(data))


ADVERSARIES = {
    cls.kind: cls
    for cls in (ReplayAdversary, ForgeAddressAdversary, FakeConflictAdversary, ExhaustionAdversary, BitflipAdversary)
}
