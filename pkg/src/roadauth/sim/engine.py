"""Deterministic event loop, channel and protocol-running nodes.

Time is simulated: a heap of ``(time, seq, action)`` events ordered by
simulated seconds with a monotone sequence number as tie-breaker, so a seed
fully determines the transcript.  Nodes exchange :class:`Envelope` values on a
single channel that adversaries can tap (observe, modify, drop) and inject
into.  The ``sid`` carried by an envelope is unauthenticated transport
metadata, like a connection id.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field, replace

from .. import address as addr_ops
from .. import protocol as proto
from ..counters import OpCounters, track
from ..errors import ProtocolError, SessionStateError
from ..messages import (
    C1,
    C2,
    C3,
    M1,
    M2,
    M3,
    M4,
    M5,
    AddrConflict,
    AddrReq,
    AddrResp,
    Beacon,
    Notice,
    decode_message,
)

log = logging.getLogger(__name__)

EPOCH = 1_700_000_000

PHASE_OF_KIND = {"first": "first-login", "consequent": "consequent", "address": "address", "beacon": "beacon"}
MESSAGES_PER_KIND = {"first": 5, "consequent": 3, "address": 2}


class EventLoop:
    def __init__(self):
        self.time = 0.0
        self._queue: list = []
        self._seq = 0

    def at(self, when: float, action) -> None:
        heapq.heappush(self._queue, (max(when, self.time), self._seq, action))
        self._seq += 1

    def after(self, delay: float, action) -> None:
        self.at(self.time + delay, action)

    def run(self) -> None:
        while self._queue:
            self.time, _, action = heapq.heappop(self._queue)
            action()


class LoopClock:
    """Whole-second view of the loop's simulated time."""

    def __init__(self, loop: EventLoop, epoch: int = EPOCH):
        self.loop = loop
        self.epoch = epoch

    def now(self) -> int:
        return self.epoch + int(self.loop.time)


@dataclass(frozen=True)
class Envelope:
    src: str
    dst: str
    sid: int
    data: bytes


@dataclass
class SessionRecord:
    sid: int
    kind: str
    vehicle: str | None
    rsu: str
    honest: bool = True
    status: str = "pending"
    error: str | None = None
    error_at: str | None = None
    attacks: set = field(default_factory=set)
    user_sk: bytes | None = None
    rsu_sk: bytes | None = None
    secrets: list = field(default_factory=list)
    wire: list = field(default_factory=list)
    started: int = 0


@dataclass
class AttackRecord:
    id: int
    kind: str
    action: str
    succeeded: bool = False
    reason: str | None = None

    @property
    def outcome(self) -> str:
        return "succeeded" if self.succeeded else "blocked"


class Network:
    def __init__(self, sim: Simulation, rng, min_latency: float = 0.005, max_latency: float = 0.05):
        self.sim = sim
        self.rng = rng
        self.min_latency = min_latency
        self.max_latency = max_latency
        self.nodes: dict = {}
        self.taps: list = []

    def latency(self) -> float:
        return self.rng.uniform(self.min_latency, self.max_latency)

    def send(self, env: Envelope) -> None:
        self.sim.log_wire(env)
        for tap in self.taps:
            env = tap.on_send(env)
            if env is None:
                return
        self._deliver_later(env, self.latency())

    def inject(self, env: Envelope, delay: float = 0.0) -> None:
        """Adversary injection; bypasses the taps."""
        self._deliver_later(env, delay + self.latency())

    def _deliver_later(self, env: Envelope, delay: float) -> None:
        node = self.nodes.get(env.dst)
        if node is None:
            return
        self.sim.loop.after(delay, lambda: node.receive(env))


class Node:
    entity = "node"

    def __init__(self, name: str, sim: Simulation):
        self.name = name
        self.sim = sim

    def send(self, dst: str, sid: int, msg) -> None:
        self.sim.net.send(Envelope(self.name, dst, sid, msg.to_bytes(self.sim.params.element_width)))

    def receive(self, env: Envelope) -> None:
        record = self.sim.sessions.get(env.sid)
        phase = PHASE_OF_KIND.get(record.kind, "other") if record else "other"
        try:
            with track(self.sim.counters, phase, self.entity):
                msg = decode_message(env.data, self.sim.params.element_width)
                self.handle(env, msg)
        except ProtocolError as err:
            self.sim.reject(env.sid, err, self.name)

    def handle(self, env: Envelope, msg) -> None:
        raise SessionStateError(f"{self.name} does not accept {type(msg).__name__}")


class SinkNode(Node):
    """Adversary endpoint: swallows whatever is sent back to it."""

    entity = "adversary"

    def receive(self, env: Envelope) -> None:
        self.sim.sink_received(env)


class ServerNode(Node):
    entity = "server"

    def __init__(self, name, sim, state: proto.MixZoneServerState):
        super().__init__(name, sim)
        self.state = state

    def handle(self, env, msg):
        if not isinstance(msg, M2):
            return super().handle(env, msg)
        m3, recovered = proto.server_process_m2(self.state, msg)
        self.sim.identities_recovered(env.sid, recovered)
        self.send(env.src, env.sid, m3)


class RsuNode(Node):
    entity = "rsu"

    def __init__(self, name, sim, state: proto.RsuState, pool: addr_ops.AddressPool, server: str):
        super().__init__(name, sim)
        self.state = state
        self.pool = pool
        self.server = server
        self.sessions: dict[int, tuple[proto.RsuSessionState, str]] = {}
        self.holders: dict[bytes, str] = {}

    def _session(self, sid: int, phase: str) -> tuple[proto.RsuSessionState, str]:
        entry = self.sessions.get(sid)
        if entry is None or entry[0].phase != phase:
            raise SessionStateError(f"no session {sid} awaiting {phase}")
        return entry

    def handle(self, env, msg):
        sim, clock, rng = self.sim, self.sim.clock, self.sim.rng
        if isinstance(msg, M1):
            m2, session = proto.rsu_process_m1(self.state, msg, clock, rng)
            self.sessions[env.sid] = (session, env.src)
            sim.add_secret(env.sid, session.b)
            self.send(self.server, env.sid, m2)
        elif isinstance(msg, M3):
            session, peer = self._session(env.sid, "await-m3")
            self.send(peer, env.sid, proto.rsu_process_m3(self.state, session, msg, clock, rng))
        elif isinstance(msg, M5):
            session, _ = self._session(env.sid, "await-m5")
            sim.rsu_key(env.sid, proto.rsu_process_m5(self.state, session, msg))
            del self.sessions[env.sid]
        elif isinstance(msg, C1):
            c2, session = proto.rsu_process_c1(self.state, msg, clock, rng)
            self.sessions[env.sid] = (session, env.src)
            sim.add_secret(env.sid, session.b)
            self.send(env.src, env.sid, c2)
        elif isinstance(msg, C3):
            session, _ = self._session(env.sid, "await-c3")
            sim.rsu_key(env.sid, proto.rsu_process_c3(self.state, session, msg))
            del self.sessions[env.sid]
        elif isinstance(msg, AddrReq):
            before = self.pool.allocations
            resp, lease = addr_ops.rsu_handle_addr_request(self.state, self.pool, msg, clock, rng)
            self.holders[msg.cid] = env.src
            sim.allocated(env.sid, lease, self.pool.allocations > before)
            self.send(env.src, env.sid, resp)
        elif isinstance(msg, Beacon):
            address, payload = addr_ops.rsu_verify_beacon(self.state, self.pool, msg, clock)
            sim.beacon_endorsed(env.sid)
            for lease in self.pool.active(clock.now()):
                holder = self.holders.get(lease.cid)
                if lease.cid == msg.cid or holder is None:
                    continue
                sk = self.state.cid_table[lease.cid].sk
                self.send(holder, env.sid, addr_ops.rsu_make_notice(sk, address, payload, clock, rng))
        elif isinstance(msg, AddrConflict):
            addr_ops.handle_conflict(msg)
        else:
            super().handle(env, msg)


class VehicleNode(Node):
    entity = "user"

    def __init__(self, name, sim, card: proto.SmartCard, pw: bytes, rsu: RsuNode, consequent: int):
        super().__init__(name, sim)
        self.card = card
        self.pw = pw
        self.rsu = rsu
        self.remaining = consequent
        self.halted = False
        self.sessions: dict[int, proto.UserSessionState] = {}
        self.sk: bytes | None = None
        self.cid: bytes | None = None
        self.address = None
        self.lease_expiry: int | None = None
        self.pending_addr: int | None = None
        self.accepted_notices = 0

    # -- driving -------------------------------------------------------------
    def _next_step(self, action) -> None:
        self.sim.loop.after(self.sim.think_time(), action)

    def start_first(self) -> None:
        if self.halted:
            return
        sid = self.sim.new_session("first", self.name, self.rsu.name)
        with track(self.sim.counters, "first-login", self.entity):
            m1, session = proto.user_first_login(self.card, self.pw, self.rsu.state.rsuid, self.sim.clock, self.sim.rng)
        self.sessions[sid] = session
        self.sim.add_secret(sid, session.a)
        self.send(self.rsu.name, sid, m1)

    def start_address(self) -> None:
        if self.halted:
            return
        sid = self.sim.new_session("address", self.name, self.rsu.name)
        with track(self.sim.counters, "address", self.entity):
            req = addr_ops.vehicle_request_address(self.sk, self.cid, self.sim.clock, self.sim.rng)
        self.pending_addr = sid
        self.send(self.rsu.name, sid, req)

    def start_consequent(self) -> None:
        if self.halted or self.remaining <= 0:
            return
        self.remaining -= 1
        sid = self.sim.new_session("consequent", self.name, self.rsu.name)
        with track(self.sim.counters, "consequent", self.entity):
            c1, session = proto.user_consequent_login(
                self.card, self.pw, self.rsu.state.rsuid, self.sim.clock, self.sim.rng
            )
        self.sessions[sid] = session
        self.sim.add_secret(sid, session.a)
        self.send(self.rsu.name, sid, c1)

    def send_beacon(self, payload: bytes, claimed=None) -> int | None:
        """Broadcast a beacon through the RSU; ``claimed`` overrides our own address."""
        if self.sk is None or self.address is None:
            return None
        sid = self.sim.new_session("beacon", self.name, self.rsu.name, honest=claimed is None)
        with track(self.sim.counters, "beacon", self.entity):
            beacon = addr_ops.vehicle_make_beacon(
                self.sk, self.cid, claimed if claimed is not None else self.address, payload,
                self.sim.clock, self.sim.rng,
            )
        self.send(self.rsu.name, sid, beacon)
        return sid

    # -- receiving -----------------------------------------------------------
    def handle(self, env, msg):
        sim = self.sim
        if isinstance(msg, M4):
            session = self._session(env.sid, "await-m4")
            m5, sk = proto.card_process_m4(self.card, self.pw, session, msg)
            self.sk, self.cid = sk, msg.cid
            sim.user_key(env.sid, sk)
            self.send(env.src, env.sid, m5)
            self._next_step(self.start_address)
        elif isinstance(msg, C2):
            session = self._session(env.sid, "await-c2")
            c3, sk = proto.card_process_c2(self.card, session, msg)
            self.sk = sk
            sim.user_key(env.sid, sk)
            self.send(env.src, env.sid, c3)
            self._next_step(self.start_consequent)
        elif isinstance(msg, AddrResp):
            if self.sk is None:
                raise SessionStateError("no session key to read an address response")
            address, expiry = addr_ops.vehicle_handle_addr_response(self.sk, msg, sim.clock, sim.delta)
            if env.sid != self.pending_addr:
                raise SessionStateError("unsolicited address response")
            self.pending_addr = None
            self.address, self.lease_expiry = address, expiry
            sim.address_adopted(env.sid, address)
            self._next_step(self.start_consequent)
        elif isinstance(msg, Notice):
            if self.sk is None:
                raise SessionStateError("no session key to read a notice")
            addr_ops.vehicle_accept_notice(self.sk, msg, sim.clock, sim.delta)
            self.accepted_notices += 1
            sim.notice_accepted(env.sid, self.name)
        elif isinstance(msg, Beacon):
            addr_ops.vehicle_handle_beacon(msg)
        elif isinstance(msg, AddrConflict):
            addr_ops.handle_conflict(msg)
        else:
            super().handle(env, msg)

    def _session(self, sid: int, phase: str) -> proto.UserSessionState:
        session = self.sessions.get(sid)
        if session is None or session.phase != phase:
            raise SessionStateError(f"no session {sid} awaiting {phase}")
        return session


class Simulation:
    """Shared state of one run: loop, channel, nodes and bookkeeping."""

    def __init__(self, params, rng, delta: int, counters: OpCounters | None = None, keep_wire: bool = False,
                 think_time: tuple[float, float] = (0.5, 1.0)):
        self.params = params
        self.rng = rng
        self.delta = delta
        self.counters = counters if counters is not None else OpCounters()
        self.keep_wire = keep_wire
        self._think = think_time
        self.loop = EventLoop()
        self.clock = LoopClock(self.loop)
        self.net = Network(self, rng)
        self.sessions: dict[int, SessionRecord] = {}
        self.attacks: dict[int, AttackRecord] = {}
        self.vehicles: dict[str, VehicleNode] = {}
        self.rsus: dict[str, RsuNode] = {}
        self.identity_checks = 0
        self.identity_correct = 0
        self.notices_accepted = 0
        self.beacons_endorsed = 0
        self.sink_messages = 0
        self._sid = 0
        self._attack = 0

    def think_time(self) -> float:
        return self.rng.uniform(*self._think)

    def add_node(self, node: Node) -> Node:
        self.net.nodes[node.name] = node
        if isinstance(node, VehicleNode):
            self.vehicles[node.name] = node
        elif isinstance(node, RsuNode):
            self.rsus[node.name] = node
        return node

    # -- sessions and attacks ---------------------------------------------------
    def new_session(self, kind: str, vehicle: str | None, rsu: str, honest: bool = True,
                    attack: int | None = None) -> int:
        self._sid += 1
        rec = SessionRecord(self._sid, kind, vehicle, rsu, honest=honest and attack is None,
                            started=self.clock.now())
        if attack is not None:
            rec.attacks.add(attack)
        self.sessions[self._sid] = rec
        return self._sid

    def new_attack(self, kind: str, action: str) -> AttackRecord:
        self._attack += 1
        rec = AttackRecord(self._attack, kind, action)
        self.attacks[rec.id] = rec
        return rec

    def taint(self, sid: int, attack: AttackRecord) -> None:
        rec = self.sessions.get(sid)
        if rec is not None:
            rec.attacks.add(attack.id)

    def _attack_success(self, rec: SessionRecord, what: str) -> None:
        for a in rec.attacks:
            self.attacks[a].succeeded = True
            self.attacks[a].reason = what

    def log_wire(self, env: Envelope) -> None:
        if self.keep_wire:
            rec = self.sessions.get(env.sid)
            if rec is not None:
                rec.wire.append(env.data)

    def add_secret(self, sid: int, value: int) -> None:
        if self.keep_wire:
            self.sessions[sid].secrets.append(value)

    # -- outcome callbacks -------------------------------------------------------
    def reject(self, sid: int, err: ProtocolError, where: str) -> None:
        rec = self.sessions.get(sid)
        log.debug("session %s rejected at %s: %s", sid, where, err.kind)
        if rec is None:
            return
        if rec.status == "pending":
            rec.status = "rejected"
            rec.error = err.kind
            rec.error_at = where
        for a in rec.attacks:
            if self.attacks[a].reason is None:
                self.attacks[a].reason = err.kind
        if rec.vehicle in self.vehicles and rec.honest and rec.kind in MESSAGES_PER_KIND:
            self.vehicles[rec.vehicle].halted = True

    def _maybe_complete(self, rec: SessionRecord) -> None:
        if rec.status != "pending" or rec.user_sk is None or rec.rsu_sk is None:
            return
        if rec.user_sk != rec.rsu_sk:
            rec.status, rec.error, rec.error_at = "rejected", "KeyMismatch", "harness"
            return
        rec.status = "completed"
        self._attack_success(rec, "session completed")

    def user_key(self, sid: int, sk: bytes) -> None:
        rec = self.sessions[sid]
        rec.user_sk = sk
        self._maybe_complete(rec)

    def rsu_key(self, sid: int, sk: bytes) -> None:
        rec = self.sessions[sid]
        rec.rsu_sk = sk
        self._maybe_complete(rec)

    def identities_recovered(self, sid: int, recovered) -> None:
        rec = self.sessions.get(sid)
        if rec is None or rec.vehicle not in self.vehicles:
            return
        self.identity_checks += 1
        vehicle = self.vehicles[rec.vehicle]
        if recovered.id_i == vehicle.card.id_i and recovered.rsuid == vehicle.rsu.state.rsuid:
            self.identity_correct += 1

    def allocated(self, sid: int, lease, new: bool) -> None:
        rec = self.sessions.get(sid)
        if rec is not None and new and rec.attacks:
            self._attack_success(rec, "address allocated")

    def address_adopted(self, sid: int, address) -> None:
        rec = self.sessions[sid]
        if rec.status == "pending":
            rec.status = "completed"
            self._attack_success(rec, "address adopted")

    def beacon_endorsed(self, sid: int) -> None:
        rec = self.sessions.get(sid)
        self.beacons_endorsed += 1
        if rec is not None:
            if rec.status == "pending":
                rec.status = "completed"
            self._attack_success(rec, "beacon endorsed")

    def notice_accepted(self, sid: int, vehicle: str) -> None:
        self.notices_accepted += 1
        rec = self.sessions.get(sid)
        if rec is not None:
            self._attack_success(rec, "neighbour accepted forged content")

    def sink_received(self, env: Envelope) -> None:
        self.sink_messages += 1

    def finish(self) -> None:
        for rec in self.sessions.values():
            if rec.status == "pending":
                rec.status = "rejected"
                rec.error = "Incomplete"
                rec.error_at = "harness"
        for attack in self.attacks.values():
            if attack.reason is None:
                attack.reason = "Incomplete"


def replace_data(env: Envelope, data: bytes) -> Envelope:
    return replace(env, data=data)
