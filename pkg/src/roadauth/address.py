"""RSU-prefixed IPv6 address configuration.

An address is ``RSU ID`` (128 - i bits) followed by ``vehicle ID`` (i bits).
Each RSU owns one :class:`AddressPool` and hands out vehicle ids smallest
first, so no duplicate address detection is ever needed.  Leases expire
after ``lease_duration`` seconds; expired ids are reclaimed lazily on the next
allocation.

Address requests and responses, as well as beacons, travel encrypted under
the session key established by :mod:`roadauth.protocol`.
"""

from __future__ import annotations

import heapq
import ipaddress
from dataclasses import dataclass, field

from .crypto import (
    SYSTEM_RNG,
    TS_SIZE,
    bytes_to_int,
    decode_fields,
    encode_fields,
    int_to_bytes,
    is_fresh,
    sym_decrypt,
    sym_encrypt,
    ts_bytes,
)
from .errors import (
    AddressMismatch,
    AuthFailure,
    ConflictRejected,
    PoolExhausted,
    RevokedCid,
    StaleTimestamp,
    UnknownCid,
    WidthOverflow,
)
from .messages import ADDR_SIZE, AddrConflict, AddrReq, AddrResp, Beacon, Notice
from .protocol import DEFAULT_DELTA, RsuState

DEFAULT_LEASE = 300
DOC_PREFIX = 0x20010DB8

_AD_REQ = b"addr-req"
_AD_RESP = b"addr-resp"
_AD_BEACON = b"beacon"
_AD_NOTICE = b"notice"


@dataclass(frozen=True)
class AddressSplit:
    i: int = 64

    def __post_init__(self):
        if not 8 <= self.i <= 64:
            raise ValueError("vehicle-id width must be in [8, 64]")

    @property
    def rsu_bits(self) -> int:
        return 128 - self.i


def compose_address(rsu_id: int, vehicle_id: int, split: AddressSplit) -> ipaddress.IPv6Address:
    if not 0 <= rsu_id < 1 << split.rsu_bits:
        raise WidthOverflow(f"RSU id does not fit in {split.rsu_bits} bits")
    if not 0 <= vehicle_id < 1 << split.i:
        raise WidthOverflow(f"vehicle id does not fit in {split.i} bits")
    return ipaddress.IPv6Address((rsu_id << split.i) | vehicle_id)


def decompose_address(addr, split: AddressSplit) -> tuple[int, int]:
    value = int(ipaddress.IPv6Address(addr))
    return value >> split.i, value & ((1 << split.i) - 1)


def rsu_prefix(index: int, split: AddressSplit) -> int:
    """Documentation-range RSU id for the ``index``-th roadside unit."""
    return (DOC_PREFIX << (split.rsu_bits - 32)) | (index + 1)


@dataclass
class Lease:
    vehicle_id: int
    address: ipaddress.IPv6Address
    cid: bytes | None
    issued: int
    expiry: int


@dataclass
class AddressPool:
    rsu_id: int
    split: AddressSplit = field(default_factory=AddressSplit)
    lease_duration: int = DEFAULT_LEASE
    allocations: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.rsu_id < 1 << self.split.rsu_bits:
            raise WidthOverflow("RSU id does not fit its prefix width")
        self._by_id: dict[int, Lease] = {}
        self._by_cid: dict[bytes, Lease] = {}
        self._expiries: list[tuple[int, int]] = []
        self._free: list[int] = []
        self._next = 0

    def reclaim(self, now: int) -> int:
        """Release every lease with ``expiry <= now``; return how many."""
        released = 0
        while self._expiries and self._expiries[0][0] <= now:
            expiry, vid = heapq.heappop(self._expiries)
            lease = self._by_id.get(vid)
            if lease is None or lease.expiry != expiry:
                continue
            del self._by_id[vid]
            if lease.cid is not None and self._by_cid.get(lease.cid) is lease:
                del self._by_cid[lease.cid]
            heapq.heappush(self._free, vid)
            released += 1
        return released

    def allocate(self, clock, cid: bytes | None = None) -> Lease:
        """Lease the smallest free vehicle id.

        A ``cid`` that already holds an unexpired lease gets that lease back
        instead of a second address.
        """
        now = clock.now()
        self.reclaim(now)
        if cid is not None and cid in self._by_cid:
            return self._by_cid[cid]
        if self._free:
            vid = heapq.heappop(self._free)
        elif self._next < 1 << self.split.i:
            vid = self._next
            self._next += 1
        else:
            raise PoolExhausted(f"all {1 << self.split.i} vehicle ids are leased")
        lease = Lease(vid, compose_address(self.rsu_id, vid, self.split), cid, now, now + self.lease_duration)
        self._by_id[vid] = lease
        if cid is not None:
            self._by_cid[cid] = lease
        heapq.heappush(self._expiries, (lease.expiry, vid))
        self.allocations += 1
        self.history.append(lease)
        return lease

    def lease_for(self, cid: bytes, now: int) -> Lease | None:
        lease = self._by_cid.get(cid)
        if lease is None or lease.expiry <= now:
            return None
        return lease

    def active(self, now: int) -> list[Lease]:
        return sorted((l for l in self._by_id.values() if l.expiry > now), key=lambda l: l.vehicle_id)

    def occupancy(self, now: int) -> int:
        return len(self.active(now))

    def dump(self, now: int) -> list[dict]:
        return [
            {"address": str(l.address), "cid": l.cid.hex() if l.cid else None, "expiry": l.expiry}
            for l in self.active(now)
        ]


# -- encrypted request / response ---------------------------------------------

def _open(sk: bytes, box: bytes, ad: bytes, count: int) -> list[bytes]:
    fields = decode_fields(sym_decrypt(sk, box, ad))
    if len(fields) != count:
        raise AuthFailure("unexpected plaintext layout")
    return fields


def _session_key(rsu: RsuState, cid: bytes) -> bytes:
    entry = rsu.cid_table.get(cid)
    if entry is None:
        raise UnknownCid("pseudo-identity not issued by this RSU")
    if entry.status != "active":
        raise RevokedCid("pseudo-identity has been revoked")
    if entry.sk is None:
        raise AuthFailure("no session key established for this pseudo-identity")
    return entry.sk


def _ts(raw: bytes) -> int:
    if len(raw) != TS_SIZE:
        raise AuthFailure("malformed timestamp")
    return bytes_to_int(raw)


def vehicle_request_address(sk: bytes, cid: bytes, clock, rng=SYSTEM_RNG) -> AddrReq:
    return AddrReq(cid, sym_encrypt(sk, encode_fields([cid, ts_bytes(clock.now())]), rng, _AD_REQ))


def rsu_handle_addr_request(
    rsu: RsuState, pool: AddressPool, req: AddrReq, clock, rng=SYSTEM_RNG
) -> tuple[AddrResp, Lease]:
    """Authenticate an address request and answer with an encrypted lease.

    The session key is looked up from the pseudo-identity the request names;
    a request that does not decrypt under it is declined.
    """
    sk = _session_key(rsu, req.cid)
    inner_cid, ts = _open(sk, req.box, _AD_REQ, 2)
    if inner_cid != req.cid:
        raise AuthFailure("pseudo-identity mismatch inside request")
    if not is_fresh(_ts(ts), clock.now(), rsu.delta):
        raise StaleTimestamp("address request timestamp expired")
    lease = pool.allocate(clock, req.cid)
    body = encode_fields(
        [int_to_bytes(int(lease.address), ADDR_SIZE), ts_bytes(lease.expiry), ts_bytes(clock.now())]
    )
    return AddrResp(sym_encrypt(sk, body, rng, _AD_RESP)), lease


def vehicle_handle_addr_response(
    sk: bytes, resp: AddrResp, clock, delta: int = DEFAULT_DELTA
) -> tuple[ipaddress.IPv6Address, int]:
    addr, expiry, ts = _open(sk, resp.box, _AD_RESP, 3)
    if len(addr) != ADDR_SIZE:
        raise AuthFailure("malformed address")
    if not is_fresh(_ts(ts), clock.now(), delta):
        raise StaleTimestamp("address response timestamp expired")
    return ipaddress.IPv6Address(bytes_to_int(addr)), _ts(expiry)


# -- application beacons -------------------------------------------------------

def vehicle_make_beacon(sk: bytes, cid: bytes, address, payload: bytes, clock, rng=SYSTEM_RNG) -> Beacon:
    body = encode_fields([int_to_bytes(int(address), ADDR_SIZE), payload, ts_bytes(clock.now())])
    return Beacon(cid, sym_encrypt(sk, body, rng, _AD_BEACON))


def rsu_verify_beacon(rsu: RsuState, pool: AddressPool, beacon: Beacon, clock) -> tuple[ipaddress.IPv6Address, bytes]:
    """Accept a beacon only from the current lease holder of the claimed address."""
    sk = _session_key(rsu, beacon.cid)
    addr, payload, ts = _open(sk, beacon.box, _AD_BEACON, 3)
    if not is_fresh(_ts(ts), clock.now(), rsu.delta):
        raise StaleTimestamp("beacon timestamp expired")
    claimed = ipaddress.IPv6Address(bytes_to_int(addr))
    lease = pool.lease_for(beacon.cid, clock.now())
    if lease is None or lease.address != claimed:
        raise AddressMismatch(f"sender does not hold {claimed}")
    return claimed, payload


def rsu_make_notice(sk: bytes, address, payload: bytes, clock, rng=SYSTEM_RNG) -> Notice:
    """Relay an endorsed beacon to one neighbour under that neighbour's key."""
    body = encode_fields([int_to_bytes(int(address), ADDR_SIZE), payload, ts_bytes(clock.now())])
    return Notice(sym_encrypt(sk, body, rng, _AD_NOTICE))


def vehicle_accept_notice(sk: bytes, notice: Notice, clock, delta: int = DEFAULT_DELTA):
    addr, payload, ts = _open(sk, notice.box, _AD_NOTICE, 3)
    if not is_fresh(_ts(ts), clock.now(), delta):
        raise StaleTimestamp("notice timestamp expired")
    return ipaddress.IPv6Address(bytes_to_int(addr)), payload


def vehicle_handle_beacon(beacon: Beacon):
    # vehicles share no keys with each other; only RSU-relayed notices count
    raise AuthFailure("beacon not endorsed by an RSU")


def handle_conflict(msg: AddrConflict):
    # allocation is duplicate-free by construction, so a conflict claim is never legitimate
    raise ConflictRejected(f"address conflict claim for {ipaddress.IPv6Address(msg.addr)} discarded")
