"""Three-party authenticated key establishment.

Parties: the vehicle's smart card (user), a roadside unit (RSU) and the
mix-zone server (MZS).  Phases:

* registration (user <-> MZS over a secure channel);
* first-time login and key agreement, ``M1 .. M5``:
  user -> RSU -> MZS -> RSU -> user -> RSU;
* consequent login and key agreement, ``C1 .. C3``: user <-> RSU only,
  using the value ``HB = h(CID || B_j || t)`` both sides learned in M4;
* local password change on the card.

Each step is a plain function taking the party's state and the incoming
message and returning the outgoing message; any failed check raises a
:class:`~roadauth.errors.ProtocolError` subclass and leaves the session
unusable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .crypto import (
    DIGEST_SIZE,
    SYSTEM_RNG,
    ChebyParams,
    ChebySecret,
    bytes_to_int,
    cheby_eval,
    cheby_keypair,
    encode_fields,
    hash_fields,
    int_to_bytes,
    is_fresh,
    mask,
    random_bytes,
    random_exponent,
    sym_encrypt,
    ts_bytes,
    unmask,
)
from .errors import (
    AuthFailure,
    DecodeError,
    DuplicateRegistration,
    EmptyIdentity,
    EmptyPassword,
    NoEntry,
    PasswordMismatch,
    RevokedCid,
    SessionStateError,
    StaleTimestamp,
    UnknownCid,
    ValueTooLong,
)
from .messages import CID_SIZE, C1, C2, C3, M1, M2, M3, M4, M5, RegReq, RegResp

DEFAULT_DELTA = 60
MAX_ID_LEN = DIGEST_SIZE - 1


def _b(value: bytes | str) -> bytes:
    return value.encode() if isinstance(value, str) else bytes(value)


def _pack_id(ident: bytes) -> bytes:
    # one length byte so the identity survives left zero-padding inside mask()
    if len(ident) > MAX_ID_LEN:
        raise ValueTooLong(f"identities are limited to {MAX_ID_LEN} bytes")
    return bytes([len(ident)]) + ident


def _unpack_id(padded: bytes, which: str) -> bytes:
    body = padded.lstrip(b"\x00")
    if not body or body[0] != len(body) - 1:
        raise AuthFailure("recovered identity is malformed", which=which)
    return body[1:]


def _elem(value: int, params: ChebyParams) -> bytes:
    return int_to_bytes(value, params.element_width)


def _check_elem(value: int, params: ChebyParams) -> int:
    if not 0 <= value < params.p:
        raise DecodeError("group element outside [0, p-1]")
    return value


def _require_fresh(ts: int, clock, delta: int) -> None:
    if not is_fresh(ts, clock.now(), delta):
        raise StaleTimestamp(f"timestamp {ts} outside +/-{delta}s of {clock.now()}")


# -- state -----------------------------------------------------------------

@dataclass(frozen=True)
class IrisTemplate:
    """Opaque biometric template (``ST``)."""

    st: bytes

    def __post_init__(self):
        if not self.st:
            raise ValueError("iris template must be non-empty")


@dataclass
class MixZoneServerState:
    params: ChebyParams
    r: bytes
    s: bytes
    cheby_secret: ChebySecret
    p_s: int
    registered: set = field(default_factory=set)

    @classmethod
    def create(cls, params: ChebyParams, rng=SYSTEM_RNG) -> MixZoneServerState:
        r = random_bytes(DIGEST_SIZE, rng)
        s = random_bytes(DIGEST_SIZE, rng)
        secret, public = cheby_keypair(params, rng)
        return cls(params, r, s, secret, public)

    def provision_rsu(self, rsuid: bytes | str, delta: int = DEFAULT_DELTA) -> RsuState:
        """Issue an RSU its long-term authenticator ``B_j = h(RSUID_j || r)``."""
        rsuid = _b(rsuid)
        _pack_id(rsuid)
        return RsuState(rsuid, hash_fields([rsuid, self.r]), self.params, self.p_s, delta=delta)


@dataclass
class CidEntry:
    t: int
    status: str = "active"
    sk: bytes | None = None


@dataclass
class RsuState:
    rsuid: bytes
    b_j: bytes
    params: ChebyParams
    p_s: int
    cid_table: dict = field(default_factory=dict)
    delta: int = DEFAULT_DELTA

    def revoke(self, cid: bytes) -> None:
        entry = self.cid_table.get(cid)
        if entry is not None:
            entry.status = "revoked"


@dataclass
class CardEntry:
    d: bytes
    cid: bytes
    t: int
    e: bytes


@dataclass
class SmartCard:
    id_i: bytes
    d1: bytes
    d2: bytes
    escrow: bytes
    params: ChebyParams
    p_s: int
    entries: dict = field(default_factory=dict)


@dataclass
class UserSessionState:
    phase: str
    rsuid: bytes
    a: int
    ts: int
    q_i1: int | None = None
    q_i2: int | None = None
    x_2: bytes | None = None
    a_i: bytes | None = None
    # consequent login
    q_i: int | None = None
    hb: bytes | None = None
    cid: bytes | None = None


@dataclass
class RsuSessionState:
    phase: str
    b: int
    q_i1: int | None = None
    q_j1: int | None = None
    dh: int | None = None
    cid: bytes | None = None
    t: int | None = None
    hb: bytes | None = None
    # consequent login
    q_i: int | None = None
    y_1: bytes | None = None


@dataclass(frozen=True)
class RecoveredIdentities:
    id_i: bytes
    rsuid: bytes


def _advance(session, expected: str, nxt: str) -> None:
    if session.phase != expected:
        raise SessionStateError(f"session is in phase {session.phase!r}, expected {expected!r}")
    session.phase = nxt


# -- registration -----------------------------------------------------------

def user_begin_registration(id_i, pw, st, rng=SYSTEM_RNG) -> tuple[RegReq, bytes]:
    """Return the registration request and the nonce ``N`` the user keeps."""
    id_i, pw = _b(id_i), _b(pw)
    if not id_i:
        raise EmptyIdentity("identity must be non-empty")
    if not pw:
        raise EmptyPassword("password must be non-empty")
    _pack_id(id_i)
    if not isinstance(st, IrisTemplate):
        st = IrisTemplate(_b(st))
    n = random_bytes(DIGEST_SIZE, rng)
    d0 = mask(n, hash_fields([pw, id_i]))
    return RegReq(id_i, d0, st.st), n


def server_complete_registration(server: MixZoneServerState, req: RegReq, rng=SYSTEM_RNG) -> RegResp:
    if not req.id_i:
        raise EmptyIdentity("identity must be non-empty")
    if req.id_i in server.registered:
        raise DuplicateRegistration(f"{req.id_i!r} is already registered")
    a_i = hash_fields([req.id_i, server.r])
    c = mask(a_i, req.d0)
    escrow = sym_encrypt(server.s, encode_fields([req.id_i, req.st]), rng, b"escrow")
    server.registered.add(req.id_i)
    return RegResp(c, escrow, server.params.p, server.params.x, server.p_s)


def user_finalize_registration(resp: RegResp, id_i, pw, n: bytes) -> SmartCard:
    id_i, pw = _b(id_i), _b(pw)
    params = ChebyParams(resp.p, resp.x)
    return SmartCard(
        id_i=id_i,
        d1=mask(resp.c, n),
        d2=hash_fields([id_i, pw]),
        escrow=resp.escrow,
        params=params,
        p_s=resp.p_s,
    )


def card_unlock(card: SmartCard, pw) -> bytes:
    """Return ``A_i = h(ID_i || r)`` if ``pw`` is the card's password."""
    pw = _b(pw)
    if hash_fields([card.id_i, pw]) != card.d2:
        raise PasswordMismatch("password does not match card")
    return unmask(card.d1, hash_fields([pw, card.id_i]))


# -- first-time login and key agreement ---------------------------------------

def user_first_login(card: SmartCard, pw, rsuid, clock, rng=SYSTEM_RNG) -> tuple[M1, UserSessionState]:
    rsuid = _b(rsuid)
    a_i = card_unlock(card, pw)
    params = card.params
    a = random_exponent(params, rng)
    q_i1 = cheby_eval(a, params.x, params)
    q_i2 = cheby_eval(a, card.p_s, params)
    ts = clock.now()
    x_1 = mask(_pack_id(card.id_i), hash_fields([_elem(q_i2, params)]))
    x_2 = hash_fields([a_i, rsuid, _elem(q_i1, params), _elem(q_i2, params), x_1, ts_bytes(ts)])
    session = UserSessionState("await-m4", rsuid, a, ts, q_i1=q_i1, q_i2=q_i2, x_2=x_2, a_i=a_i)
    return M1(q_i1, x_1, x_2, ts), session


def rsu_process_m1(rsu: RsuState, m1: M1, clock, rng=SYSTEM_RNG) -> tuple[M2, RsuSessionState]:
    _require_fresh(m1.ts, clock, rsu.delta)
    params = rsu.params
    _check_elem(m1.q_i1, params)
    b = random_exponent(params, rng)
    q_j1 = cheby_eval(b, params.x, params)
    q_j2 = cheby_eval(b, rsu.p_s, params)
    y_1 = mask(_pack_id(rsu.rsuid), hash_fields([_elem(q_j2, params)]))
    y_2 = hash_fields(
        [_elem(m1.q_i1, params), _elem(q_j2, params), _elem(q_j1, params), y_1, m1.x_2, rsu.b_j]
    )
    session = RsuSessionState("await-m3", b, q_i1=m1.q_i1, q_j1=q_j1)
    return M2(m1.q_i1, m1.x_1, m1.x_2, m1.ts, q_j1, y_1, y_2), session


def server_process_m2(server: MixZoneServerState, m2: M2) -> tuple[M3, RecoveredIdentities]:
    """Authenticate both the user and the RSU; return ``M3`` and who they are."""
    params = server.params
    k_s = server.cheby_secret.n
    _check_elem(m2.q_i1, params)
    _check_elem(m2.q_j1, params)
    q_i1, q_j1 = _elem(m2.q_i1, params), _elem(m2.q_j1, params)

    # X_2 binds RSUID_j, so both identities are recovered before either check
    q_i2 = cheby_eval(k_s, m2.q_i1, params)
    id_i = _unpack_id(unmask(m2.x_1, hash_fields([_elem(q_i2, params)])), "user")
    q_j2 = cheby_eval(k_s, m2.q_j1, params)
    rsuid = _unpack_id(unmask(m2.y_1, hash_fields([_elem(q_j2, params)])), "rsu")

    a_i = hash_fields([id_i, server.r])
    if hash_fields([a_i, rsuid, q_i1, _elem(q_i2, params), m2.x_1, ts_bytes(m2.ts)]) != m2.x_2:
        raise AuthFailure("X_2 does not verify", which="user")
    b_j = hash_fields([rsuid, server.r])
    if hash_fields([q_i1, _elem(q_j2, params), q_j1, m2.y_1, m2.x_2, b_j]) != m2.y_2:
        raise AuthFailure("Y_2 does not verify", which="rsu")

    z_i = hash_fields([q_j1, q_i1, rsuid, a_i, m2.x_2])
    z_j = hash_fields([b_j, q_i1, q_j1, z_i])
    return M3(z_i, z_j), RecoveredIdentities(id_i, rsuid)


def rsu_process_m3(rsu: RsuState, session: RsuSessionState, m3: M3, clock, rng=SYSTEM_RNG) -> M4:
    """Check the server's verdict, issue a pseudo-identity and answer the user."""
    _advance(session, "await-m3", "failed")
    params = rsu.params
    q_i1, q_j1 = _elem(session.q_i1, params), _elem(session.q_j1, params)
    if hash_fields([rsu.b_j, q_i1, q_j1, m3.z_i]) != m3.z_j:
        raise AuthFailure("Z_j does not verify", which="server")
    dh = cheby_eval(session.b, session.q_i1, params)
    cid = random_bytes(CID_SIZE, rng)
    while cid in rsu.cid_table:
        cid = random_bytes(CID_SIZE, rng)
    t = clock.now()
    hb = hash_fields([cid, rsu.b_j, ts_bytes(t)])
    r = mask(hb, hash_fields([_elem(dh, params)]))
    r_j = hash_fields([m3.z_i, _elem(dh, params), cid, ts_bytes(t), r])
    rsu.cid_table[cid] = CidEntry(t)
    session.dh, session.cid, session.t, session.hb = dh, cid, t, hb
    session.phase = "await-m5"
    return M4(session.q_j1, r_j, cid, t, r)


def card_process_m4(card: SmartCard, pw, session: UserSessionState, m4: M4) -> tuple[M5, bytes]:
    """Verify the RSU, store the per-RSU entry and derive the session key."""
    _advance(session, "await-m4", "failed")
    pw = _b(pw)
    params = card.params
    _check_elem(m4.q_j1, params)
    rsuid = session.rsuid
    q_i1, q_j1 = _elem(session.q_i1, params), _elem(m4.q_j1, params)
    dh = _elem(cheby_eval(session.a, m4.q_j1, params), params)
    z_i = hash_fields([q_j1, q_i1, rsuid, session.a_i, session.x_2])
    if hash_fields([z_i, dh, m4.cid, ts_bytes(m4.t), m4.r]) != m4.r_j:
        raise AuthFailure("R_j does not verify", which="rsu")
    hb = unmask(m4.r, hash_fields([dh]))
    card.entries[rsuid] = CardEntry(
        d=hash_fields([rsuid, pw, hb]),
        cid=m4.cid,
        t=m4.t,
        e=mask(hb, hash_fields([pw, card.id_i, rsuid])),
    )
    r_i = hash_fields([rsuid, q_j1, q_i1, hb, dh])
    session.phase = "done"
    return M5(r_i), hash_fields([dh, rsuid])


def rsu_process_m5(rsu: RsuState, session: RsuSessionState, m5: M5) -> bytes:
    _advance(session, "await-m5", "failed")
    params = rsu.params
    dh = _elem(session.dh, params)
    expected = hash_fields(
        [rsu.rsuid, _elem(session.q_j1, params), _elem(session.q_i1, params), session.hb, dh]
    )
    if expected != m5.r_i:
        rsu.revoke(session.cid)
        raise AuthFailure("R_i does not verify", which="user")
    sk = hash_fields([dh, rsu.rsuid])
    rsu.cid_table[session.cid].sk = sk
    session.phase = "done"
    return sk


# -- consequent login and key agreement ----------------------------------------

def user_consequent_login(card: SmartCard, pw, rsuid, clock, rng=SYSTEM_RNG) -> tuple[C1, UserSessionState]:
    rsuid, pw = _b(rsuid), _b(pw)
    entry = card.entries.get(rsuid)
    if entry is None:
        raise NoEntry(f"card holds no entry for RSU {rsuid!r}")
    card_unlock(card, pw)
    hb = unmask(entry.e, hash_fields([pw, card.id_i, rsuid]))
    if hash_fields([rsuid, pw, hb]) != entry.d:
        raise PasswordMismatch("per-RSU verifier does not match")
    params = card.params
    a = random_exponent(params, rng)
    q_i = cheby_eval(a, params.x, params)
    ts = clock.now()
    x_1 = mask(q_i, hb)
    x_2 = hash_fields([entry.cid, rsuid, _elem(q_i, params), x_1, ts_bytes(ts)])
    session = UserSessionState("await-c2", rsuid, a, ts, q_i=q_i, hb=hb, cid=entry.cid)
    return C1(entry.cid, entry.t, x_1, x_2, ts), session


def rsu_process_c1(rsu: RsuState, c1: C1, clock, rng=SYSTEM_RNG) -> tuple[C2, RsuSessionState]:
    entry = rsu.cid_table.get(c1.cid)
    if entry is None or entry.t != c1.t:
        raise UnknownCid("pseudo-identity not issued by this RSU")
    if entry.status != "active":
        raise RevokedCid("pseudo-identity has been revoked")
    _require_fresh(c1.ts, clock, rsu.delta)
    params = rsu.params
    hb = hash_fields([c1.cid, rsu.b_j, ts_bytes(c1.t)])
    q_i = bytes_to_int(unmask(c1.x_1, hb))
    if q_i >= params.p:
        raise AuthFailure("recovered Q_i out of range", which="user")
    if hash_fields([c1.cid, rsu.rsuid, _elem(q_i, params), c1.x_1, ts_bytes(c1.ts)]) != c1.x_2:
        raise AuthFailure("X_2 does not verify", which="user")
    b = random_exponent(params, rng)
    q_j1 = cheby_eval(b, params.x, params)
    dh = cheby_eval(b, q_i, params)
    y_1 = mask(q_j1, hash_fields([_elem(q_i, params), hb]))
    y_2 = hash_fields([_elem(q_j1, params), _elem(q_i, params), hb, y_1, _elem(dh, params)])
    session = RsuSessionState("await-c3", b, q_j1=q_j1, dh=dh, cid=c1.cid, t=c1.t, hb=hb, q_i=q_i, y_1=y_1)
    return C2(y_1, y_2), session


def card_process_c2(card: SmartCard, session: UserSessionState, c2: C2) -> tuple[C3, bytes]:
    _advance(session, "await-c2", "failed")
    params = card.params
    q_i = _elem(session.q_i, params)
    q_j1 = bytes_to_int(unmask(c2.y_1, hash_fields([q_i, session.hb])))
    if q_j1 >= params.p:
        raise AuthFailure("recovered Q_j1 out of range", which="rsu")
    dh = _elem(cheby_eval(session.a, q_j1, params), params)
    q_j1 = _elem(q_j1, params)
    if hash_fields([q_j1, q_i, session.hb, c2.y_1, dh]) != c2.y_2:
        raise AuthFailure("Y_2 does not verify", which="rsu")
    r_i = hash_fields([session.rsuid, q_j1, q_i, session.hb, c2.y_1, dh])
    session.phase = "done"
    return C3(r_i), hash_fields([dh, session.rsuid])


def rsu_process_c3(rsu: RsuState, session: RsuSessionState, c3: C3) -> bytes:
    _advance(session, "await-c3", "failed")
    params = rsu.params
    dh = _elem(session.dh, params)
    expected = hash_fields(
        [rsu.rsuid, _elem(session.q_j1, params), _elem(session.q_i, params), session.hb, session.y_1, dh]
    )
    if expected != c3.r_i:
        rsu.revoke(session.cid)
        raise AuthFailure("R_i does not verify", which="user")
    sk = hash_fields([dh, rsu.rsuid])
    rsu.cid_table[session.cid].sk = sk
    session.phase = "done"
    return sk


# -- password change ---------------------------------------------------------

def change_password(card: SmartCard, pw_old, pw_new) -> SmartCard:
    """Return a new card re-keyed to ``pw_new``; the old card is untouched."""
    pw_old, pw_new = _b(pw_old), _b(pw_new)
    if not pw_new:
        raise EmptyPassword("password must be non-empty")
    card_unlock(card, pw_old)
    d1 = mask(mask(card.d1, hash_fields([pw_old, card.id_i])), hash_fields([pw_new, card.id_i]))
    entries = {}
    for rsuid, entry in card.entries.items():
        hb = unmask(entry.e, hash_fields([pw_old, card.id_i, rsuid]))
        entries[rsuid] = replace(
            entry,
            d=hash_fields([rsuid, pw_new, hb]),
            e=mask(hb, hash_fields([pw_new, card.id_i, rsuid])),
        )
    return replace(card, d1=d1, d2=hash_fields([card.id_i, pw_new]), entries=entries)
