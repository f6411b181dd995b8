import random

import pytest

from roadauth import protocol as proto
from roadauth.crypto import ChebyParams, SimClock


class World:
    """One server, one RSU and a clock, driven step by step."""

    def __init__(self, params, seed=0, rsuid="rsu-a"):
        self.params = params
        self.rng = random.Random(seed)
        self.clock = SimClock()
        self.server = proto.MixZoneServerState.create(params, self.rng)
        self.rsu = self.server.provision_rsu(rsuid)
        self._n = 0

    def register(self, ident=None, pw=b"hunter2"):
        self._n += 1
        ident = ident or f"car-{self._n}"
        req, nonce = proto.user_begin_registration(ident, pw, b"iris-template", self.rng)
        resp = proto.server_complete_registration(self.server, req, self.rng)
        return proto.user_finalize_registration(resp, ident, pw, nonce)

    def first_login(self, card, pw=b"hunter2", rsu=None):
        rsu = rsu or self.rsu
        m1, us = proto.user_first_login(card, pw, rsu.rsuid, self.clock, self.rng)
        m2, rs = proto.rsu_process_m1(rsu, m1, self.clock, self.rng)
        m3, ids = proto.server_process_m2(self.server, m2)
        m4 = proto.rsu_process_m3(rsu, rs, m3, self.clock, self.rng)
        m5, sk_user = proto.card_process_m4(card, pw, us, m4)
        sk_rsu = proto.rsu_process_m5(rsu, rs, m5)
        return sk_user, sk_rsu, ids

    def consequent(self, card, pw=b"hunter2", rsu=None):
        rsu = rsu or self.rsu
        c1, us = proto.user_consequent_login(card, pw, rsu.rsuid, self.clock, self.rng)
        c2, rs = proto.rsu_process_c1(rsu, c1, self.clock, self.rng)
        c3, sk_user = proto.card_process_c2(card, us, c2)
        return sk_user, proto.rsu_process_c3(rsu, rs, c3)


@pytest.fixture
def world():
    return World(ChebyParams.test(), seed=1)


@pytest.fixture
def big_world():
    return World(ChebyParams.default(), seed=2)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
