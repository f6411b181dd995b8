from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict

from .. import protocol as proto
from ..address import AddressPool, AddressSplit, rsu_prefix
from ..counters import OpCounters, track
from ..crypto import ChebyParams, int_to_bytes
from .adversary import ADVERSARIES, BitflipAdversary
from .config import ScenarioConfig
from .engine import MESSAGES_PER_KIND, RsuNode, ServerNode, Simulation, VehicleNode
from .report import ScenarioReport, collect_counters

log = logging.getLogger(__name__)


def _params(prime: str) -> ChebyParams:
    return ChebyParams.test() if prime == "test" else ChebyParams.default()


def plan_messages(sessions_per_vehicle: int) -> int:
    """Messages one vehicle's plan puts on the wire: first login, address, consequent logins."""
    return (MESSAGES_PER_KIND["first"] + MESSAGES_PER_KIND["address"]
            + MESSAGES_PER_KIND["consequent"] * sessions_per_vehicle)


def build(config: ScenarioConfig) -> tuple[Simulation, list]:
    """Set up server, RSUs, registered vehicles and adversaries; nothing runs yet."""
    config.validate()
    params = _params(config.prime)
    rng = random.Random(config.seed)
    keep_wire = config.leak_check and config.prime == "default"
    sim = Simulation(params, rng, config.delta_window_secs, OpCounters(), keep_wire=keep_wire)
    split = AddressSplit(config.split_i)

    with track(sim.counters, "setup", "server"):
        server_state = proto.MixZoneServerState.create(params, rng)
    sim.server_state = server_state
    sim.add_node(ServerNode("mzs", sim, server_state))

    rsus = []
    for j in range(config.num_rsus):
        with track(sim.counters, "setup", "server"):
            state = server_state.provision_rsu(f"rsu-{j:04d}", delta=config.delta_window_secs)
        pool = AddressPool(rsu_prefix(j, split), split, config.lease_duration)
        rsus.append(sim.add_node(RsuNode(f"rsu-{j:04d}", sim, state, pool, "mzs")))

    for k in range(config.num_vehicles):
        ident = f"veh-{k:06d}"
        pw = rng.randbytes(8).hex().encode()
        with track(sim.counters, "registration", "user"):
            req, nonce = proto.user_begin_registration(ident, pw, rng.randbytes(16), rng)
        with track(sim.counters, "registration", "server"):
            resp = proto.server_complete_registration(server_state, req, rng)
        with track(sim.counters, "registration", "user"):
            card = proto.user_finalize_registration(resp, ident, pw, nonce)
        vehicle = sim.add_node(
            VehicleNode(ident, sim, card, pw, rsus[k % len(rsus)], config.sessions_per_vehicle)
        )
        sim.loop.at(k * config.arrival_interval + rng.uniform(0, 0.5), vehicle.start_first)

    adversaries = []
    for index, spec in enumerate(config.adversaries):
        adv_rng = random.Random(f"{config.seed}/{index}/{spec.kind}")
        if spec.kind == "bitflip":
            adv = BitflipAdversary(sim, adv_rng, spec.params, index,
                                   plan_messages(config.sessions_per_vehicle), list(sim.vehicles))
        else:
            adv = ADVERSARIES[spec.kind](sim, adv_rng, spec.params, index)
        adv.start()
        adversaries.append(adv)
    # corrupting taps run first so capturing taps record what is really on the wire
    sim.net.taps = sorted(adversaries, key=lambda a: a.kind != "bitflip")
    return sim, adversaries


def _lease_audit(sim: Simulation) -> dict:
    now = sim.clock.now()
    active = [l for r in sim.rsus.values() for l in r.pool.active(now)]
    addresses = [str(l.address) for l in active]
    held = [str(v.address) for v in sim.vehicles.values()
            if v.address is not None and v.lease_expiry > now]
    overlaps = 0
    reused = 0
    allocated = 0
    for rsu in sim.rsus.values():
        allocated += rsu.pool.allocations
        by_id = defaultdict(list)
        for lease in rsu.pool.history:
            by_id[lease.vehicle_id].append(lease)
        for leases in by_id.values():
            leases.sort(key=lambda l: l.issued)
            reused += len(leases) - 1
            overlaps += sum(1 for a, b in zip(leases, leases[1:]) if b.issued < a.expiry)
    return {
        "allocated": allocated,
        "active_leases": len(active),
        "adopted": sum(1 for v in sim.vehicles.values() if v.address is not None),
        "duplicates": (len(addresses) - len(set(addresses))) + (len(held) - len(set(held))),
        "overlapping_leases": overlaps,
        "reused_ids": reused,
    }


def _leak_audit(sim: Simulation) -> int | None:
    if not sim.keep_wire:
        return None
    width = sim.params.element_width
    server = sim.server_state
    global_secrets = [server.r, server.s, int_to_bytes(server.cheby_secret.n, width)]
    leaks = 0
    for rec in sim.sessions.values():
        needles = global_secrets + [int_to_bytes(x, width) for x in rec.secrets]
        for data in rec.wire:
            leaks += sum(1 for n in needles if n in data)
    return leaks


def summarize(config: ScenarioConfig, sim: Simulation, adversaries: list) -> ScenarioReport:
    honest = [r for r in sim.sessions.values() if r.honest and r.kind in MESSAGES_PER_KIND]
    by_kind = {}
    for kind in MESSAGES_PER_KIND:
        recs = [r for r in honest if r.kind == kind]
        by_kind[kind] = {
            "attempted": len(recs),
            "completed": sum(r.status == "completed" for r in recs),
        }
    rejections = Counter(r.error for r in honest if r.status == "rejected")
    completed = sum(r.status == "completed" for r in honest)
    key_agreement = sum(
        1 for r in honest
        if r.kind in ("first", "consequent") and r.status == "completed" and r.user_sk == r.rsu_sk
    )
    unattacked_failures = sum(1 for r in honest if not r.attacks and r.status != "completed")

    adv_summary = {}
    for attack in sim.attacks.values():
        entry = adv_summary.setdefault(
            attack.kind, {"attempts": 0, "blocked": 0, "succeeded": 0, "outcomes": Counter(), "actions": Counter()}
        )
        entry["attempts"] += 1
        entry["succeeded" if attack.succeeded else "blocked"] += 1
        entry["outcomes"][attack.reason] += 1
        entry["actions"][attack.action.split(" of ")[-1] if attack.kind == "bitflip" else attack.action] += 1
    for entry in adv_summary.values():
        entry["outcomes"] = dict(sorted(entry["outcomes"].items()))
        entry["actions"] = dict(sorted(entry["actions"].items()))
    for adv in adversaries:
        adv_summary.setdefault(adv.kind, {"attempts": 0, "blocked": 0, "succeeded": 0, "outcomes": {}, "actions": {}})
        if adv.kind == "exhaustion":
            adv_summary[adv.kind]["occupancy_before"] = adv.occupancy_before
            adv_summary[adv.kind]["occupancy_after"] = adv.occupancy_after
        if adv.kind == "bitflip":
            adv_summary[adv.kind]["trials"] = len(adv.targets)

    controls = [sid for adv in adversaries for sid in getattr(adv, "control_sids", [])]
    addresses = _lease_audit(sim)
    leaks = _leak_audit(sim)
    all_blocked = all(a["succeeded"] == 0 for a in adv_summary.values())
    sessions_per_phase = {
        "first-login": by_kind["first"]["completed"],
        "consequent": by_kind["consequent"]["completed"],
        "address": by_kind["address"]["completed"],
        "registration": config.num_vehicles,
    }
    summary = {
        "scenario": config.to_dict(),
        "sessions": {
            "attempted": len(honest),
            "completed": completed,
            "attacked": sum(1 for r in honest if r.attacks),
            "key_agreement": key_agreement,
            "by_kind": by_kind,
            "unattacked_failures": unattacked_failures,
        },
        "rejections": dict(sorted(rejections.items())),
        "identity_recovery": {"checked": sim.identity_checks, "correct": sim.identity_correct},
        "adversaries": adv_summary,
        "controls": {
            "beacons_sent": len(controls),
            "beacons_endorsed": sum(sim.sessions[s].status == "completed" for s in controls),
            "notices_accepted": sim.notices_accepted,
        },
        "addresses": addresses,
        "cost": collect_counters(sim.counters, sessions_per_phase),
        "secret_leaks": leaks,
        "final_time": sim.clock.now(),
        "all_adversaries_blocked": all_blocked,
        "ok": bool(
            all_blocked
            and unattacked_failures == 0
            and addresses["duplicates"] == 0
            and addresses["overlapping_leases"] == 0
            and not leaks
        ),
    }
    rows = [
        {
            "sid": r.sid, "kind": r.kind, "vehicle": r.vehicle or "", "rsu": r.rsu,
            "honest": int(r.honest), "attacked": int(bool(r.attacks)), "status": r.status,
            "error": r.error or "", "error_at": r.error_at or "", "started": r.started,
        }
        for r in sorted(sim.sessions.values(), key=lambda r: r.sid)
    ]
    return ScenarioReport(summary, rows)


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Register every vehicle, run all handshakes and adversaries, and report."""
    sim, adversaries = build(config)
    sim.loop.run()
    sim.finish()
    report = summarize(config, sim, adversaries)
    log.info("scenario seed=%s ok=%s", config.seed, report.ok)
    return report
