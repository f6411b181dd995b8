from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import ConfigError

ADVERSARY_KINDS = ("replay", "forge_address", "exhaustion", "fake_conflict", "bitflip")
PRIMES = ("test", "default")


@dataclass
class AdversarySpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    num_vehicles: int = 10
    num_rsus: int = 2
    split_i: int = 64
    prime: str = "default"
    delta_window_secs: int = 60
    seed: int = 1
    adversaries: list[AdversarySpec] = field(default_factory=list)
    sessions_per_vehicle: int = 1
    lease_duration: int = 300
    arrival_interval: float = 0.01
    leak_check: bool = True

    def validate(self) -> None:
        if self.num_vehicles < 0:
            raise ConfigError("num_vehicles must be >= 0")
        if self.num_rsus < 1:
            raise ConfigError("num_rsus must be >= 1")
        if self.num_rsus > 0xFFFF:
            raise ConfigError("num_rsus must fit in 16 bits")
        if not 8 <= self.split_i <= 64:
            raise ConfigError("split_i must be in [8, 64]")
        if self.prime not in PRIMES:
            raise ConfigError(f"prime must be one of {PRIMES}")
        if self.delta_window_secs < 1:
            raise ConfigError("delta_window_secs must be >= 1")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.sessions_per_vehicle < 0:
            raise ConfigError("sessions_per_vehicle must be >= 0")
        if self.lease_duration < 1:
            raise ConfigError("lease_duration must be >= 1")
        if self.arrival_interval < 0:
            raise ConfigError("arrival_interval must be >= 0")
        for adv in self.adversaries:
            if adv.kind not in ADVERSARY_KINDS:
                raise ConfigError(f"unknown adversary kind {adv.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        advs = []
        for raw in data.pop("adversaries", []):
            if isinstance(raw, str):
                raw = {"kind": raw}
            if "kind" not in raw:
                raise ConfigError("adversary entry needs a 'kind'")
            params = {k: v for k, v in raw.items() if k not in ("kind", "params")}
            params.update(raw.get("params", {}))
            advs.append(AdversarySpec(raw["kind"], params))
        try:
            cfg = cls(adversaries=advs, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> ScenarioConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("scenario file must hold a JSON object")
        return cls.from_dict(data)
