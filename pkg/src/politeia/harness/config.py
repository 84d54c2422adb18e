"""Scenario configuration: loading, defaults and validation."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

EVENT_KINDS = (
    "node-arrival",
    "node-departure",
    "achievement-publication",
    "verification-result",
    "superior-disclosure-order",
    "forced-transfer",
    "false-transaction",
    "core-count-violation",
)
POLICIES = ("honest", "lazy", "malicious", "fraudster")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScriptedEvent:
    epoch: int
    kind: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    seed: int = 0
    epochs: int = 20
    initial_nodes: int = 12
    arrival_schedule: dict[int, int] = field(default_factory=dict)
    policy_mix: dict[str, float] = field(default_factory=lambda: {"honest": 1.0})
    policy_overrides: dict[str, str] = field(default_factory=dict)
    # deliberation
    deadline: int = 2
    threshold: float = 6.0
    quorum: float = 0.5
    # economy
    penalty_epochs: int = 10
    hold_unverified: bool = True
    benchmarks: dict[str, int] = field(
        default_factory=lambda: {"incremental": 100, "significant": 500, "breakthrough": 2000}
    )
    fields: tuple[str, ...] = ("physics", "biology", "computing", "mathematics")
    # ledger
    finality_window: int = 1
    backup_replicas: int = 2
    chat_holders: int = 3
    max_retry: int = 3
    # activity rates, per node per epoch
    achievement_rate: float = 0.05
    unverified_rate: float = 0.5
    verification_delay: int = 4
    chat_rate: float = 0.3
    evaluation_count: int = 1
    tx_rate: float = 0.1
    research_tx_rate: float = 0.3
    lazy_skip: float = 0.5
    reputation_window: int = 6
    events: list[ScriptedEvent] = field(default_factory=list)
    debug: bool = True

    def validate(self) -> None:
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for name in ("epochs", "initial_nodes", "deadline", "penalty_epochs", "backup_replicas",
                     "chat_holders", "max_retry", "evaluation_count", "reputation_window"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.finality_window < 1 or self.deadline < 1 or self.reputation_window < 1:
            raise ConfigError("finality window, deadline and reputation window must be at least 1")
        if any(e < 0 or n < 0 for e, n in self.arrival_schedule.items()):
            raise ConfigError("arrival schedule needs non-negative epochs and counts")
        unknown = set(self.policy_mix) - set(POLICIES)
        if unknown:
            raise ConfigError(f"unknown policies {sorted(unknown)}")
        if any(f < 0 for f in self.policy_mix.values()):
            raise ConfigError("policy fractions must be non-negative")
        if not math.isclose(sum(self.policy_mix.values()), 1.0, abs_tol=1e-9):
            raise ConfigError("policy fractions must sum to 1")
        bad = {p for p in self.policy_overrides.values() if p not in POLICIES}
        if bad:
            raise ConfigError(f"unknown override policies {sorted(bad)}")
        for name in ("achievement_rate", "unverified_rate", "chat_rate", "tx_rate", "research_tx_rate",
                     "lazy_skip", "quorum"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0 <= self.threshold <= 10:
            raise ConfigError("threshold must lie in [0, 10]")
        if not self.benchmarks or any(v <= 0 for v in self.benchmarks.values()):
            raise ConfigError("benchmarks need positive reference amounts")
        if not self.fields:
            raise ConfigError("at least one research field is required")
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise ConfigError(f"unknown event kind {ev.kind!r}")
            if not 0 <= ev.epoch < self.epochs:
                raise ConfigError(f"event at epoch {ev.epoch} is outside the run")

    # -- serialization

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        kwargs = dict(data)
        try:
            if "arrival_schedule" in kwargs:
                kwargs["arrival_schedule"] = {int(k): int(v) for k, v in kwargs["arrival_schedule"].items()}
            if "fields" in kwargs:
                kwargs["fields"] = tuple(kwargs["fields"])
            if "events" in kwargs:
                kwargs["events"] = [
                    ScriptedEvent(int(e["epoch"]), str(e["kind"]), dict(e.get("params", {})))
                    for e in kwargs["events"]
                ]
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["arrival_schedule"] = {str(k): v for k, v in sorted(self.arrival_schedule.items())}
        out["fields"] = list(self.fields)
        return out


def derive_rng(seed: int, label: str, epoch: int = 0) -> random.Random:
    """Independent stream per (label, epoch), so new draws elsewhere don't shift this one."""
    digest = hashlib.sha256(f"{seed}:{label}:{epoch}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def derive_seed(seed: int, label: str) -> bytes:
    return hashlib.sha256(f"{seed}:key:{label}".encode()).digest()
