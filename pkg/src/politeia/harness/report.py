"""Run metrics, recomputed from the JSONL event log alone."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable

from ..reputation import DIMENSIONS


def gini(values: Iterable[int]) -> float:
    xs = sorted(v for v in values if v >= 0)
    n = len(xs)
    total = sum(xs)
    if n == 0 or total == 0:
        return 0.0
    weighted = sum((i + 1) * x for i, x in enumerate(xs))
    return (2 * weighted) / (n * total) - (n + 1) / n


@dataclass
class EpochMetrics:
    epoch: int
    nodes: int = 0
    groups_per_level: dict[str, int] = field(default_factory=dict)
    adopted: int = 0
    rejected: int = 0
    minted: int = 0
    gini: float = 0.0
    fraud_attempts: int = 0
    fraud_detections: int = 0
    rejections: int = 0
    rectifications: int = 0


@dataclass
class RunReport:
    epochs: list[EpochMetrics]
    total_minted: int
    field_shares: dict[str, float]
    detection_latencies: list[int]
    verification_ok: bool | None
    verification_reason: str | None
    reputation: dict[int, dict[str, list[str]]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["epoch", "nodes", "groups", "adopted", "rejected", "minted", "gini",
                "fraud_attempts", "fraud_detections", "rejections", "rectifications"]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for m in self.epochs:
            writer.writerow([m.epoch, m.nodes, sum(m.groups_per_level.values()), m.adopted, m.rejected,
                             m.minted, f"{m.gini:.6f}", m.fraud_attempts, m.fraud_detections,
                             m.rejections, m.rectifications])
        return buf.getvalue()

    def reputation_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "node", *DIMENSIONS, "composite"])
        for epoch in sorted(self.reputation):
            for node, values in sorted(self.reputation[epoch].items()):
                writer.writerow([epoch, node, *values])
        return buf.getvalue()


def build_report(lines: Iterable[str]) -> RunReport:
    per_epoch: dict[int, EpochMetrics] = {}
    minted_by_field: dict[str, int] = defaultdict(int)
    latencies: list[int] = []
    total_minted = 0
    verified_ok: bool | None = None
    reason: str | None = None
    reputation: dict[int, dict[str, list[str]]] = {}

    def at(epoch: int) -> EpochMetrics:
        if epoch not in per_epoch:
            per_epoch[epoch] = EpochMetrics(epoch)
        return per_epoch[epoch]

    for line in lines:
        if not line.strip():
            continue
        ev = json.loads(line)
        kind, data = ev["kind"], ev["data"]
        if kind == "verify":
            verified_ok, reason = data["ok"], data["violation"]
            continue
        m = at(ev["epoch"])
        if kind == "epoch-stats":
            m.nodes = data["nodes"]
            m.groups_per_level = data["groups_per_level"]
        elif kind == "outcome":
            if data["decision"] == "adopt":
                m.adopted += 1
            else:
                m.rejected += 1
        elif kind == "minted":
            m.minted += data["amount"]
            minted_by_field[data["field"]] += data["amount"]
        elif kind == "balances":
            m.gini = gini(data["holdings"].values())
            total_minted = data["total_minted"]
        elif kind == "fraud-attempt":
            m.fraud_attempts += 1
        elif kind == "fraud-detected":
            m.fraud_detections += 1
            latencies.append(data["latency"])
        elif kind == "rejection":
            m.rejections += 1
        elif kind == "rectification":
            m.rectifications += 1
        elif kind == "reputation":
            reputation[ev["epoch"]] = data
    grand = sum(minted_by_field.values())
    shares = {f: v / grand for f, v in sorted(minted_by_field.items())} if grand else {}
    return RunReport(
        epochs=[per_epoch[e] for e in sorted(per_epoch)],
        total_minted=total_minted,
        field_shares=shares,
        detection_latencies=latencies,
        verification_ok=verified_ok,
        verification_reason=reason,
        reputation=reputation,
    )
