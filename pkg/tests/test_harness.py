import json
from pathlib import Path

import pytest

from politeia.cli import main
from politeia.harness import (
    ConfigError,
    ScenarioConfig,
    ScenarioFailure,
    ScriptedEvent,
    Simulation,
    build_report,
    run_scenario,
)
from politeia.harness.config import derive_rng
from politeia.harness.policies import PrivateTx, Snapshot
from politeia.ledger import verify_chain
from politeia.org import Status


def kinds(result, kind):
    return [json.loads(line) for line in result.events if json.loads(line)["kind"] == kind]


@pytest.mark.parametrize(
    "patch",
    [
        {"policy_mix": {"honest": 0.5}},
        {"policy_mix": {"saint": 1.0}},
        {"events": [{"epoch": 1, "kind": "meteor"}]},
        {"events": [{"epoch": 99, "kind": "node-arrival"}]},
        {"finality_window": 0},
        {"tx_rate": 1.5},
        {"seed": -1},
        {"colour": "blue"},
        {"events": [{"kind": "node-arrival"}]},
    ],
)
def test_invalid_configs_are_rejected(patch):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"epochs": 5, **patch})


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig.from_dict({"seed": 9, "epochs": 4, "arrival_schedule": {"2": 3},
                                    "events": [{"epoch": 1, "kind": "node-arrival", "params": {"count": 2}}]})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.load(path) == cfg
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "missing.json")


def test_rng_streams_are_independent_and_stable():
    a = derive_rng(1, "deliberation", 3).random()
    assert a == derive_rng(1, "deliberation", 3).random()
    assert a != derive_rng(1, "transactions", 3).random()
    assert a != derive_rng(2, "deliberation", 3).random()


def test_inject_event_validates():
    sim = Simulation(ScenarioConfig(epochs=3))
    with pytest.raises(ConfigError):
        sim.inject_event(1, "volcano")
    with pytest.raises(ConfigError):
        sim.inject_event(5, "node-arrival")
    sim.inject_event(1, "node-arrival", {"count": 2})
    sim.run()
    assert len(sim.h.active_nodes()) == 14


def test_three_nodes_never_mint():
    r = run_scenario(ScenarioConfig(seed=1, epochs=6, initial_nodes=3, achievement_rate=1.0))
    assert r.simulation.eco.book.total_minted == 0
    assert kinds(r, "reward-inactive")
    assert r.violation is None and not r.audit


def test_honest_amounts_stay_in_benchmark_band():
    cfg = ScenarioConfig(seed=4, epochs=12, initial_nodes=30, achievement_rate=0.1, research_tx_rate=0.0)
    r = run_scenario(cfg)
    minted = kinds(r, "minted")
    assert minted
    assert {m["data"]["amount"] for m in minted} <= set(cfg.benchmarks.values())
    assert r.violation is None and not r.audit


def test_thirty_arrivals_at_once():
    cfg = ScenarioConfig(seed=2, epochs=3, initial_nodes=5,
                         events=[ScriptedEvent(1, "node-arrival", {"count": 30})])
    sim = Simulation(cfg)
    sim.run()
    assert len(sim.h.active_nodes()) == 35
    assert all(3 <= g.size <= 25 for g in sim.h.groups.values())
    assert not sim.h.check_invariants()


def test_core_departure_has_successor_before_deliberation():
    cfg = ScenarioConfig(seed=5, epochs=4, initial_nodes=12, events=[ScriptedEvent(2, "node-departure")])
    sim = Simulation(cfg)
    sim.step()
    sim.step()
    leaf = min((g for g in sim.h.groups.values() if g.core_nodes), key=lambda g: (g.level, g.id))
    core = leaf.core_nodes[0]
    sim.stage_membership()
    assert sim.h.nodes[core].status is Status.REVOKED
    assert core not in leaf.members and len(leaf.core_nodes) == 2
    assert sim.h.host(leaf.id) in leaf.core_nodes
    (dep,) = [e for e in sim.events if e.kind == "departure"]
    assert dep.data["successions"]


def test_snapshot_refuses_foreign_transactions():
    tx = PrivateTx("t1", "a", "b", 5)
    with pytest.raises(AssertionError):
        Snapshot("c", 0, (), {}, {}, {}, (), 0, (tx,), 100)
    Snapshot("a", 0, (), {}, {}, {}, (), 0, (tx,), 100)


def test_snapshots_hold_only_own_transactions():
    sim = Simulation(ScenarioConfig(seed=3, epochs=6, initial_nodes=10, tx_rate=0.5, achievement_rate=0.3,
                                    hold_unverified=False))
    sim.run()
    assert any(sim.private_txs.values())
    for node in sim.h.active_nodes():
        snap = sim.snapshot(node)
        assert all(node in (t.sender, t.receiver) for t in snap.own_transactions)


def test_scripted_events_leave_records():
    cfg = ScenarioConfig(
        seed=3, epochs=12, initial_nodes=26, tx_rate=0.3, achievement_rate=0.1,
        events=[
            ScriptedEvent(1, "achievement-publication", {"node": "n0003", "fabricated": True, "verified": False}),
            ScriptedEvent(3, "forced-transfer"),
            ScriptedEvent(6, "false-transaction"),
            ScriptedEvent(7, "superior-disclosure-order"),
        ],
    )
    sim = Simulation(cfg)
    sim.step()
    sim.step()
    fake = next(e.data for e in sim.events if e.kind == "achievement" and e.data["fabricated"])
    ach_id = next(a.id for a in sim.eco.achievements.values() if a.author == "n0003" and a.epoch == 1)
    assert fake["author"] == "n0003"
    sim.inject_event(2, "verification-result", {"achievement": ach_id, "passed": False})
    sim.run()
    seen = {e.kind for e in sim.events}
    assert {"transfer", "tx-invalidated", "fraud-detected"} <= seen
    assert any("scope" in e.data for e in sim.events if e.kind == "disclosure")
    assert sim.h.nodes["n0003"].status is Status.RESTRICTED
    announced = [a for b in sim.chain.blocks.values() for a in b.top_summary.report.announcements]
    assert "n0003" in {a.subject for a in announced}
    assert sim.audit_archives() == []
    assert verify_chain(sim.chain) is None


def test_unknown_departure_is_a_scenario_failure():
    cfg = ScenarioConfig(epochs=2, events=[ScriptedEvent(1, "node-departure", {"node": "ghost"})])
    with pytest.raises(ScenarioFailure):
        run_scenario(cfg)


def test_audit_detects_missing_archive_entry():
    r = run_scenario(ScenarioConfig(seed=6, epochs=4, initial_nodes=8, chat_rate=1.0))
    assert r.audit == []
    sim = r.simulation
    ev = next(e for e in sim.events if e.kind == "chat")
    sim.events.append(type(ev)(len(sim.events), ev.epoch, "chat", "00" * 32, ev.holders, ev.archived_in, (), {}))
    assert sim.audit_archives()


def test_event_log_lines_are_canonical():
    r = run_scenario(ScenarioConfig(seed=6, epochs=3, initial_nodes=6))
    for i, line in enumerate(r.events):
        ev = json.loads(line)
        assert ev["seq"] == i and len(ev["digest"]) == 64
        assert json.dumps(ev, sort_keys=True, separators=(",", ":")) == line


def test_report_is_rebuilt_from_log():
    r = run_scenario(ScenarioConfig(seed=8, epochs=10, initial_nodes=20, achievement_rate=0.2))
    rep = build_report(r.events)
    assert rep.total_minted == r.simulation.eco.book.total_minted > 0
    assert [m.epoch for m in rep.epochs] == list(range(10))
    assert rep.verification_ok is True
    assert abs(sum(rep.field_shares.values()) - 1) < 1e-9
    assert rep.to_csv().splitlines()[0].startswith("epoch,nodes")
    table = rep.reputation_csv().splitlines()
    assert table[0].startswith("epoch,node,") and table[0].endswith(",composite")
    assert len(table) > 1


def write_config(tmp_path: Path, **data) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_cli_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path, seed=1, epochs=4, initial_nodes=8, achievement_rate=0.3)
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "events.jsonl").exists() and (out / "report.json").exists()
    assert (out / "chain" / "0.block.json").exists()
    assert main(["verify", "--chain", str(out)]) == 0
    assert main(["report", "--log", str(out / "events.jsonl"), "--csv"]) == 0
    assert main(["report", "--log", str(out / "events.jsonl"), "--json"]) == 0
    assert main(["inspect", "--chain", str(out), "--epoch", "1"]) == 0
    capsys.readouterr()
    assert main(["inspect", "--chain", str(out), "--epoch", "40"]) == 1

    bad = write_config(tmp_path, epochs=4, policy_mix={"honest": 0.2})
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1

    archive = out / "archives" / "1" / "n0002.archive.json"
    archive.write_bytes(archive.read_bytes().replace(b'"epoch": 1', b'"epoch": 2'))
    assert main(["verify", "--chain", str(out)]) == 2
    assert "violation" in capsys.readouterr().out

    fail = write_config(tmp_path, epochs=3, events=[{"epoch": 1, "kind": "node-departure", "params": {"node": "zz"}}])
    assert main(["run", "--config", str(fail), "--out", str(tmp_path / "y")]) == 3
