from __future__ import annotations

import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogpaas import fixtures as fx
from fogpaas.errors import DanglingLink, DuplicateNode, DuplicateSubscription, UnknownNode, UnknownSubscription
from fogpaas.infra import InfrastructureRepository, LinkRecord, NodeRecord, SubscriberInbox


def fog(nid, domain="fog-a"):
    return fx.fog_node(nid, domain)


@pytest.fixture
def repo():
    return InfrastructureRepository(clock=lambda: 0)


def test_publish_into_empty_repo(repo):
    repo.publish_node(fog("f1"))
    snap = repo.snapshot()
    assert snap.node_ids == ["f1"]
    assert snap.links == ()


def test_publish_with_link(repo):
    repo.publish_node(fog("f1"))
    repo.publish_node(fog("f2"), [LinkRecord("f1", "f2", 1)])
    snap = repo.snapshot()
    assert len(snap.nodes) == 2 and len(snap.links) == 1
    assert snap.latency("f2", "f1") == 1


def test_duplicate_publish(repo):
    repo.publish_node(fog("f1"))
    with pytest.raises(DuplicateNode):
        repo.publish_node(fog("f1"))


def test_dangling_link(repo):
    with pytest.raises(DanglingLink):
        repo.publish_node(fog("f1"), [LinkRecord("f1", "ghost", 1)])
    assert repo.snapshot().nodes == ()


def test_remove_drops_incident_links(repo):
    repo.publish_node(fog("f1"))
    repo.publish_node(fog("f2"), [LinkRecord("f1", "f2", 1)])
    repo.remove_node("f2")
    snap = repo.snapshot()
    assert snap.node_ids == ["f1"] and snap.links == ()
    assert [n.id for n in repo.tombstones()] == ["f2"]
    assert repo.tombstones()[0].status == "left"


def test_remove_unknown(repo):
    with pytest.raises(UnknownNode):
        repo.remove_node("zz")


def test_domains(repo):
    assert repo.list_domains() == []
    fx.populate(repo, fx.tc_infra("tc1"))
    assert len(repo.list_domains()) == 3


def test_domain_survives_losing_its_last_node(repo):
    repo.publish_node(fog("f1", "lonely"))
    repo.remove_node("f1")
    [d] = repo.list_domains()
    assert d.id == "lonely" and d.node_ids == ()


def test_left_nodes_excluded_from_snapshot_and_may_rejoin(repo):
    repo.publish_node(fog("f1"))
    repo.remove_node("f1")
    assert repo.snapshot().nodes == ()
    repo.publish_node(fog("f1"))
    assert repo.snapshot().node_ids == ["f1"]


def test_invalid_records_rejected(repo):
    with pytest.raises(ValueError):
        repo.publish_node(NodeRecord("x", "d", "edge"))
    with pytest.raises(ValueError):
        repo.publish_node(NodeRecord("x", "d", "fog", cpu_cap=-1))
    repo.publish_node(fog("f1"))
    repo.publish_node(fog("f2"))
    with pytest.raises(ValueError):
        repo.publish_link(LinkRecord("f1", "f2", 1, bandwidth=0))


def test_links_are_stored_once_per_unordered_pair(repo):
    repo.publish_node(fog("f1"))
    repo.publish_node(fog("f2"))
    repo.publish_link(LinkRecord("f2", "f1", 3))
    repo.publish_link(LinkRecord("f1", "f2", 4))
    assert [l.key for l in repo.snapshot().links] == [("f1", "f2")]
    assert repo.snapshot().latency("f1", "f2") == 4


# -- subscriptions -----------------------------------------------------------


def test_subscriber_sees_join_once(repo):
    inbox = SubscriberInbox()
    repo.subscribe("http://cb")
    repo.publish_node(fog("f3"))
    repo.deliver_pending(inbox)
    repo.deliver_pending(inbox)
    assert [(e["type"], e["node"]["id"]) for e in inbox.events] == [("node-joined", "f3")]


def test_unsubscribed_gets_nothing(repo):
    inbox = SubscriberInbox()
    repo.subscribe("http://cb")
    repo.unsubscribe("http://cb")
    repo.publish_node(fog("f4"))
    assert repo.deliver_pending(inbox) == 0
    assert inbox.events == []


def test_subscription_errors(repo):
    repo.subscribe("http://cb")
    with pytest.raises(DuplicateSubscription):
        repo.subscribe("http://cb")
    with pytest.raises(UnknownSubscription):
        repo.unsubscribe("http://other")


def test_cloud_changes_also_notify(repo):
    inbox = SubscriberInbox()
    repo.subscribe("u")
    repo.publish_node(fx.cloud_node("c1", "cloud"))
    repo.remove_node("c1")
    repo.deliver_pending(inbox)
    assert [e["type"] for e in inbox.events] == ["node-joined", "node-left"]


def test_failed_delivery_keeps_head_and_order(repo):
    repo.subscribe("u")
    for i in range(3):
        repo.publish_node(fog(f"f{i}"))
    inbox = SubscriberInbox()
    calls = {"n": 0}

    def flaky(uri, payload):
        calls["n"] += 1
        if calls["n"] == 2:
            raise ConnectionError("boom")
        inbox.receive(payload)
        return True

    assert repo.deliver_pending(flaky) == 1
    assert repo.pending("u") == 2
    assert repo.deliver_pending(flaky) == 2
    assert [e["event_id"] for e in inbox.events] == [1, 2, 3]


def test_inbox_drops_redelivery():
    inbox = SubscriberInbox()
    assert inbox.receive({"event_id": 1})
    assert not inbox.receive({"event_id": 1})
    assert inbox.receive({"event_id": 2})
    assert len(inbox.events) == 2


def test_background_delivery(repo):
    inbox = SubscriberInbox()
    repo.transport = inbox
    repo.subscribe("u")
    repo.start_delivery(0.005)
    try:
        for i in range(20):
            repo.publish_node(fog(f"f{i}"))
        for _ in range(400):
            if len(inbox.events) == 20:
                break
            threading.Event().wait(0.005)
    finally:
        repo.stop_delivery()
    assert [e["event_id"] for e in inbox.events] == list(range(1, 21))


# -- journal -----------------------------------------------------------------


def test_journal_replay(tmp_path):
    path = tmp_path / "repo.jsonl"
    repo = InfrastructureRepository(journal=path)
    fx.populate(repo, fx.tc_infra("tc1"))
    repo.remove_node("fog-2")
    replayed = InfrastructureRepository(journal=path)
    assert replayed.snapshot() == repo.snapshot()
    assert [d.id for d in replayed.list_domains()] == [d.id for d in repo.list_domains()]
    assert [n.id for n in replayed.tombstones()] == ["fog-2"]


# -- properties ----------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 4), st.integers(0, 1000))
def test_publish_then_remove_restores_snapshot(existing, seed):
    rng = random.Random(seed)
    repo = InfrastructureRepository(clock=lambda: 0)
    repo.register_domain("fog-a")
    for i in range(existing):
        links = [LinkRecord(f"n{i}", f"n{j}", rng.randint(0, 9)) for j in range(i) if rng.random() < 0.5]
        repo.publish_node(fog(f"n{i}"), links)
    before = repo.snapshot()
    links = [LinkRecord("new", f"n{j}", rng.randint(0, 9)) for j in range(existing) if rng.random() < 0.5]
    repo.publish_node(fog("new"), links)
    repo.remove_node("new")
    assert repo.snapshot() == before


def test_concurrent_snapshots_are_never_torn():
    repo = InfrastructureRepository(clock=lambda: 0)
    repo.publish_node(fog("hub"))
    stop = threading.Event()
    bad: list[str] = []

    def reader():
        while not stop.is_set():
            snap = repo.snapshot()
            bad.extend(snap.violations())

    threads = [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    for i in range(200):
        repo.publish_node(fog(f"n{i}"), [LinkRecord("hub", f"n{i}", 1)])
        if i % 3 == 0:
            repo.remove_node(f"n{i}")
    stop.set()
    for t in threads:
        t.join()
    assert bad == []
