"""Overlay semantics: trees, ring relay, multicast, buffering, faults."""

from __future__ import annotations

import pytest

from melt import wire
from melt.aggregates import body_from_text, body_to_text
from melt.overlay import RelayProcess
from melt.streams import StreamSpec

from simutil import (
    FIVE_DOMAINS, ONE_DOMAIN, add_driver, attach_agents, create_stream,
    data_sends, deep_domain, io_stream_spec, make_sim, run_ticks,
)


class TestBuildAndAttach:
    def test_smallest_topology(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        assert set(handle.managers) == {"solo"}
        assert handle.relays == {}
        proc, link = handle.attach_point("n1")
        assert proc is handle.managers["solo"] and link == "a1"

    def test_attach_unknown_node(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        from melt.agent import AgentConfig, AgentCore, IdleSource
        ghost = AgentCore(AgentConfig("ghost", "solo", "client"), IdleSource())
        with pytest.raises(KeyError, match="ghost"):
            handle.attach_agent(ghost)

    def test_double_attach(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        attach_agents(handle, model)
        from melt.agent import AgentConfig, AgentCore, IdleSource
        dup = AgentCore(AgentConfig.from_topology(handle.topology, "n1"), IdleSource())
        with pytest.raises(ValueError, match="already attached"):
            handle.attach_agent(dup)

    def test_deep_domain_has_relays(self):
        host, handle, model = make_sim(deep_domain(32, fanout=4))
        # positions 1..7 are internal with 32 members under fanout 4
        assert len(handle.relays) == 7
        proc, _ = handle.attach_point("n000")  # position 1 is internal
        assert proc.pid == "rel.n000"
        proc, _ = handle.attach_point("n031")  # position 32 hangs under position 7
        assert proc.pid == "rel.n006"


class TestStreams:
    def test_ids_monotone_and_persist(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        attach_agents(handle, model)
        client = add_driver(handle)
        sid1 = create_stream(handle, client, io_stream_spec(name="a"))
        sid2 = create_stream(handle, client, io_stream_spec(name="b"))
        assert (sid1, sid2) == (1, 2)

        # creating client detaches; specs survive and a new consumer sees them
        handle.detach_client("driver")
        late = add_driver(handle, "late")
        assert set(late.specs) == {1, 2}
        assert late.specs[1].name == "a"

    def test_idempotent_by_name(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        client = add_driver(handle)
        sid1 = create_stream(handle, client, io_stream_spec(name="same"))
        sid2 = create_stream(handle, client, io_stream_spec(name="same"))
        assert sid1 == sid2

    def test_bad_specs_rejected(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        client = add_driver(handle)
        client.create_stream(StreamSpec(0, "zero", "fs=knot2", ("IO_RD_BW",),
                                        interval_secs=0))
        client.create_stream(StreamSpec(0, "nometric", "fs=knot2", ("IO_FAKE",)))
        client.create_stream(io_stream_spec(name="nofs", target="fs=knot9"))
        host.flush(client)
        host.pump()
        codes = [e.code for e in client.errors]
        assert codes == ["bad-spec", "bad-spec", "unknown-target"]
        assert "knot9" in client.errors[2].text

    def test_agent_attaching_late_receives_spec_and_produces(self):
        host, handle, model = make_sim(
            ONE_DOMAIN, ("job 0 50 j1 n1", "io 0 50 j1 1M 0 roundrobin"))
        client = add_driver(handle)
        sid = create_stream(handle, client, io_stream_spec(interval=2))
        client.subscribe(sid)
        host.flush(client)
        host.pump()
        run_ticks(host, 1, 4)
        # before any agent attaches the ring still relays (empty) rounds
        assert [(r.round, r.actual_contributors) for r in client.records] == [(2, 0), (4, 0)]

        attach_agents(handle, model)
        agent = handle.agents["n1"]
        assert sid in agent.specs  # replayed at attach
        run_ticks(host, 5, 2)
        last = client.records[-1]
        assert (last.round, last.actual_contributors) == (6, 1)
        body = body_from_text(last.aggregate_body)
        value = body.entries[("", "IO_RD_BW")].sum
        assert value == pytest.approx(1024 * 1024, rel=1e-9)


class TestGatherMerge:
    def make_relay(self):
        relay = RelayProcess("rel.x", "x")
        relay.specs[1] = io_stream_spec(interval=10)
        for link in ("a1", "a2"):
            relay.add_child_link(link)
            relay.handle_producer_subscribe(link, wire.Subscribe(1, "agent-producer"))
        return relay

    def body_text(self, count, total, lo, hi):
        from melt.aggregates import SummaryAgg, SummaryBody
        return body_to_text(SummaryBody({("", "IO_RD_BW"): SummaryAgg(count, total, lo, hi)}))

    def test_single_child_identity_merge(self):
        relay = self.make_relay()
        relay.remove_child("a2", clean=True)
        body = self.body_text(2, 10, 1, 9)
        relay.on_message("a1", wire.Data(1, 10, 10, 1, 1, body))
        sends = [m for l, m in relay.outbox if isinstance(m, wire.Data)]
        assert len(sends) == 1
        assert body_from_text(sends[0].aggregate_body).entries == body_from_text(body).entries

    def test_two_child_merge_matches_flat_fold(self):
        relay = self.make_relay()
        relay.on_message("a1", wire.Data(1, 10, 10, 1, 1, self.body_text(2, 10, 1, 9)))
        assert not [m for _, m in relay.outbox if isinstance(m, wire.Data)]
        relay.on_message("a2", wire.Data(1, 10, 10, 1, 1, self.body_text(3, 6, 2, 4)))
        sends = [m for l, m in relay.outbox if isinstance(m, wire.Data)]
        assert len(sends) == 1
        merged = body_from_text(sends[0].aggregate_body).entries[("", "IO_RD_BW")]
        assert (merged.count, merged.sum, merged.min, merged.max) == (5, 16, 1, 9)
        assert sends[0].expected_contributors == 2
        assert sends[0].actual_contributors == 2

    def test_timeout_emits_partial(self):
        relay = self.make_relay()
        relay.on_message("a1", wire.Data(1, 10, 10, 1, 1, self.body_text(1, 5, 5, 5)))
        relay.on_tick(29)  # within 2x interval: still waiting
        assert not [m for _, m in relay.outbox if isinstance(m, wire.Data)]
        relay.on_tick(30)  # 10 + 2*10
        sends = [m for _, m in relay.outbox if isinstance(m, wire.Data)]
        assert len(sends) == 1
        assert sends[0].actual_contributors == 1

    def test_merge_kind_mismatch_drops_round_with_error(self):
        relay = self.make_relay()
        relay.on_message("a1", wire.Data(1, 10, 10, 1, 1, self.body_text(1, 5, 5, 5)))
        relay.on_message("a2", wire.Data(1, 10, 10, 1, 1, "kind=counted-key\nc k 3"))
        msgs = [m for _, m in relay.outbox]
        assert any(isinstance(m, wire.Error) and m.code == "merge-fault" for m in msgs)
        assert not any(isinstance(m, wire.Data) for m in msgs)

    def test_nonmonotone_round_dropped(self):
        relay = self.make_relay()
        relay.remove_child("a2", clean=True)
        relay.on_message("a1", wire.Data(1, 20, 10, 1, 1, self.body_text(1, 5, 5, 5)))
        relay.on_message("a1", wire.Data(1, 10, 10, 1, 1, self.body_text(1, 5, 5, 5)))
        sends = [m for _, m in relay.outbox if isinstance(m, wire.Data)]
        assert [m.round for m in sends] == [20]


class TestRing:
    def setup_ring(self, interval=1):
        host, handle, model = make_sim(
            FIVE_DOMAINS,
            ("job 0 50 j1 n0 n1 n2 n3 n4", "io 0 50 j1 1M 0 roundrobin"))
        attach_agents(handle, model)
        client = add_driver(handle)
        sid = create_stream(handle, client, io_stream_spec(interval=interval))
        client.subscribe(sid)
        host.flush(client)
        host.pump()
        return host, handle, client, sid

    def test_five_ring_frames_one_root_ingress(self):
        host, handle, client, sid = self.setup_ring()
        host.transcript.clear()
        run_ticks(host, 1, 3)
        ring_pids = {f"mgr.d{i}" for i in range(5)} | {"root"}
        for rnd in (1, 2, 3):
            ring = [e for e in data_sends(host.transcript, sid)
                    if e[2] in ring_pids and e[3] in ring_pids and e[6] == rnd]
            assert len(ring) == 5
            root_in = [e for e in data_sends(host.transcript, sid, dst="root")
                       if e[6] == rnd]
            assert len(root_in) == 1
            assert root_in[0][8:] == (5, 5)  # expected, actual

    def test_root_merge_covers_all_domains(self):
        host, handle, client, sid = self.setup_ring()
        run_ticks(host, 1, 2)
        record = client.records[-1]
        body = body_from_text(record.aggregate_body)
        agg = body.entries[("", "IO_RD_BW")]
        assert agg.count == 5
        assert agg.sum == pytest.approx(5 * 1024 * 1024, rel=1e-9)

    def test_detach_fault_reduces_actual_not_expected(self):
        host, handle, client, sid = self.setup_ring()
        run_ticks(host, 1, 2)
        handle.detach_agent("n2", clean=False)
        run_ticks(host, 3, 2)
        last = client.records[-1]
        assert last.expected_contributors == 5
        assert last.actual_contributors == 4

    def test_clean_detach_reduces_both(self):
        host, handle, client, sid = self.setup_ring()
        run_ticks(host, 1, 2)
        handle.detach_agent("n2", clean=True)
        run_ticks(host, 3, 2)
        last = client.records[-1]
        assert last.expected_contributors == 4
        assert last.actual_contributors == 4

    def test_ring_link_drop_flags_missing_domains(self):
        host, handle, client, sid = self.setup_ring()
        run_ticks(host, 1, 2)
        host.sever_link("mgr.d1", "up")
        run_ticks(host, 3, 3)
        last = client.records[-1]
        assert last.expected_contributors == 5
        assert last.actual_contributors == 3
        rounds = [r.round for r in client.records]
        assert rounds == sorted(rounds)


class TestMulticast:
    def test_jobmap_reaches_every_agent_exactly_once(self):
        host, handle, model = make_sim(FIVE_DOMAINS)
        attach_agents(handle, model)
        client = add_driver(handle)
        host.transcript.clear()
        client.emit("up", wire.JobMapUpdate(3, (("j9", ("n0", "n4")),)))
        host.flush(client)
        host.pump()
        for node, agent in handle.agents.items():
            assert agent.jobmap_epoch == 3
        deliveries = [e for e in host.transcript
                      if e[0] == "send" and e[4] == "JobMapUpdate"]
        per_link = {}
        for e in deliveries:
            per_link[(e[2], e[3])] = per_link.get((e[2], e[3]), 0) + 1
        assert all(count == 1 for count in per_link.values())
        to_agents = [e for e in deliveries if e[3].startswith("agent.")]
        assert len(to_agents) == 5

    def test_stale_epoch_ignored(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        attach_agents(handle, model)
        client = add_driver(handle)
        client.emit("up", wire.JobMapUpdate(7, ()))
        client.emit("up", wire.JobMapUpdate(5, (("j", ("n1",)),)))
        host.flush(client)
        host.pump()
        assert handle.agents["n1"].jobmap_epoch == 7

    def test_setrate_scoped_by_producing_domain(self):
        topo_text = FIVE_DOMAINS.replace(
            "[domain d4]\nmanager = m4\nmembers = n4\nfanout = 2\nrole = client\nfs = knot2",
            "[domain d4]\nmanager = m4\nmembers = n4\nfanout = 2\nrole = oss\nfs = knot2\n"
            "osts = knot2-OST0000")
        host, handle, model = make_sim(topo_text)
        attach_agents(handle, model)
        client = add_driver(handle)
        sid = create_stream(handle, client, io_stream_spec(
            name="oss-stream", target="oss=n4", metrics=("IO_RD_BW",), interval=10))
        host.transcript.clear()
        client.set_rate(sid, ("IO_RD_BW",), 2)
        host.flush(client)
        host.pump()
        assert handle.agents["n4"].stream_interval(sid) == 2
        # client-domain agents never see the rate change on their tree links
        tree_sends = [e for e in host.transcript
                      if e[0] == "send" and e[4] == "SetRate" and e[3].startswith("agent.")]
        assert [e[3] for e in tree_sends] == ["agent.n4"]

    def test_multicast_with_no_agents_is_quiet(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        client = add_driver(handle)
        client.emit("up", wire.JobMapUpdate(1, ()))
        host.flush(client)
        host.pump()  # no error, nothing delivered to agents


class TestBuffering:
    def test_drop_oldest_capacity_16(self):
        host, handle, model = make_sim(
            ONE_DOMAIN, ("job 0 45 j1 n1", "io 0 45 j1 1M 0 roundrobin"))
        attach_agents(handle, model)
        creator = add_driver(handle, "creator")
        sid = create_stream(handle, creator, io_stream_spec(interval=1, capacity=16))
        handle.detach_client("creator")

        run_ticks(host, 1, 40)
        consumer = add_driver(handle, "consumer")
        consumer.subscribe(sid)
        host.flush(consumer)
        host.pump()
        assert [r.round for r in consumer.records] == list(range(25, 41))

        run_ticks(host, 41, 2)
        assert [r.round for r in consumer.records] == list(range(25, 43))

    def test_pass_through_when_subscribed(self):
        host, handle, model = make_sim(ONE_DOMAIN)
        attach_agents(handle, model)
        client = add_driver(handle)
        sid = create_stream(handle, client, io_stream_spec(interval=1, capacity=16))
        client.subscribe(sid)
        host.flush(client)
        host.pump()
        run_ticks(host, 1, 5)
        assert handle.root.streams[sid].buffer == type(handle.root.streams[sid].buffer)()
        assert [r.round for r in client.records] == [1, 2, 3, 4, 5]


class TestScaling:
    @pytest.mark.parametrize("leaves", [8, 64])
    def test_root_ingress_independent_of_leaf_count(self, leaves):
        host, handle, model = make_sim(
            deep_domain(leaves),
            (f"job 0 20 j1 " + " ".join(f"n{i:03d}" for i in range(leaves)),
             "io 0 20 j1 1M 0 roundrobin"))
        attach_agents(handle, model)
        client = add_driver(handle)
        sid = create_stream(handle, client, io_stream_spec(interval=1))
        client.subscribe(sid)
        host.flush(client)
        host.pump()
        host.transcript.clear()
        run_ticks(host, 1, 2)
        for rnd in (1, 2):
            root_in = [e for e in data_sends(host.transcript, sid, dst="root") if e[6] == rnd]
            assert len(root_in) == 1
            assert root_in[0][8:] == (leaves, leaves)


class TestCrossDomainGrouping:
    def test_shared_job_groups_merge_once_at_root(self):
        # one job spanning two domains: its group merges, never duplicates
        host, handle, model = make_sim(
            FIVE_DOMAINS,
            ("job 0 50 tait.1113 n0 n3", "io 0 50 tait.1113 2M 0 roundrobin"))
        attach_agents(handle, model)
        client = add_driver(handle)
        sid = create_stream(handle, client, io_stream_spec(
            group_by="job", interval=2))
        client.emit("up", wire.JobMapUpdate(1, (("tait.1113", ("n0", "n3")),)))
        client.subscribe(sid)
        host.flush(client)
        host.pump()
        run_ticks(host, 1, 2)
        record = client.records[-1]
        body = body_from_text(record.aggregate_body)
        # the two in-job domains fold into one key, never a duplicate; idle
        # clients still contribute (empty) rounds and count as contributors
        assert {g for g, _m in body.entries} == {"tait.1113"}
        agg = body.entries[("tait.1113", "IO_RD_BW")]
        assert agg.count == 2
        assert agg.sum == pytest.approx(2 * 2 * 1024 * 1024, rel=1e-9)
        assert record.actual_contributors == 5
        assert record.expected_contributors == 5
