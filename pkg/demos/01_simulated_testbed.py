"""Walk through a full simulated run of the default testbed.

Builds the shipped scenario (three compute clusters, routers, OSS and MDS
domains, a scripted multi-job workload), runs it for its 60 logical
seconds with the monitoring daemon attached, then pokes at the results:
performance logs, a live top-style session, and the message accounting
that backs the scalability claims.
"""

from melt.aggregates import body_from_text
from melt.meltmon import parse_log_line
from melt.scenario import load_scenario
from melt.simharness import SimCluster, message_accounting, oracle_aggregate, resolve_scenario_path

spec = load_scenario(resolve_scenario_path("testbed.cfg"))
print(f"scenario: {len(spec.topology.domains)} domains, "
      f"{len(spec.topology.all_nodes())} nodes, {spec.duration}s, seed {spec.seed}")

cluster = SimCluster(spec)

# an interactive session alongside the daemon: top-3 jobs by write bandwidth
top = cluster.add_cli(["-group=job", "fs=knot2", "top", "io",
                       "-topk=3", "-topmetric=IO_WR_BW", "-delay=10s"])
cluster.advance(spec.duration)
result = cluster.result()

print("\n--- daemon log excerpt (melt-knot2.log) ---")
for line in result.logs["melt-knot2.log"][:6]:
    print(line)

print("\n--- parsed back ---")
stamp, host, pair, values = parse_log_line(result.logs["melt-knot2.log"][1])
print(f"at {stamp} on {host}, {pair[0]}={pair[1]}:")
for key in ("IO_RD_BW", "IO_WR_BW", "IO_CLNT_NUM"):
    print(f"  {key} = {values[key]:.0f} (base units)")

print("\n--- live top session (last frame) ---")
print(top.rendered[0].splitlines()[0])
for line in top.rendered[-1].splitlines():
    print(line)

print("\n--- oracle check on the io stream, final round ---")
io_records = [e for e in result.root_records(stream_id=1)]
last_round = io_records[-1][3]
oracle = oracle_aggregate(result, 1, last_round)
record = [r for r in cluster.daemon.records
          if r.stream_id == 1 and r.round == last_round][0]
tree = body_from_text(record.aggregate_body)
assert set(tree.entries) == set(oracle.entries)
print(f"round {last_round}: tree merge and flat fold agree on "
      f"{len(tree.entries)} (group, metric) cells")

print("\n--- message accounting ---")
acct = message_accounting(result)
rnd = (1, last_round)
print(f"ring frames for io round {last_round}: {acct.ring_frames[rnd]} "
      f"(= number of domains)")
print(f"root ingress: {acct.root_ingress[rnd]} frame")
print(f"tree edges carrying data: {len(acct.tree_edge_counts(1, last_round))}, "
      f"each exactly once: {set(acct.tree_edge_counts(1, last_round).values()) == {1}}")
