"""A live deployment in miniature: real sockets, an agent, the melt tool.

The overlay (root plus one domain manager) serves TCP attach points; an
agent connects from this process over localhost and samples a scripted
1 MiB/s workload; the melt session engine connects as a second TCP client
and watches it. Time is accelerated (4 logical seconds per wall second).
"""

import threading
import time

from melt.agent import AgentConfig, AgentCore
from melt.meltcli import CliCore, parse_cli
from melt.scenario import SyntheticSource, WorkloadModel, parse_workload
from melt.sockethost import serve_overlay
from melt.topology import parse_topology
from melt.transport import transport_connect
from melt.wire import FrameDecoder, encode_message

topology = parse_topology("""
[domain solo]
manager = mgr
members = n1
fanout = 2
role = client
fs = knot2
[ring]
order = solo
root = skein
""")

host, handle, endpoints = serve_overlay(topology)
print("attach points:", endpoints)
stop = threading.Event()
threading.Thread(target=host.serve,
                 kwargs=dict(logical_seconds=600, wall_per_tick=0.25, stop=stop),
                 daemon=True).start()

script = parse_workload([(1, "job 0 500 j1 n1"),
                         (2, "io 0 500 j1 1M 512K roundrobin")])
model = WorkloadModel(topology, script)
agent = AgentCore(AgentConfig.from_topology(topology, "n1"),
                  SyntheticSource(model, "n1"), topology)
agent_chan = transport_connect(endpoints["n1"], "tcp")

inv = parse_cli(["clnt=n1", "status", "io", "-delay=2s",
                 "-metrics=IO_RD_BW,IO_WR_BW"])
tool = CliCore(inv, client_name="demo", base_time=0, hostname="skein", pid=1)
tool_chan = transport_connect(endpoints["@root"], "tcp")

decoders = {id(agent): FrameDecoder(), id(tool): FrameDecoder()}
agent.start()
tool.start()

clock = 0
printed = 0
deadline = time.time() + 20
while time.time() < deadline and len(tool.frames) < 4:
    for core, chan in ((agent, agent_chan), (tool, tool_chan)):
        for _link, msg in core.outbox:
            chan.send(encode_message(msg))
        core.outbox.clear()
        core.notes.clear()
        for msg in decoders[id(core)].feed(chan.try_recv()):
            core.on_message("up", msg)
    while printed < len(tool.rendered):
        print(tool.rendered[printed])
        printed += 1
    time.sleep(0.25)
    clock += 1
    agent.on_tick(clock)
    tool.on_tick(clock)

tool.finish()
for _link, msg in tool.outbox:
    tool_chan.send(encode_message(msg))
stop.set()
print(f"collected {len(tool.frames)} frames over real TCP")
