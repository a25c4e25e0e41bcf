"""Socket-backed host: the same process cores served over real TCP.

The overlay's internal links (ring, relay tree) run in process; agents and
session clients attach over TCP listeners, identifying themselves with
their first message (Attach), exactly as the protocol intends. This is the
desk-scale deployment mode behind the ``--connect`` flags of meltagent,
meltmon, and melt.
"""

from __future__ import annotations

import time

from . import wire
from .overlay import OverlayHandle, build_overlay
from .topology import OverlayTopology
from .transport import ChannelClosedError, TcpListener, sim_channel_pair


class _Link:
    def __init__(self, channel) -> None:
        self.channel = channel
        self.decoder = wire.FrameDecoder()
        self.closed_notified = False


class SocketHost:
    """Event loop over process cores whose links may be sockets or in-process."""

    def __init__(self) -> None:
        self.procs: list = []
        self.links: dict[tuple[str, str], _Link] = {}
        self.listeners: list[tuple[object, TcpListener]] = []
        self._accept_seq = 0
        self.now = 0
        self.transcript: list[tuple] = []

    def add_process(self, proc) -> None:
        self.procs.append(proc)

    def drop_process(self, proc) -> None:
        self.procs = [p for p in self.procs if p.pid != proc.pid]
        for (pid, link) in [k for k in self.links if k[0] == proc.pid]:
            self.links.pop((pid, link)).channel.close()

    def wire(self, proc_a, link_a: str, proc_b, link_b: str) -> None:
        end_a, end_b = sim_channel_pair()
        self.links[(proc_a.pid, link_a)] = _Link(end_a)
        self.links[(proc_b.pid, link_b)] = _Link(end_b)

    def listen(self, proc, host: str = "127.0.0.1", port: int = 0) -> str:
        listener = TcpListener(host, port)
        self.listeners.append((proc, listener))
        return listener.endpoint

    def attach_channel(self, proc, link: str, channel) -> None:
        """Bind an outbound (dialed) channel as one of the process's links."""
        self.links[(proc.pid, link)] = _Link(channel)

    def flush(self, proc) -> None:
        proc.notes.clear()
        for link, msg in proc.outbox:
            state = self.links.get((proc.pid, link))
            if state is None:
                continue
            try:
                state.channel.send(wire.encode_message(msg))
            except ChannelClosedError:
                pass
        proc.outbox.clear()

    def pump(self) -> None:
        moved = True
        while moved:
            moved = False
            for proc, listener in self.listeners:
                channel = listener.accept()
                if channel is not None:
                    self._accept_seq += 1
                    self.links[(proc.pid, f"tcp{self._accept_seq}")] = _Link(channel)
                    moved = True
            for proc in list(self.procs):
                for key in [k for k in self.links if k[0] == proc.pid]:
                    state = self.links.get(key)
                    if state is None:
                        continue
                    try:
                        data = state.channel.try_recv()
                    except ChannelClosedError:
                        if not state.closed_notified:
                            state.closed_notified = True
                            proc.on_link_closed(key[1])
                            self.flush(proc)
                            moved = True
                        continue
                    if not data:
                        continue
                    for msg in state.decoder.feed(data):
                        proc.on_message(key[1], msg)
                        self.flush(proc)
                    moved = True

    def tick(self, now: int) -> None:
        self.now = now
        for proc in list(self.procs):
            proc.on_tick(now)
            self.flush(proc)
        self.pump()

    def serve(self, logical_seconds: int, wall_per_tick: float = 1.0,
              stop=None) -> None:
        """Run the loop, mapping one logical second to ``wall_per_tick`` seconds."""
        for t in range(self.now + 1, self.now + logical_seconds + 1):
            deadline = time.monotonic() + wall_per_tick
            self.tick(t)
            while time.monotonic() < deadline:
                self.pump()
                if stop is not None and stop.is_set():
                    return
                time.sleep(min(0.005, wall_per_tick / 10))
            if stop is not None and stop.is_set():
                return


def serve_overlay(topology: OverlayTopology, bind: str = "127.0.0.1"):
    """Build the overlay on one SocketHost with TCP attach points.

    Internal ring and tree links stay in process; agents and session clients
    attach over TCP. Returns (host, handle, endpoints) where endpoints maps
    "@root" and every member node id to the host:port its agent should
    --connect to.
    """
    host = SocketHost()
    handle: OverlayHandle = build_overlay(topology, host)
    endpoints: dict[str, str] = {"@root": host.listen(handle.root, bind)}
    opened: dict[str, str] = {}
    for node in topology.all_nodes():
        proc, _link = handle.attach_point(node)
        if proc.pid not in opened:
            opened[proc.pid] = host.listen(proc, bind)
        endpoints[node] = opened[proc.pid]
    return host, handle, endpoints


class DistributedOverlay:
    """Every infrastructure process on its own host, every link a socket."""

    def __init__(self, hosts: dict[str, SocketHost], cores: dict[str, object],
                 endpoints: dict[str, str]) -> None:
        self.hosts = hosts
        self.cores = cores
        self.endpoints = endpoints
        self._threads: list = []
        self._stop = None

    def serve(self, logical_seconds: int, wall_per_tick: float = 1.0):
        import threading

        self._stop = threading.Event()
        for host in self.hosts.values():
            thread = threading.Thread(
                target=host.serve,
                kwargs=dict(logical_seconds=logical_seconds,
                            wall_per_tick=wall_per_tick, stop=self._stop),
                daemon=True)
            thread.start()
            self._threads.append(thread)
        return self._stop

    def stop(self) -> None:
        if self._stop is not None:
            self._stop.set()
            for thread in self._threads:
                thread.join(timeout=5)


def launch_distributed(topology: OverlayTopology,
                       bind: str = "127.0.0.1") -> DistributedOverlay:
    """Run root, managers, and relays as separate hosts joined only by TCP.

    Ring and tree links bootstrap through the normal attach handshake: each
    process dials its data-direction successor (managers their ring
    successor, relays their tree parent, the root the first manager for the
    multicast direction) and identifies itself with its process role.
    """
    from . import wire as _wire
    from .overlay import ManagerProcess, RelayProcess, RootProcess
    from .transport import transport_connect

    order = list(topology.ring_order)
    hosts: dict[str, SocketHost] = {}
    cores: dict[str, object] = {}
    endpoints: dict[str, str] = {}

    def place(core) -> None:
        host = SocketHost()
        host.add_process(core)
        hosts[core.pid] = host
        cores[core.pid] = core
        endpoints[core.pid] = host.listen(core, bind)

    place(RootProcess("root", topology.root_node, topology))
    for i, domain_id in enumerate(order):
        domain = topology.domain(domain_id)
        place(ManagerProcess(f"mgr.{domain_id}", domain.manager_node, domain_id,
                             domain.lustre_role, up_is_root=(i == len(order) - 1)))
        for pos in domain.internal_positions():
            node = domain.node_at(pos)
            place(RelayProcess(f"rel.{node}", node))

    def dial(core, link: str, target_pid: str, attach: _wire.Attach) -> None:
        channel = transport_connect(endpoints[target_pid], "tcp")
        hosts[core.pid].attach_channel(core, link, channel)
        core.emit(link, attach)
        hosts[core.pid].flush(core)

    root = cores["root"]
    dial(root, "ring_next", f"mgr.{order[0]}",
         _wire.Attach(topology.root_node, "-", "session-root", "-"))
    for i, domain_id in enumerate(order):
        domain = topology.domain(domain_id)
        successor = "root" if i == len(order) - 1 else f"mgr.{order[i + 1]}"
        dial(cores[f"mgr.{domain_id}"], "up", successor,
             _wire.Attach(domain.manager_node, domain_id, "manager", domain.lustre_role))
        for pos in domain.internal_positions():
            node = domain.node_at(pos)
            parent_pos = domain.tree_parent(pos)
            parent_pid = f"mgr.{domain_id}" if parent_pos == 0 \
                else f"rel.{domain.node_at(parent_pos)}"
            dial(cores[f"rel.{node}"], "up", parent_pid,
                 _wire.Attach(node, domain_id, "relay", domain.lustre_role))

    # agents and clients attach where the tree expects them
    endpoints["@root"] = endpoints["root"]
    for node in topology.all_nodes():
        domain = topology.domain_of_node(node)
        pos = domain.member_nodes.index(node) + 1
        if domain.tree_children(pos):
            endpoints[node] = endpoints[f"rel.{node}"]
        else:
            parent_pos = domain.tree_parent(pos)
            parent_pid = f"mgr.{domain.domain_id}" if parent_pos == 0 \
                else f"rel.{domain.node_at(parent_pos)}"
            endpoints[node] = endpoints[parent_pid]
    return DistributedOverlay(hosts, cores, endpoints)
