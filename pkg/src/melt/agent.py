"""Monitoring agents: periodic sampling, rate derivation, job tagging.

One agent runs per Lustre client, server, or router node. It attaches as a
leaf of its domain tree, learns stream specs via multicast, decides per
stream which metrics it produces, and emits one pre-aggregated Data record
per stream round, so leaves and internal tree processes speak the same
format.

Counter keys are (metric, fs, ost, job, client) tuples with "" for absent
dimensions; an empty fs means "not filesystem-specific" and passes any
filesystem filter. Stats files are complete snapshots re-read every tick;
their ``event`` lines are cumulative occurrence tallies, so an unchanged
file contributes zero new events.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

from . import catalog, wire
from .aggregates import body_to_text, fold_samples
from .overlay import ProcessCore
from .streams import AgentIdentity, StreamSpec, group_key, parse_target, produced_metrics
from .topology import OverlayTopology

CounterKey = tuple[str, str, str, str, str]  # metric, fs, ost, job, client


class SourceError(RuntimeError):
    pass


class StatsParseError(SourceError):
    pass


@dataclass
class SourceSnapshot:
    """Cumulative view of one node's counters at a point in time."""

    ts: int = 0
    counters: dict[CounterKey, float] = field(default_factory=dict)
    gauges: dict[tuple[str, str], float] = field(default_factory=dict)
    counted: dict[tuple[str, str], float] = field(default_factory=dict)


class IdleSource:
    """A source with nothing to report; useful for liveness smoke tests."""

    def snapshot(self, now: int) -> SourceSnapshot:
        return SourceSnapshot(ts=now)


def read_stats_file(path: str) -> SourceSnapshot:
    """Parse one stats snapshot file; any malformed line rejects the file.

    Grammar: header ``ts <unix-seconds>``; counter lines
    ``<metric> <fs>[:<ost>] <cumulative-value>``; gauge lines
    ``gauge <metric> <value>``; event lines ``event <op> <path> [<client>]``.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    snap = SourceSnapshot()
    saw_ts = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if not saw_ts:
            if parts[0] != "ts" or len(parts) != 2 or not parts[1].isdigit():
                raise StatsParseError(f"{path}:{lineno}: expected 'ts <unix-seconds>' header")
            snap.ts = int(parts[1])
            saw_ts = True
            continue
        if parts[0] == "gauge":
            if len(parts) != 3:
                raise StatsParseError(f"{path}:{lineno}: gauge line needs metric and value")
            try:
                snap.gauges[(parts[1], "")] = float(parts[2])
            except ValueError:
                raise StatsParseError(f"{path}:{lineno}: bad gauge value {parts[2]!r}") from None
        elif parts[0] == "event":
            if len(parts) not in (3, 4):
                raise StatsParseError(f"{path}:{lineno}: event line needs op and path")
            op, pathname = parts[1], parts[2]
            snap.counted[("op", op)] = snap.counted.get(("op", op), 0.0) + 1
            snap.counted[("path", pathname)] = snap.counted.get(("path", pathname), 0.0) + 1
            if len(parts) == 4:
                snap.counted[("client", parts[3])] = snap.counted.get(("client", parts[3]), 0.0) + 1
        else:
            if len(parts) != 3:
                raise StatsParseError(f"{path}:{lineno}: counter line needs metric, location, value")
            metric, loc = parts[0], parts[1]
            fs, _, ost = loc.partition(":")
            key = (metric, fs, ost, "", "")
            if key in snap.counters:
                raise StatsParseError(f"{path}:{lineno}: duplicate counter for {metric} {loc}")
            try:
                snap.counters[key] = float(parts[2])
            except ValueError:
                raise StatsParseError(f"{path}:{lineno}: bad counter value {parts[2]!r}") from None
    if not saw_ts:
        raise StatsParseError(f"{path}: missing 'ts' header")
    return snap


class StatsFileSource:
    """Re-reads a complete snapshot file on every tick."""

    def __init__(self, path: str) -> None:
        self.path = path

    def snapshot(self, now: int) -> SourceSnapshot:
        try:
            return read_stats_file(self.path)
        except OSError as exc:
            raise SourceError(f"cannot read {self.path}: {exc}") from exc


def rate_from_counters(prev: float, cur: float, dt: float) -> float:
    """(cur - prev) / dt for monotone counters; regression raises."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if cur < prev:
        raise SourceError(f"counter regression {cur} < {prev}")
    return (cur - prev) / dt


@dataclass
class AgentConfig:
    node_id: str
    domain_id: str
    lustre_role: str
    filesystems: tuple[str, ...] = ()
    osts: tuple[str, ...] = ()
    class_intervals: dict[str, int] = field(default_factory=lambda: dict(catalog.CLASS_INTERVALS))

    def __post_init__(self) -> None:
        if any(v < 1 for v in self.class_intervals.values()):
            raise ValueError("default intervals must be >= 1 second")

    @classmethod
    def from_topology(cls, topology: OverlayTopology, node_id: str) -> "AgentConfig":
        domain = topology.domain_of_node(node_id)
        return cls(node_id=node_id, domain_id=domain.domain_id,
                   lustre_role=domain.lustre_role, filesystems=domain.filesystems,
                   osts=domain.osts_of(node_id))


@dataclass
class _StreamProduction:
    metrics: tuple[str, ...]
    prev: SourceSnapshot
    prev_t: int


class AgentCore(ProcessCore):
    kind = "agent"

    def __init__(self, config: AgentConfig, source,
                 topology: OverlayTopology | None = None) -> None:
        super().__init__(f"agent.{config.node_id}", config.node_id)
        self.config = config
        self.source = source
        self.identity = AgentIdentity(config.node_id, config.lustre_role, config.filesystems)
        self.ost_server = topology.ost_to_server() if topology else {}
        self.attached = False
        self.clock = 0
        self.specs: dict[int, StreamSpec] = {}
        self.production: dict[int, _StreamProduction] = {}
        self.overrides: dict[int, dict[str, int]] = {}
        self.jobmap_epoch = 0
        self.my_job = ""
        self.health_skips = 0
        self.reset_flags: list[tuple[str, str]] = []

    # --- overlay plumbing ------------------------------------------------------

    def start(self) -> None:
        self.emit("up", wire.Attach(self.config.node_id, self.config.domain_id,
                                    "agent", self.config.lustre_role))

    def send_detach(self) -> None:
        self.emit("up", wire.Detach(self.config.node_id))

    def on_message(self, link: str, msg: wire.Message) -> None:
        if isinstance(msg, wire.AttachAck):
            self.attached = True
        elif isinstance(msg, wire.CreateStream):
            self.learn_stream(msg.spec)
        elif isinstance(msg, wire.SetRate):
            self.apply_rate(msg)
        elif isinstance(msg, wire.JobMapUpdate):
            self.apply_job_map(msg)
        elif isinstance(msg, (wire.SubscribeAck, wire.Error)):
            pass
        else:
            self.note("agent-unexpected", self.pid, type(msg).__name__)

    def learn_stream(self, spec: StreamSpec) -> None:
        if spec.stream_id in self.specs:
            return
        self.specs[spec.stream_id] = spec
        metrics = produced_metrics(spec, self.identity)
        if not metrics:
            return
        try:
            baseline = self.source.snapshot(self.clock)
        except SourceError as exc:
            self.note("source-failure", self.pid, str(exc))
            baseline = SourceSnapshot(ts=self.clock)
        self.production[spec.stream_id] = _StreamProduction(metrics, baseline, self.clock)
        self.emit("up", wire.Subscribe(spec.stream_id, "agent-producer"))

    def apply_rate(self, msg: wire.SetRate) -> None:
        if msg.stream_id not in self.specs:
            return
        per_stream = self.overrides.setdefault(msg.stream_id, {})
        for metric in msg.metric_names:
            if msg.interval_secs == 0:
                per_stream.pop(metric, None)
            else:
                per_stream[metric] = msg.interval_secs
        if not per_stream:
            self.overrides.pop(msg.stream_id, None)

    def apply_job_map(self, msg: wire.JobMapUpdate) -> None:
        if msg.epoch <= self.jobmap_epoch:
            return
        self.jobmap_epoch = msg.epoch
        self.my_job = ""
        for job_id, nodes in msg.entries:
            if self.config.node_id in nodes:
                self.my_job = job_id
                break

    # --- sampling intervals ------------------------------------------------------

    def stream_interval(self, stream_id: int) -> int:
        values = [self.specs[stream_id].interval_secs]
        values.extend(self.overrides.get(stream_id, {}).values())
        return min(values)

    def effective_interval(self, metric: str) -> int:
        values = [self.config.class_intervals[catalog.metric(metric).metric_class]]
        for sid, prod in self.production.items():
            if metric in prod.metrics:
                values.append(self.stream_interval(sid))
        return min(values)

    # --- the sampling tick ---------------------------------------------------------

    def on_tick(self, now: int) -> None:
        self.clock = now
        if not self.attached:
            return
        due = [sid for sid in sorted(self.production)
               if now > 0 and now % self.stream_interval(sid) == 0]
        if not due:
            return
        try:
            snap = self.source.snapshot(now)
        except SourceError as exc:
            self.health_skips += 1
            self.note("source-failure", self.pid, str(exc))
            return
        for sid in due:
            self.emit_round(sid, now, snap)

    def emit_round(self, sid: int, now: int, snap: SourceSnapshot) -> None:
        spec = self.specs[sid]
        prod = self.production[sid]
        window = now - prod.prev_t
        contributions = self.build_contributions(sid, snap, prod.prev, window)
        prod.prev = snap
        prod.prev_t = now
        body = fold_samples(contributions, spec.aggregation, spec.hist_edges)
        for group, metric, value, weight in contributions:
            self.note("sample", self.config.node_id, sid, now, metric, group, value, weight)
        self.emit("up", wire.Data(sid, now, window, 1, 1, body_to_text(body)))

    # --- contribution building ------------------------------------------------------

    def _group(self, spec: StreamSpec, key: CounterKey) -> str | None:
        _metric, _fs, ost, job, client = key
        role = self.config.lustre_role
        return group_key(
            spec.group_by,
            job_id=job or (self.my_job if role == "client" else "") or None,
            client_id=client or (self.config.node_id if role == "client" else "") or None,
            ost_id=ost or None,
            server_id=self.config.node_id if role in ("oss", "mds") else None,
            node_id=self.config.node_id,
            ost_server=self.ost_server,
        )

    def _key_matches(self, key: CounterKey, target) -> bool:
        _metric, fs, _ost, job, _client = key
        if target.kind == "fs" and target.name is not None:
            if fs and fs != target.name:
                return False
        if target.kind == "job" and self.config.lustre_role != "client":
            if job != target.name:
                return False
        return True

    def _deltas(self, raw: str, snap: SourceSnapshot, prev: SourceSnapshot,
                target) -> list[tuple[CounterKey, float]]:
        out = []
        for key in sorted(k for k in snap.counters if k[0] == raw):
            if not self._key_matches(key, target):
                continue
            before = prev.counters.get(key, 0.0)
            cur = snap.counters[key]
            if cur < before:
                self.reset_flags.append((raw, key[1]))
                self.note("counter-reset", self.pid, raw, key[1])
                continue
            delta = cur - before
            if delta != 0:
                out.append((key, delta))
        return out

    def build_contributions(self, sid: int, snap: SourceSnapshot,
                            prev: SourceSnapshot, window: int) -> list[tuple[str, str, float, float]]:
        """(group, metric, value, weight) tuples for one stream round."""
        spec = self.specs[sid]
        target = parse_target(spec.target)
        role = self.config.lustre_role
        if target.kind == "job" and role == "client" and self.my_job != target.name:
            return []
        if target.kind == "fs" and target.name is None and role == "client" \
                and not self.config.filesystems:
            return []

        out: list[tuple[str, str, float, float]] = []
        for metric in self.production[sid].metrics:
            mdef = catalog.metric(metric)

            if mdef.metric_class in catalog.COUNTED_CLASSES:
                for (cls, key), cur in sorted(snap.counted.items()):
                    if cls != mdef.metric_class:
                        continue
                    delta = cur - prev.counted.get((cls, key), 0.0)
                    if delta > 0:
                        out.append((key, metric, delta, 1.0))
                continue

            if metric == "IO_CLNT_NUM":
                active: dict[str, float] = {}
                for raw in ("IO_RD_BYTES", "IO_WR_BYTES"):
                    for key, delta in self._deltas(raw, snap, prev, target):
                        group = self._group(spec, key)
                        if group is not None:
                            active[group] = active.get(group, 0.0) + delta
                for group in sorted(g for g, d in active.items() if d > 0):
                    out.append((group, metric, 1.0, 1.0))
                continue

            if metric in catalog.AVG_SOURCES:
                num_raw, den_raw = catalog.AVG_SOURCES[metric]
                nums: dict[str, float] = {}
                dens: dict[str, float] = {}
                for key, delta in self._deltas(num_raw, snap, prev, target):
                    group = self._group(spec, key)
                    if group is not None:
                        nums[group] = nums.get(group, 0.0) + delta
                for key, delta in self._deltas(den_raw, snap, prev, target):
                    group = self._group(spec, key)
                    if group is not None:
                        dens[group] = dens.get(group, 0.0) + delta
                for group in sorted(dens):
                    if dens[group] > 0:
                        out.append((group, metric, nums.get(group, 0.0) / dens[group], dens[group]))
                continue

            if mdef.kind == "rate":
                raw = catalog.RATE_TO_RAW[metric]
                sums: dict[str, float] = {}
                for key, delta in self._deltas(raw, snap, prev, target):
                    group = self._group(spec, key)
                    if group is not None:
                        sums[group] = sums.get(group, 0.0) + delta
                for group in sorted(sums):
                    out.append((group, metric, sums[group] / window, 1.0))
                continue

            # plain gauges: node loads, dirty bytes, lock counts
            for (name, fs), value in sorted(snap.gauges.items()):
                if name != metric:
                    continue
                key = (metric, fs, "", "", "")
                if not self._key_matches(key, target):
                    continue
                if mdef.unit == "percent" and not 0.0 <= value <= 100.0:
                    self.note("gauge-out-of-range", self.pid, metric, value)
                    continue
                group = self._group(spec, key)
                if group is not None:
                    out.append((group, metric, value, 1.0))
        return out

    def collect_node_load(self, snap: SourceSnapshot) -> list[tuple[str, float]]:
        """Validated node-load gauges from one snapshot."""
        out = []
        for name in ("LOAD_CPU_PCT", "LOAD_MEM_PCT"):
            value = snap.gauges.get((name, ""))
            if value is None:
                continue
            if not 0.0 <= value <= 100.0:
                self.note("gauge-out-of-range", self.pid, name, value)
                continue
            out.append((name, value))
        return out


def main(argv: list[str] | None = None) -> int:
    """Socket-mode agent entry point."""
    from .topology import load_topology
    from .transport import transport_connect
    from .wire import FrameDecoder

    args = sys.argv[1:] if argv is None else argv
    flags: dict[str, str] = {}
    for arg in args:
        if not arg.startswith("--") or "=" not in arg:
            print(f"meltagent: bad argument {arg!r}", file=sys.stderr)
            return 1
        key, _, value = arg[2:].partition("=")
        flags[key] = value
    for needed in ("node", "domain", "role", "connect"):
        if needed not in flags:
            print(f"meltagent: --{needed}=... is required", file=sys.stderr)
            return 1

    topology = load_topology(flags["config"]) if "config" in flags else None
    if topology is not None and topology.has_node(flags["node"]):
        config = AgentConfig.from_topology(topology, flags["node"])
    else:
        config = AgentConfig(flags["node"], flags["domain"], flags["role"])

    source_spec = flags.get("source", "synthetic:0")
    if source_spec.startswith("stats:"):
        source = StatsFileSource(source_spec[len("stats:"):])
    elif source_spec.startswith("synthetic:"):
        source = IdleSource()
    else:
        print(f"meltagent: bad --source {source_spec!r}", file=sys.stderr)
        return 1

    agent = AgentCore(config, source, topology)
    try:
        channel = transport_connect(flags["connect"], "tcp")
    except OSError as exc:
        print(f"meltagent: {exc}", file=sys.stderr)
        return 2

    decoder = FrameDecoder()
    agent.start()
    clock = 0
    try:
        while True:
            for link, msg in agent.outbox:
                channel.send(wire.encode_message(msg))
            agent.outbox.clear()
            agent.notes.clear()
            data = channel.try_recv()
            for msg in decoder.feed(data):
                agent.on_message("up", msg)
            time.sleep(1.0)
            clock += 1
            agent.on_tick(clock)
    except KeyboardInterrupt:
        agent.send_detach()
        for link, msg in agent.outbox:
            channel.send(wire.encode_message(msg))
        channel.close()
        return 0
    except OSError as exc:
        print(f"meltagent: connection lost: {exc}", file=sys.stderr)
        return 2
