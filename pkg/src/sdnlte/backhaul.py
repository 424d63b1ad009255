"""SDN backhaul model: switch graph, bottleneck/residual capacity, SPF routing,
flow admission and GBR/NGBR metering.

Link capacities are raw bits/s; the downlink share and the GBR/NGBR class split
are applied on top of them. GBR reservations are tracked in integer bits/s so a
reserve/release round trip restores usage exactly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

GBR = "GBR"
NGBR = "NGBR"

LinkKey = tuple[str, str]


def link_key(a: str, b: str) -> LinkKey:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity_bps: float
    dl_share: float = 0.5

    def __post_init__(self) -> None:
        if self.capacity_bps <= 0:
            raise ValueError("link capacity must be positive")
        if not 0.0 < self.dl_share < 1.0:
            raise ValueError("dl_share must lie in (0, 1)")

    @property
    def key(self) -> LinkKey:
        return link_key(self.a, self.b)

    @property
    def dl_capacity_bps(self) -> float:
        return self.capacity_bps * self.dl_share


@dataclass(frozen=True)
class BackhaulConfig:
    dl_share: float = 0.5  # fraction of raw link capacity carrying DL traffic
    gbr_share: float = 0.6  # fraction of the DL share reserved for GBR flows
    gbr_meter_bps: int = 250_000  # dedicated meter cap per GBR flow
    congestion_threshold_bps: float = 500_000.0  # per-NGBR-flow bandwidth floor
    split_clear_periods: int = 3  # congestion-free periods before re-merging
    qos_weights: tuple[tuple[str, float], ...] = (("HTTP", 5.0), ("FTP", 1.0))

    @property
    def ngbr_share(self) -> float:
        return 1.0 - self.gbr_share

    def weight_of(self, app: str) -> float:
        for name, q in self.qos_weights:
            if name == app:
                return q
        return 1.0


@dataclass
class BackhaulGraph:
    switches: list[str]
    links: dict[LinkKey, Link]
    cell_attachments: dict[int, str]
    pgw: str
    _adj: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        adj: dict[str, list[str]] = {s: [] for s in self.switches}
        for lk in self.links.values():
            adj[lk.a].append(lk.b)
            adj[lk.b].append(lk.a)
        self._adj = {s: sorted(ns) for s, ns in adj.items()}

    def neighbors(self, switch: str) -> list[str]:
        return self._adj[switch]

    def link(self, a: str, b: str) -> Link:
        return self.links[link_key(a, b)]

    def path_links(self, path: tuple[str, ...]) -> list[LinkKey]:
        return [link_key(a, b) for a, b in zip(path, path[1:])]


@dataclass
class FlowEntry:
    flow_id: int
    user: int
    kind: str  # GBR | NGBR
    path: tuple[str, ...]  # pgw ... serving cell's switch
    meter: str
    demand_bps: int
    app: str = "none"  # NGBR traffic class (HTTP/FTP)


@dataclass
class Meter:
    meter_id: str
    rate_bps: int
    kind: str  # gbr_dedicated | ngbr_aggregate | ngbr_class
    member_flows: set[int] = field(default_factory=set)


@dataclass
class LinkUsage:
    """Per-link accounting. GBR reservations are integers (exact round trips)."""

    used_gbr_bps: dict[LinkKey, int] = field(default_factory=dict)
    ngbr_flows: dict[LinkKey, set[int]] = field(default_factory=dict)
    served_gbr_bps: dict[LinkKey, float] = field(default_factory=dict)
    served_ngbr_bps: dict[LinkKey, float] = field(default_factory=dict)

    def gbr_used(self, key: LinkKey) -> int:
        return self.used_gbr_bps.get(key, 0)

    def reserve_gbr(self, key: LinkKey, demand_bps: int) -> None:
        self.used_gbr_bps[key] = self.gbr_used(key) + demand_bps

    def release_gbr(self, key: LinkKey, demand_bps: int) -> None:
        left = self.gbr_used(key) - demand_bps
        if left < 0:
            raise ValueError(f"releasing more than reserved on {key}")
        self.used_gbr_bps[key] = left


def gbr_link_cap_bps(link: Link, cfg: BackhaulConfig) -> float:
    return link.dl_capacity_bps * cfg.gbr_share


def ngbr_link_cap_bps(link: Link, cfg: BackhaulConfig) -> float:
    return link.dl_capacity_bps * cfg.ngbr_share


def disjoint_paths(graph: BackhaulGraph, cell: int) -> list[tuple[str, ...]]:
    """Greedy link-disjoint path extraction from the PGW to the cell's switch.

    Shortest paths are peeled off first; scenarios 1-2 yield a single path and
    the scenario-3 rings yield two.
    """
    target = graph.cell_attachments[cell]
    removed: set[LinkKey] = set()
    paths: list[tuple[str, ...]] = []
    while True:
        path = _shortest_path(graph, graph.pgw, target, banned=removed)
        if path is None:
            return paths
        paths.append(path)
        removed.update(graph.path_links(path))


def _shortest_path(
    graph: BackhaulGraph,
    src: str,
    dst: str,
    banned: set[LinkKey] | None = None,
    usable: set[LinkKey] | None = None,
) -> tuple[str, ...] | None:
    """Min-hop path, ties broken by lexicographically smallest switch sequence."""
    banned = banned or set()
    heap: list[tuple[int, tuple[str, ...]]] = [(0, (src,))]
    best: dict[str, tuple[int, tuple[str, ...]]] = {src: (0, (src,))}
    while heap:
        hops, path = heapq.heappop(heap)
        node = path[-1]
        if best.get(node, (math.inf, ()))[0:2] != (hops, path):
            continue
        if node == dst:
            return path
        for nxt in graph.neighbors(node):
            if nxt in path:
                continue
            key = link_key(node, nxt)
            if key in banned:
                continue
            if usable is not None and key not in usable:
                continue
            cand = (hops + 1, path + (nxt,))
            if nxt not in best or cand < best[nxt]:
                best[nxt] = cand
                heapq.heappush(heap, cand)
    return None


def bottleneck_capacity(cell: int, graph: BackhaulGraph) -> float:
    """Sum over link-disjoint paths of the path's minimum raw link capacity."""
    total = 0.0
    for path in disjoint_paths(graph, cell):
        caps = [graph.links[k].capacity_bps for k in graph.path_links(path)]
        if caps:
            total += min(caps)
    return total


def class_bottleneck_bps(
    cell: int, graph: BackhaulGraph, cfg: BackhaulConfig, kind: str = GBR
) -> float:
    """Bottleneck capacity of one traffic class's DL share toward a cell."""
    share = cfg.gbr_share if kind == GBR else cfg.ngbr_share
    total = 0.0
    for path in disjoint_paths(graph, cell):
        caps = [graph.links[k].dl_capacity_bps * share for k in graph.path_links(path)]
        if caps:
            total += min(caps)
    return total


def dl_bottleneck_bps(cell: int, graph: BackhaulGraph) -> float:
    """Bottleneck DL capacity (both classes) toward a cell."""
    total = 0.0
    for path in disjoint_paths(graph, cell):
        caps = [graph.links[k].dl_capacity_bps for k in graph.path_links(path)]
        if caps:
            total += min(caps)
    return total


def residual_capacity(
    cell: int, graph: BackhaulGraph, usage: LinkUsage, cfg: BackhaulConfig
) -> float:
    """GBR-class residual bits/s: per disjoint path, the minimum link headroom."""
    total = 0.0
    for path in disjoint_paths(graph, cell):
        keys = graph.path_links(path)
        if not keys:
            continue
        headroom = min(
            gbr_link_cap_bps(graph.links[k], cfg) - usage.gbr_used(k) for k in keys
        )
        total += max(headroom, 0.0)
    return total


class RouteNotFound(Exception):
    pass


def spf_route(
    cell: int,
    graph: BackhaulGraph,
    usage: LinkUsage,
    demand_bps: int,
    kind: str,
    cfg: BackhaulConfig,
) -> tuple[str, ...]:
    """Shortest available PGW-to-cell path.

    For GBR flows, links whose class headroom cannot carry the demand are
    removed before the search; NGBR flows are never reservation-filtered.
    """
    if kind == GBR:
        usable = {
            k
            for k, lk in graph.links.items()
            if gbr_link_cap_bps(lk, cfg) - usage.gbr_used(k) >= demand_bps
        }
    else:
        usable = set(graph.links.keys())
    path = _shortest_path(graph, graph.pgw, graph.cell_attachments[cell], usable=usable)
    if path is None:
        raise RouteNotFound(f"no feasible path to cell {cell} for {kind} demand {demand_bps}")
    return path


def admit_flow_backhaul(
    flow: FlowEntry, graph: BackhaulGraph, usage: LinkUsage, cfg: BackhaulConfig
) -> bool:
    """Admit and reserve a routed flow.

    GBR flows reserve their demand on every path link if the class headroom
    allows it; NGBR flows always join the aggregate share.
    """
    keys = graph.path_links(flow.path)
    if flow.kind == GBR:
        for k in keys:
            if gbr_link_cap_bps(graph.links[k], cfg) - usage.gbr_used(k) < flow.demand_bps:
                return False
        for k in keys:
            usage.reserve_gbr(k, flow.demand_bps)
        return True
    for k in keys:
        usage.ngbr_flows.setdefault(k, set()).add(flow.flow_id)
    return True


def release_flow(flow: FlowEntry, graph: BackhaulGraph, usage: LinkUsage) -> None:
    keys = graph.path_links(flow.path)
    if flow.kind == GBR:
        for k in keys:
            usage.release_gbr(k, flow.demand_bps)
    else:
        for k in keys:
            usage.ngbr_flows.get(k, set()).discard(flow.flow_id)


def split_ngbr_meters(
    link: LinkKey, flow_classes: list[tuple[str, float]], ngbr_cap_bps: int
) -> list[Meter]:
    """Split the aggregate NGBR cap into per-class meters by QoS weight.

    Integer rates are produced with the largest-remainder method so that the
    class rates sum to the cap exactly and weight ordering is preserved.
    """
    if not flow_classes:
        return []
    total_q = sum(q for _, q in flow_classes)
    raw = [ngbr_cap_bps * q / total_q for _, q in flow_classes]
    floors = [int(math.floor(r)) for r in raw]
    leftover = ngbr_cap_bps - sum(floors)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - floors[i]), i))
    for i in order[:leftover]:
        floors[i] += 1
    return [
        Meter(meter_id=f"{link[0]}-{link[1]}:ngbr:{name}", rate_bps=rate, kind="ngbr_class")
        for (name, _), rate in zip(flow_classes, floors)
    ]


def apply_meters(
    flows: list[FlowEntry],
    meters: dict[str, Meter],
    offered_bps: dict[int, float],
) -> dict[int, float]:
    """Served rate per flow after metering.

    Dedicated meters clamp each flow; aggregate/class meters share their rate
    proportionally to the offered load when oversubscribed.
    """
    served: dict[int, float] = {}
    for meter in meters.values():
        members = [f for f in flows if f.flow_id in meter.member_flows]
        if meter.kind == "gbr_dedicated":
            for f in members:
                served[f.flow_id] = min(offered_bps.get(f.flow_id, 0.0), meter.rate_bps)
            continue
        total = sum(offered_bps.get(f.flow_id, 0.0) for f in members)
        if total <= meter.rate_bps:
            for f in members:
                served[f.flow_id] = offered_bps.get(f.flow_id, 0.0)
        else:
            scale = meter.rate_bps / total
            for f in members:
                served[f.flow_id] = offered_bps.get(f.flow_id, 0.0) * scale
    return served
