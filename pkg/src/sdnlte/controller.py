"""Central controller: network statistics database, path selection, backhaul
admission, flow-rule installation, congestion-aware NGBR metering and capacity
notifications to base stations.

The controller is a single logical event handler; controller-to-switch and
controller-to-BS latency is zero, so BS caches refresh at notification time.
Every decision is appended to a structured event log (JSON-serialisable dicts)
which is the audit surface for tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .backhaul import (
    GBR,
    BackhaulConfig,
    BackhaulGraph,
    FlowEntry,
    LinkKey,
    LinkUsage,
    Meter,
    RouteNotFound,
    admit_flow_backhaul,
    apply_meters,
    bottleneck_capacity,
    disjoint_paths,
    ngbr_link_cap_bps,
    release_flow,
    residual_capacity,
    spf_route,
    split_ngbr_meters,
)


@dataclass
class CapacityNotification:
    cell: int
    c_bh_bps: float
    c_residual_bps: float
    epoch: int


@dataclass(frozen=True)
class FlowRule:
    switch: str
    tunnel_id: int  # flow id doubles as the abstract tunnel id
    next_hop: str
    meter_id: str


@dataclass
class NetworkStatsDB:
    flows: dict[int, FlowEntry] = field(default_factory=dict)
    usage: LinkUsage = field(default_factory=LinkUsage)
    cell_capacity: dict[int, tuple[float, float]] = field(default_factory=dict)
    bearer_of_user: dict[int, int] = field(default_factory=dict)
    rule_tables: dict[str, dict[int, FlowRule]] = field(default_factory=dict)
    notification_log: list[CapacityNotification] = field(default_factory=list)


class SdnController:
    """Controller-side procedures of the handover pipeline."""

    def __init__(
        self,
        graph: BackhaulGraph,
        neighbors: dict[int, frozenset[int]],
        cfg: BackhaulConfig,
        event_log: list[dict] | None = None,
    ) -> None:
        self.graph = graph
        self.neighbors = neighbors
        self.cfg = cfg
        self.db = NetworkStatsDB()
        self.db.usage = LinkUsage()
        self.events: list[dict] = event_log if event_log is not None else []
        self.bs_cache: dict[int, CapacityNotification] = {}
        self.split_links: dict[LinkKey, list[Meter]] = {}
        self._clear_streak: dict[LinkKey, int] = {}
        self._next_flow_id = 0
        # static per-cell disjoint-path link sets (the graph never changes)
        self._cell_links: dict[int, set[LinkKey]] = {
            cell: {k for p in disjoint_paths(graph, cell) for k in graph.path_links(p)}
            for cell in graph.cell_attachments
        }
        self.update_and_notify(set(self.graph.links.keys()), epoch=0)

    # -- flow lifecycle -------------------------------------------------------

    def attach(
        self, user: int, cell: int, kind: str, demand_bps: int, app: str, epoch: int
    ) -> bool:
        """Create a bearer for a user at a cell; an infeasible GBR flow is dropped."""
        return self._establish(user, cell, kind, demand_bps, app, epoch, via="attach")

    def on_path_switch_request(
        self,
        user: int,
        source: int,
        target: int,
        kind: str,
        demand_bps: int,
        app: str,
        epoch: int,
    ) -> bool:
        """Re-route a user's bearer after an accepted access-level handover.

        The old path is released first; if no feasible route to the target
        exists the flow is dropped and the user records an outage until a
        retry or another handover succeeds.
        """
        old = self.db.bearer_of_user.get(user)
        if old is not None:
            self._remove_flow(old, epoch)
        return self._establish(
            user, target, kind, demand_bps, app, epoch, via=f"path_switch:{source}->{target}"
        )

    def retry_dropped(
        self, user: int, cell: int, kind: str, demand_bps: int, app: str, epoch: int
    ) -> bool:
        """Re-attempt admission for a previously dropped bearer."""
        if user in self.db.bearer_of_user:
            return True
        return self._establish(user, cell, kind, demand_bps, app, epoch, via="retry")

    def release_user(self, user: int, epoch: int) -> None:
        flow_id = self.db.bearer_of_user.get(user)
        if flow_id is not None:
            self._remove_flow(flow_id, epoch)

    def has_bearer(self, user: int) -> bool:
        return user in self.db.bearer_of_user

    def _establish(
        self, user: int, cell: int, kind: str, demand_bps: int, app: str, epoch: int, via: str
    ) -> bool:
        try:
            path = spf_route(cell, self.graph, self.db.usage, demand_bps, kind, self.cfg)
        except RouteNotFound:
            self.events.append(
                {"t": epoch, "type": "flow_dropped", "user": user, "cell": cell,
                 "kind": kind, "why": "route_not_found", "via": via}
            )
            return False
        flow_id = self._next_flow_id
        self._next_flow_id += 1
        meter_id = f"gbr:{flow_id}" if kind == GBR else "ngbr:aggregate"
        flow = FlowEntry(flow_id, user, kind, path, meter_id, demand_bps, app)
        if not admit_flow_backhaul(flow, self.graph, self.db.usage, self.cfg):
            self.events.append(
                {"t": epoch, "type": "flow_dropped", "user": user, "cell": cell,
                 "kind": kind, "why": "admission_rejected", "via": via}
            )
            return False
        self.db.flows[flow_id] = flow
        self.db.bearer_of_user[user] = flow_id
        self.install_flow_rules(flow)
        self.events.append(
            {"t": epoch, "type": "flow_admitted", "user": user, "cell": cell,
             "kind": kind, "flow": flow_id, "path": list(path), "via": via}
        )
        self.update_and_notify(set(self.graph.path_links(path)), epoch)
        return True

    def _remove_flow(self, flow_id: int, epoch: int) -> None:
        flow = self.db.flows.pop(flow_id)
        release_flow(flow, self.graph, self.db.usage)
        self.db.bearer_of_user.pop(flow.user, None)
        self.uninstall_flow_rules(flow)
        self.events.append(
            {"t": epoch, "type": "flow_removed", "flow": flow_id, "user": flow.user}
        )
        self.update_and_notify(set(self.graph.path_links(flow.path)), epoch)

    # -- flow rules -------------------------------------------------------------

    def install_flow_rules(self, flow: FlowEntry) -> list[FlowRule]:
        """One abstract match/action rule per switch on the path; idempotent."""
        rules = []
        hops = list(zip(flow.path, flow.path[1:] + (flow.path[-1],)))
        for here, nxt in hops:
            rule = FlowRule(switch=here, tunnel_id=flow.flow_id, next_hop=nxt,
                            meter_id=flow.meter)
            self.db.rule_tables.setdefault(here, {})[flow.flow_id] = rule
            rules.append(rule)
        return rules

    def uninstall_flow_rules(self, flow: FlowEntry) -> list[FlowRule]:
        removed = []
        for switch in flow.path:
            rule = self.db.rule_tables.get(switch, {}).pop(flow.flow_id, None)
            if rule is not None:
                removed.append(rule)
        return removed

    # -- capacity accounting ------------------------------------------------------

    def update_and_notify(self, touched: set[LinkKey], epoch: int) -> list[CapacityNotification]:
        """Recompute capacities of cells sharing any touched link; notify each
        affected cell and all of its neighbours."""
        affected = {c for c, links in self._cell_links.items() if links & touched}
        notify = set(affected)
        for cell in affected:
            notify |= set(self.neighbors.get(cell, frozenset()))
        out = []
        for cell in sorted(notify):
            c_bh = bottleneck_capacity(cell, self.graph)
            c_res = residual_capacity(cell, self.graph, self.db.usage, self.cfg)
            self.db.cell_capacity[cell] = (c_bh, c_res)
            note = CapacityNotification(cell, c_bh, c_res, epoch)
            self.bs_cache[cell] = note
            self.db.notification_log.append(note)
            out.append(note)
        if out:
            self.events.append(
                {"t": epoch, "type": "capacity_notification", "cells": [n.cell for n in out]}
            )
        return out

    # -- congestion-aware NGBR metering ---------------------------------------------

    def detect_congestion(self, threshold_bps: float | None = None) -> set[LinkKey]:
        """Links whose per-NGBR-flow share fell below the configured floor."""
        thr = self.cfg.congestion_threshold_bps if threshold_bps is None else threshold_bps
        congested = set()
        for key, flows in self.db.usage.ngbr_flows.items():
            n = len(flows)
            if n == 0:
                continue
            cap = ngbr_link_cap_bps(self.graph.links[key], self.cfg)
            if cap / max(1, n) < thr:
                congested.add(key)
        return congested

    def period_tick(self, epoch: int) -> None:
        """Per-period housekeeping: activate or clear class-split meters."""
        congested = self.detect_congestion()
        for key in sorted(congested):
            self._clear_streak[key] = 0
            if key in self.split_links:
                continue
            classes = self._classes_on_link(key)
            if not classes:
                continue
            cap = int(ngbr_link_cap_bps(self.graph.links[key], self.cfg))
            meters = split_ngbr_meters(key, classes, cap)
            self.split_links[key] = meters
            self.events.append(
                {"t": epoch, "type": "meter_split", "link": list(key),
                 "rates": {m.meter_id: m.rate_bps for m in meters}}
            )
        for key in list(self.split_links):
            if key in congested:
                continue
            streak = self._clear_streak.get(key, 0) + 1
            self._clear_streak[key] = streak
            if streak >= self.cfg.split_clear_periods:
                del self.split_links[key]
                del self._clear_streak[key]
                self.events.append({"t": epoch, "type": "meter_merge", "link": list(key)})

    def _classes_on_link(self, key: LinkKey) -> list[tuple[str, float]]:
        apps = sorted(
            {
                self.db.flows[f].app
                for f in self.db.usage.ngbr_flows.get(key, set())
                if f in self.db.flows
            }
        )
        ordered = [name for name, _ in self.cfg.qos_weights if name in apps]
        ordered += [a for a in apps if a not in ordered]
        return [(a, self.cfg.weight_of(a)) for a in ordered]

    # -- metering ----------------------------------------------------------------------

    def meter_flows(self, offered_bps: dict[int, float]) -> dict[int, float]:
        """End-to-end served rate per flow for one LB period.

        Each flow is clamped by its dedicated meter (GBR) and by its share of
        every NGBR class/aggregate meter along its path; the end-to-end rate
        is the minimum across links.
        """
        served = {fid: offered_bps.get(fid, 0.0) for fid in self.db.flows}
        gbr_flows = [f for f in self.db.flows.values() if f.kind == GBR]
        meters = {
            f.meter: Meter(f.meter, min(f.demand_bps, self.cfg.gbr_meter_bps),
                           "gbr_dedicated", {f.flow_id})
            for f in gbr_flows
        }
        for fid, rate in apply_meters(gbr_flows, meters, offered_bps).items():
            served[fid] = min(served[fid], rate)

        for key in sorted(self.db.usage.ngbr_flows):
            members = [
                self.db.flows[f]
                for f in sorted(self.db.usage.ngbr_flows[key])
                if f in self.db.flows
            ]
            if not members:
                continue
            link_meters: dict[str, Meter] = {}
            if key in self.split_links:
                split = self.split_links[key]
                known = {m.meter_id.rsplit(":", 1)[-1] for m in split}
                for meter in split:
                    cls = meter.meter_id.rsplit(":", 1)[-1]
                    meter.member_flows = {f.flow_id for f in members if f.app == cls}
                    link_meters[meter.meter_id] = meter
                # flows of an app that joined after the split fold into the
                # lowest-priority class so class caps keep summing to the share
                strays = [f.flow_id for f in members if f.app not in known]
                if strays and split:
                    split[-1].member_flows.update(strays)
            else:
                cap = int(ngbr_link_cap_bps(self.graph.links[key], self.cfg))
                link_meters["aggregate"] = Meter(
                    f"{key[0]}-{key[1]}:ngbr", cap, "ngbr_aggregate",
                    {f.flow_id for f in members},
                )
            for fid, rate in apply_meters(members, link_meters, offered_bps).items():
                served[fid] = min(served[fid], rate)

        for key in self.graph.links:
            self.db.usage.served_gbr_bps[key] = 0.0
            self.db.usage.served_ngbr_bps[key] = 0.0
        for fid, rate in served.items():
            flow = self.db.flows.get(fid)
            if flow is None:
                continue
            for key in self.graph.path_links(flow.path):
                slot = "served_gbr_bps" if flow.kind == GBR else "served_ngbr_bps"
                getattr(self.db.usage, slot)[key] += rate
        return served
