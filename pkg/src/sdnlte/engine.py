"""Simulation engine: drives TTIs and LB periods, couples mobility, fading,
scheduling, backhaul metering and per-period handover decisions, and derives
the throughput metrics.

End-to-end user throughput per LB period is min(access-scheduled rate,
backhaul-metered rate); the first period is treated as warm-up and excluded
from derived metrics. Everything is deterministic given the master seed, which
is split into placement, mobility and fading substreams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import handover as ho
from .backhaul import GBR, NGBR
from .config import SimConfig
from .controller import SdnController
from .load import UNSERVABLE, LoadLedger, build_report
from .radio import fading_block, path_gain_matrix, rsrq_db_from_powers
from .scheduler import FULL_BUFFER_BITS, FlowQueue, schedule_tti
from .topology import ScenarioSpec, build_scenario, place_users, step_mobility

MOBILITY_STEP_S = 0.1
_DOMAIN_FADING = 2


@dataclass(frozen=True)
class SimClock:
    tti_duration_s: float = 0.001
    lb_period_s: float = 1.0
    total_duration_s: float = 30.0

    def __post_init__(self) -> None:
        ratio = self.lb_period_s / self.tti_duration_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("lb_period_s must be a multiple of tti_duration_s")

    @property
    def ttis_per_period(self) -> int:
        return int(round(self.lb_period_s / self.tti_duration_s))

    @property
    def num_periods(self) -> int:
        return int(round(self.total_duration_s / self.lb_period_s))


@dataclass
class MetricsRecord:
    """Raw per-user/per-period served bits plus derived aggregates."""

    bits: np.ndarray  # [periods, users] end-to-end DL bits
    kinds: list[str]
    apps: list[str]
    lb_period_s: float
    warmup_periods: int
    outage_threshold_bps: float = 90_000.0
    edge_fraction: float = 0.4

    def measured_periods(self) -> int:
        return max(self.bits.shape[0] - self.warmup_periods, 1)

    def per_user_rate_bps(self) -> np.ndarray:
        span = self.measured_periods() * self.lb_period_s
        return self.bits[self.warmup_periods :].sum(axis=0) / span

    def gbr_rates_bps(self) -> np.ndarray:
        rates = self.per_user_rate_bps()
        mask = np.array([k == GBR for k in self.kinds])
        return rates[mask]

    def avg_gbr_rate_bps(self) -> float:
        rates = self.gbr_rates_bps()
        return float(rates.mean()) if rates.size else 0.0

    def edge_aggregate_bps(self) -> float:
        rates = np.sort(self.gbr_rates_bps())
        edge_n = int(math.floor(self.edge_fraction * rates.size))
        return float(rates[:edge_n].sum()) if edge_n else 0.0

    def outage_fraction(self) -> float:
        rates = self.gbr_rates_bps()
        if rates.size == 0:
            return 0.0
        return float((rates < self.outage_threshold_bps).mean())

    def system_throughput_bps(self) -> float:
        return float(self.per_user_rate_bps().sum())

    def ngbr_class_rates_bps(self) -> dict[str, float]:
        rates = self.per_user_rate_bps()
        out: dict[str, float] = {}
        for app in sorted({a for a in self.apps if a != "none"}):
            mask = np.array([a == app for a in self.apps])
            out[app] = float(rates[mask].sum())
        return out

    def cdf_points(self) -> list[tuple[float, float]]:
        rates = np.sort(self.gbr_rates_bps())
        n = rates.size
        return [(float(r), (i + 1) / n) for i, r in enumerate(rates)]

    def summary(self) -> dict:
        return {
            "avg_gbr_rate_bps": self.avg_gbr_rate_bps(),
            "edge_aggregate_bps": self.edge_aggregate_bps(),
            "outage_fraction": self.outage_fraction(),
            "system_throughput_bps": self.system_throughput_bps(),
            "ngbr_class_rates_bps": self.ngbr_class_rates_bps(),
        }


def compute_metrics(
    bits: np.ndarray,
    kinds: list[str],
    apps: list[str],
    lb_period_s: float,
    warmup_periods: int,
) -> MetricsRecord:
    return MetricsRecord(bits, kinds, apps, lb_period_s, warmup_periods)


@dataclass
class RunResult:
    config: SimConfig
    metrics: MetricsRecord
    events: list[dict]
    assoc_history: list[np.ndarray]
    oracle_gap: list[tuple[float, float]] = field(default_factory=list)
    # (oracle objective, policy objective) per period when dominance is checked


class _Sim:
    """Mutable simulation state for one run."""

    def __init__(self, cfg: SimConfig, association_mode: str = "policy") -> None:
        self.cfg = cfg
        self.mode = association_mode  # policy | oracle
        self.clock = SimClock(
            lb_period_s=cfg.handover.lb_period_s, total_duration_s=cfg.duration_s
        )
        spec = ScenarioSpec(
            scenario=cfg.scenario,
            num_users=cfg.num_users,
            distribution=cfg.distribution,
            doa=cfg.doa,
            gbr_fraction=cfg.gbr_fraction,
            http_fraction=cfg.http_fraction,
            gbr_demand_bps=cfg.gbr_demand_bps,
            seed=cfg.seed,
        )
        self.state = build_scenario(spec)
        self.state.users = place_users(spec, self.state.cells, self.state.overloaded_cell)
        self.users = self.state.users
        self.n_users = len(self.users)
        self.n_cells = len(self.state.cells)
        self.cell_pos = np.array([c.position for c in self.state.cells])
        self.neighbors = {c.id: c.neighbors for c in self.state.cells}
        self.mobility_seed = cfg.seed
        self.fading_seed = (cfg.seed << 8) ^ _DOMAIN_FADING

        self.events: list[dict] = []
        self.controller = SdnController(
            self.state.graph, self.neighbors, cfg.backhaul, self.events
        )
        self.demand = np.array([u.gbr_demand_bps for u in self.users], dtype=float)
        self.is_gbr = np.array([u.kind == GBR for u in self.users])
        self.apps = [u.ngbr_app for u in self.users]

        self._refresh_gains()
        self.assoc = self._initial_association()
        self.state.assoc = {u.id: int(self.assoc[u.id]) for u in self.users}
        self.queues = [
            FlowQueue(
                user=u.id,
                kind=u.kind,
                demand_bps=float(u.gbr_demand_bps),
                backlog_bits=FULL_BUFFER_BITS if u.kind == NGBR else 0.0,
            )
            for u in self.users
        ]
        for u in self.users:
            self.controller.attach(
                u.id, int(self.assoc[u.id]), u.kind, u.gbr_demand_bps, u.ngbr_app, epoch=0
            )

        periods = self.clock.num_periods
        self.bits = np.zeros((periods, self.n_users))
        self.assoc_history: list[np.ndarray] = []
        self.oracle_gap: list[tuple[float, float]] = []
        self.ho_counts = {"accepted": 0, "evaluated": 0}

    # -- channel -------------------------------------------------------------

    def _refresh_gains(self) -> None:
        user_pos = np.array([u.position for u in self.users])
        gains = path_gain_matrix(self.cell_pos, user_pos, self.cfg.radio)
        self.rx_power = self.cfg.radio.tx_power_w * gains  # before fading

    def _initial_association(self) -> np.ndarray:
        # strongest path gain at t=0 (max-RSRQ attach, fading averaged out)
        return np.argmax(self.rx_power, axis=0)

    # -- capacities as seen by the base stations --------------------------------

    def _cached_caps(self) -> tuple[dict[int, float], dict[int, float]]:
        bh_cfg = self.cfg.backhaul
        gbr_caps, dl_caps = {}, {}
        for c in range(self.n_cells):
            note = self.controller.bs_cache.get(c)
            raw = note.c_bh_bps if note else 0.0
            dl_caps[c] = raw * bh_cfg.dl_share
            gbr_caps[c] = raw * bh_cfg.dl_share * bh_cfg.gbr_share
        return gbr_caps, dl_caps

    # -- one LB period -------------------------------------------------------------

    def run_period(self, period: int) -> None:
        cfg = self.cfg
        clock = self.clock
        T = clock.ttis_per_period
        noise = cfg.radio.noise_per_rb_w
        rb_bw = cfg.radio.rb_bandwidth_hz
        tti_s = clock.tti_duration_s
        mob_ttis = int(round(MOBILITY_STEP_S / tti_s))

        fading = np.empty((T, self.n_users))
        base_tti = period * T
        for u in range(self.n_users):
            fading[:, u] = fading_block(self.fading_seed, u, base_tti, T)

        sinr_sum = np.zeros((self.n_cells, self.n_users))
        rx_sum = np.zeros((self.n_cells, self.n_users))
        total_sum = np.zeros(self.n_users)
        access_bits = np.zeros(self.n_users)

        queues_by_cell: list[list[FlowQueue]] = [[] for _ in range(self.n_cells)]
        for q in self.queues:
            queues_by_cell[int(self.assoc[q.user])].append(q)
        # bearer states only change at period boundaries, so these lists hold
        gbr_active = [
            q for q in self.queues
            if q.kind == GBR and self.controller.has_bearer(q.user)
        ]
        ngbr_queues = [q for q in self.queues if q.kind == NGBR]
        user_idx = np.arange(self.n_users)

        for t in range(T):
            abs_tti = base_tti + t
            if abs_tti > 0 and abs_tti % mob_ttis == 0:
                now = abs_tti * tti_s
                step_mobility(
                    self.users, MOBILITY_STEP_S, self.mobility_seed, self.state.bounds,
                    start_time=now - MOBILITY_STEP_S,
                )
                self._refresh_gains()
            rx = self.rx_power * fading[t][None, :]
            total = rx.sum(axis=0)
            sinr = rx / (total - rx + noise)
            sinr_sum += sinr
            rx_sum += rx
            total_sum += total

            serving_sinr = sinr[self.assoc, user_idx]
            rate_per_rb = rb_bw * np.log2(1.0 + serving_sinr)
            rate_list = rate_per_rb.tolist()

            for q in gbr_active:
                q.arrive(tti_s)
            for c in range(self.n_cells):
                members = queues_by_cell[c]
                if not members:
                    continue
                rates = {q.user: rate_list[q.user] for q in members}
                alloc = schedule_tti(
                    members, rates, cfg.radio.num_rbs, tti_s,
                    alpha=cfg.sched_alpha, hol_bucket_ms=cfg.hol_bucket_ms,
                )
                for uid, bits in alloc.bits_served.items():
                    access_bits[uid] += bits
            for q in ngbr_queues:
                served_now = access_bits[q.user]
                q.hol_delay_ms = 0.0 if served_now > q.period_served_bits else (
                    q.hol_delay_ms + tti_s * 1000.0
                )
                q.period_served_bits = served_now

        # ---- backhaul metering: end-to-end served = min(access, meters) ----
        offered = {}
        for u in self.users:
            fid = self.controller.db.bearer_of_user.get(u.id)
            if fid is not None:
                offered[fid] = access_bits[u.id] / clock.lb_period_s
        served = self.controller.meter_flows(offered)
        for u in self.users:
            fid = self.controller.db.bearer_of_user.get(u.id)
            if fid is None:
                continue
            self.bits[period, u.id] = min(
                access_bits[u.id], served.get(fid, 0.0) * clock.lb_period_s
            )

        # ---- frozen per-period snapshot --------------------------------------
        ttis = float(T)
        avg_sinr = sinr_sum / ttis
        eta = np.log2(1.0 + avg_sinr)
        rsrq = np.empty((self.n_cells, self.n_users))
        for c in range(self.n_cells):
            for u in range(self.n_users):
                rsrq[c, u] = rsrq_db_from_powers(
                    float(rx_sum[c, u]),
                    float(total_sum[u] - rx_sum[c, u]),
                    noise * ttis,
                    cfg.radio,
                )
        gbr_caps, dl_caps = self._cached_caps()
        ledger = LoadLedger(
            num_rbs=cfg.radio.num_rbs,
            rb_bandwidth_hz=rb_bw,
            eta=eta,
            demand_bps=self.demand,
            is_gbr=self.is_gbr,
            assoc=self.assoc.copy(),
            gbr_cap_bps=np.array([gbr_caps[c] for c in range(self.n_cells)]),
            dl_cap_bps=np.array([dl_caps[c] for c in range(self.n_cells)]),
        )
        report = build_report(ledger)
        self.assoc_history.append(self.assoc.copy())
        self._last_ledger = ledger

        if self.mode == "oracle":
            self._apply_oracle(ledger, period)
        else:
            self._handover_phase(ledger, report, rsrq, gbr_caps, dl_caps, period)

        # re-admission attempts for dropped bearers at the current cell
        for u in self.users:
            if not self.controller.has_bearer(u.id):
                self.controller.retry_dropped(
                    u.id, int(self.assoc[u.id]), u.kind, u.gbr_demand_bps, u.ngbr_app,
                    epoch=period,
                )
        self.controller.period_tick(period)
        for q in self.queues:
            q.period_served_bits = 0.0
            if q.kind == GBR:
                cap = 2.0 * q.demand_bps * clock.lb_period_s
                q.backlog_bits = min(q.backlog_bits, cap)
            else:
                q.backlog_bits = FULL_BUFFER_BITS

    # -- handover -------------------------------------------------------------------

    def _handover_phase(
        self,
        ledger: LoadLedger,
        report,
        rsrq: np.ndarray,
        gbr_caps: dict[int, float],
        dl_caps: dict[int, float],
        period: int,
    ) -> None:
        hcfg = self.cfg.handover
        cell_loads = dict(report.rho_cell)
        # loads stay frozen for the whole decision round; admission totals and
        # NGBR populations update serially so accepted moves bound later ones
        gbr_used_total = {c: ledger.cell_used_rbs(c) for c in range(self.n_cells)}
        ngbr_counts = ledger.ngbr_counts()
        thresh = hcfg.rsrq_thresh_db

        for u in self.users:
            uid = u.id
            src = int(self.assoc[uid])
            serving = float(rsrq[src, uid])
            neigh = {c: float(rsrq[c, uid]) for c in sorted(self.neighbors[src])}
            a2 = serving < thresh
            a4 = any(v > thresh for v in neigh.values())
            if hcfg.policy == "max_rsrq":
                triggered = a2 or a4
            else:
                triggered = a2
            if not triggered:
                continue
            mreport = ho.MeasurementReport(
                user=uid,
                serving_rsrq=serving,
                neighbor_rsrq=neigh,
                report_kind="A2" if a2 else "A4",
            )
            ctx = ho.HandoverContext(
                user=uid,
                source=src,
                is_gbr=bool(self.is_gbr[uid]),
                report=mreport,
                cell_loads=cell_loads,
                rho_user_source=ledger.user_rho(src, uid) if self.is_gbr[uid] else 0.0,
                w_used_source=float(ledger.used_rbs[src, uid]),
                eta_source=float(ledger.eta[src, uid]),
                neighbors=self.neighbors[src],
                num_rbs=self.cfg.radio.num_rbs,
                rb_bandwidth_hz=self.cfg.radio.rb_bandwidth_hz,
                gbr_cap_bps=gbr_caps,
                dl_cap_bps=dl_caps,
                gbr_used_total=gbr_used_total,
                ngbr_counts=ngbr_counts,
            )
            decision = ho.decide(ctx, hcfg)
            self.ho_counts["evaluated"] += 1
            self.events.append(
                {"t": period, "type": "handover_decision", "user": uid, "source": src,
                 "target": decision.target, "gain": decision.gain,
                 "reason": decision.reason}
            )
            if decision.reason != "accepted" or decision.target is None:
                continue
            self.ho_counts["accepted"] += 1
            dst = int(decision.target)
            if self.is_gbr[uid]:
                gbr_used_total[src] -= float(ledger.used_rbs[src, uid])
                gbr_used_total[dst] += decision.est_used_rbs
            else:
                ngbr_counts[src] = max(ngbr_counts[src] - 1, 0)
                ngbr_counts[dst] = ngbr_counts.get(dst, 0) + 1
            self._move_user(uid, src, dst, period)

    def _move_user(self, uid: int, src: int, dst: int, period: int) -> None:
        self.assoc[uid] = dst
        self.state.assoc[uid] = dst
        u = self.users[uid]
        self.controller.on_path_switch_request(
            uid, src, dst, u.kind, u.gbr_demand_bps, u.ngbr_app, epoch=period
        )

    def _oracle_feasible(self) -> bool:
        n_gbr = int(self.is_gbr.sum())
        return self.n_cells**n_gbr <= self.cfg.oracle_budget

    def oracle_snapshot(self, ledger: LoadLedger) -> ho.OracleSnapshot:
        return ho.OracleSnapshot(
            eta=ledger.eta,
            demand_bps=self.demand,
            is_gbr=self.is_gbr,
            num_rbs=self.cfg.radio.num_rbs,
            rb_bandwidth_hz=self.cfg.radio.rb_bandwidth_hz,
            gbr_cap_bps=ledger.gbr_cap_bps,
            dl_cap_bps=ledger.dl_cap_bps,
        )

    def _apply_oracle(self, ledger: LoadLedger, period: int) -> None:
        result = ho.global_oracle(self.oracle_snapshot(ledger), self.cfg.oracle_budget)
        for uid in sorted(result.assoc):
            dst = result.assoc[uid]
            src = int(self.assoc[uid])
            if src != dst:
                self._move_user(uid, src, dst, period)
        self.events.append(
            {"t": period, "type": "oracle_association", "objective": result.objective,
             "feasible": result.feasible}
        )

    def objective_of_assoc(self, ledger: LoadLedger, assoc: np.ndarray) -> float:
        loads = []
        for c in range(self.n_cells):
            total = 0.0
            for uid in np.flatnonzero((assoc == c) & self.is_gbr):
                rho = ledger.user_rho(c, int(uid))
                if rho == UNSERVABLE:
                    return -math.inf
                total += rho
            loads.append(total)
        return ho.objective(loads)


def run(
    cfg: SimConfig, *, association_mode: str = "policy", oracle_check: bool = False
) -> RunResult:
    """Execute one simulation and return metrics, events and history.

    With oracle_check=True (small instances only) the exhaustive-search
    objective is computed on every period's frozen snapshot and compared with
    the objective of the association the policy actually produced.
    """
    sim = _Sim(cfg, association_mode)
    clock = sim.clock
    for period in range(clock.num_periods):
        sim.run_period(period)
        if oracle_check and sim.mode == "policy":
            ledger = sim._last_ledger
            result = ho.global_oracle(sim.oracle_snapshot(ledger), cfg.oracle_budget)
            policy_obj = sim.objective_of_assoc(ledger, sim.assoc)
            sim.oracle_gap.append((result.objective, policy_obj))
    metrics = compute_metrics(
        sim.bits,
        [u.kind for u in sim.users],
        sim.apps,
        clock.lb_period_s,
        cfg.warmup_periods,
    )
    return RunResult(
        config=cfg,
        metrics=metrics,
        events=sim.events,
        assoc_history=sim.assoc_history,
        oracle_gap=sim.oracle_gap,
    )


def compare_local_global(cfg: SimConfig, seeds: list[int] | None = None) -> dict:
    """Average GBR throughput of the distributed policy over the oracle's.

    Runs matched pairs (same placement, mobility and fading) under the
    proposed policy and under per-period oracle association, checks objective
    dominance on every policy snapshot, and returns the seed-averaged ratio.
    """
    seeds = seeds if seeds is not None else [cfg.seed]
    ratios, dominance = [], []
    for seed in seeds:
        point = cfg.replaced(seed=seed, policy="proposed")
        res_a = run(point, oracle_check=True)
        res_b = run(point, association_mode="oracle")
        thr_a = res_a.metrics.avg_gbr_rate_bps()
        thr_b = res_b.metrics.avg_gbr_rate_bps()
        ratios.append(thr_a / thr_b if thr_b > 0 else 1.0)
        dominance.extend(
            oracle_obj + 1e-12 >= policy_obj for oracle_obj, policy_obj in res_a.oracle_gap
        )
    return {
        "ratios": ratios,
        "mean_ratio": float(np.mean(ratios)) if ratios else 1.0,
        "dominance_checks": len(dominance),
        "dominance_ok": all(dominance),
    }
