"""Handover policies: gain-based (joint access+backhaul), QoS-aware fairness,
Max-RSRQ (A2A4), the target-load estimator, the GBR admission test and the
exhaustive association oracle.

All decisions are pure functions of a per-period snapshot bundled into a
HandoverContext; the sim engine applies accepted decisions in user-id order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .load import (
    UNSERVABLE,
    backhaul_rbs,
    jain_fairness,
    multiuser_diversity_gain,
    used_rbs_gbr,
)
from .radio import db_to_linear

# antenna subcarrier utilisation under full load; applied to both sides of the
# NGBR comparison (cancels) and kept so logged decision terms match reports
SUBCARRIER_UTIL = 5.0 / 6.0


@dataclass(frozen=True)
class HandoverConfig:
    policy: str = "proposed"  # proposed | qos_aware | max_rsrq
    # anti-ping-pong margin on the handover gain; per-user objective gains in
    # networks of ~100 users sit below 1%, so the margin must be well under that
    delta_gbr: float = 0.001
    hysteresis_db: float = 1.0
    rsrq_thresh_db: float = 25.0
    lb_period_s: float = 1.0

    def __post_init__(self) -> None:
        if self.policy not in ("proposed", "qos_aware", "max_rsrq"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.delta_gbr < 0:
            raise ValueError("delta_gbr must be non-negative")
        if self.lb_period_s <= 0:
            raise ValueError("lb_period_s must be positive")


@dataclass
class MeasurementReport:
    user: int
    serving_rsrq: float
    neighbor_rsrq: dict[int, float]
    report_kind: str  # A2 | A4


@dataclass
class HandoverDecision:
    user: int
    source: int
    target: int | None
    gain: float
    reason: str  # accepted | gain_below_threshold | admission_rejected | no_candidate
    est_used_rbs: float = 0.0  # estimated RB usage at the target when accepted


@dataclass
class HandoverContext:
    """Everything a serving BS sees for one user at decision time."""

    user: int
    source: int
    is_gbr: bool
    report: MeasurementReport
    cell_loads: dict[int, float]  # rho_GBR per cell, current period
    rho_user_source: float
    w_used_source: float  # fractional RBs at the source
    eta_source: float
    neighbors: frozenset[int]
    num_rbs: int
    rb_bandwidth_hz: float
    gbr_cap_bps: dict[int, float]  # cached GBR-class DL capacity per cell
    dl_cap_bps: dict[int, float]  # cached total DL capacity per cell
    gbr_used_total: dict[int, float]  # w_GBR,used per cell
    ngbr_counts: dict[int, int]


def estimate_target_load(
    w_used_source: float,
    rsrq_source_db: float,
    rsrq_target_db: float,
    w_net_target: float,
) -> tuple[float, float]:
    """Estimate (used RBs, load) of a user at a candidate cell.

    The source scales its own RB usage by the linear RSRQ ratio of the two
    cells, then divides by the target's net RBs.
    """
    rsrq_tgt = db_to_linear(rsrq_target_db)
    rsrq_src = db_to_linear(rsrq_source_db)
    if rsrq_tgt <= 0.0:
        return UNSERVABLE, UNSERVABLE
    est_used = w_used_source * rsrq_src / rsrq_tgt
    if w_net_target <= 0.0:
        return est_used, UNSERVABLE
    return est_used, est_used / w_net_target


def objective(cell_loads: Mapping[int, float] | list[float]) -> float:
    """The GBR association objective: fairness times spare average capacity."""
    loads = list(cell_loads.values()) if isinstance(cell_loads, Mapping) else list(cell_loads)
    if not loads or not all(math.isfinite(x) for x in loads):
        return -math.inf
    rho_avg = sum(loads) / len(loads)
    return jain_fairness(loads) * (1.0 - rho_avg)


def gbr_handover_gain(
    cell_loads: Mapping[int, float],
    source: int,
    target: int,
    rho_user_source: float,
    rho_user_target: float,
) -> float | None:
    """Closed-form ratio objective(after handover) / objective(before).

    Returns None when the algebra degenerates (no load anywhere, loads at or
    above the cell count, unservable users).
    """
    if source == target:
        raise ValueError("source and target must differ")
    loads = dict(cell_loads)
    m = len(loads)
    values = list(loads.values())
    if not all(math.isfinite(v) for v in values + [rho_user_source, rho_user_target]):
        return None
    x = sum(values)
    y = sum(v * v for v in values)
    delta = rho_user_target - rho_user_source
    if x <= 0.0 or x >= m or x + delta >= m or x + delta < 0.0:
        return None
    rho_i = loads[source]
    rho_c = loads[target]
    z = (
        y
        - rho_i**2
        - rho_c**2
        + (rho_i - rho_user_source) ** 2
        + (rho_c + rho_user_target) ** 2
    )
    denom = z * x**2 * (m - x)
    if denom <= 0.0:
        return None
    return y * (x + delta) ** 2 * (m - x - delta) / denom


def admit_gbr(w_ac: float, w_bh: float, gbr_used_total: float, required_rbs: float) -> bool:
    """Access-level admission: spare net RBs must cover the newcomer."""
    return min(w_ac, w_bh) - gbr_used_total >= required_rbs


def _estimated_eta(rsrq_db: float) -> float:
    """Spectral efficiency estimate from the RSRQ indicator (linear SINR proxy)."""
    return math.log2(1.0 + db_to_linear(rsrq_db))


def _target_net_rbs(ctx: HandoverContext, cell: int, cap_bps: float) -> tuple[float, float]:
    rsrq_t = ctx.report.neighbor_rsrq[cell]
    eta_t = _estimated_eta(rsrq_t)
    w_bh = backhaul_rbs(cap_bps, eta_t, ctx.rb_bandwidth_hz)
    return min(ctx.num_rbs, w_bh), eta_t


def decide_gbr(ctx: HandoverContext, cfg: HandoverConfig) -> HandoverDecision:
    """Gain-maximising GBR handover with the admission gate at the target."""
    best: tuple[float, int, float, float] | None = None  # gain, cell, est_used, w_net
    any_candidate = False
    for c in sorted(ctx.neighbors):
        if c not in ctx.report.neighbor_rsrq:
            continue
        any_candidate = True
        w_net_t, _ = _target_net_rbs(ctx, c, ctx.gbr_cap_bps.get(c, 0.0))
        est_used, rho_tgt = estimate_target_load(
            ctx.w_used_source, ctx.report.serving_rsrq, ctx.report.neighbor_rsrq[c], w_net_t
        )
        if rho_tgt == UNSERVABLE:
            continue
        gain = gbr_handover_gain(ctx.cell_loads, ctx.source, c, ctx.rho_user_source, rho_tgt)
        if gain is None:
            continue
        if gain > 1.0 + cfg.delta_gbr and (best is None or gain > best[0]):
            best = (gain, c, est_used, w_net_t)
    if best is None:
        reason = "gain_below_threshold" if any_candidate else "no_candidate"
        return HandoverDecision(ctx.user, ctx.source, None, 0.0, reason)
    gain, target, est_used, w_net_t = best
    required = math.ceil(est_used)
    if not admit_gbr(ctx.num_rbs, w_net_t, ctx.gbr_used_total.get(target, 0.0), required):
        return HandoverDecision(ctx.user, ctx.source, None, gain, "admission_rejected")
    return HandoverDecision(ctx.user, ctx.source, target, gain, "accepted", est_used)


def decide_ngbr(ctx: HandoverContext, cfg: HandoverConfig) -> HandoverDecision:
    """NGBR handover: move to the neighbour offering the best shared-rate term.

    Both sides carry the subcarrier-utilisation factor; a lone NGBR user at the
    source compares against its full current residual. Ties keep the user put.
    """

    def residual_rbs(cell: int, eta: float) -> float:
        w_bh = backhaul_rbs(ctx.dl_cap_bps.get(cell, 0.0), eta, ctx.rb_bandwidth_hz)
        w_net = min(ctx.num_rbs, w_bh)
        return max(w_net - ctx.gbr_used_total.get(cell, 0.0), 0.0)

    n_i = max(ctx.ngbr_counts.get(ctx.source, 1), 1)
    n_left = max(n_i - 1, 1)
    rhs = (
        db_to_linear(ctx.report.serving_rsrq)
        * (residual_rbs(ctx.source, ctx.eta_source) / n_left)
        * multiuser_diversity_gain(n_left)
        * SUBCARRIER_UTIL
    )
    best: tuple[float, int] | None = None
    for c in sorted(ctx.neighbors):
        if c not in ctx.report.neighbor_rsrq:
            continue
        rsrq_c = ctx.report.neighbor_rsrq[c]
        n_k = ctx.ngbr_counts.get(c, 0) + 1
        lhs = (
            db_to_linear(rsrq_c)
            * (residual_rbs(c, _estimated_eta(rsrq_c)) / n_k)
            * multiuser_diversity_gain(n_k)
            * SUBCARRIER_UTIL
        )
        if best is None or lhs > best[0]:
            best = (lhs, c)
    if best is None:
        return HandoverDecision(ctx.user, ctx.source, None, 0.0, "no_candidate")
    lhs, target = best
    if lhs > rhs:
        ratio = lhs / rhs if rhs > 0 else math.inf
        return HandoverDecision(ctx.user, ctx.source, target, ratio, "accepted")
    return HandoverDecision(ctx.user, ctx.source, None, lhs / rhs if rhs > 0 else 0.0,
                            "gain_below_threshold")


def decide_max_rsrq(ctx: HandoverContext, cfg: HandoverConfig) -> HandoverDecision:
    """A2A4 baseline: hysteresis-guarded handover to the best-RSRQ neighbour."""
    if not ctx.report.neighbor_rsrq:
        return HandoverDecision(ctx.user, ctx.source, None, 0.0, "no_candidate")
    target = min(ctx.report.neighbor_rsrq, key=lambda c: (-ctx.report.neighbor_rsrq[c], c))
    rsrq_k = ctx.report.neighbor_rsrq[target]
    rsrq_i = ctx.report.serving_rsrq
    cond = (rsrq_k > rsrq_i + cfg.hysteresis_db) and (
        rsrq_k > cfg.rsrq_thresh_db or rsrq_i < cfg.rsrq_thresh_db
    )
    if cond:
        return HandoverDecision(ctx.user, ctx.source, target, rsrq_k - rsrq_i, "accepted")
    return HandoverDecision(ctx.user, ctx.source, None, rsrq_k - rsrq_i, "gain_below_threshold")


def decide_qos_aware(ctx: HandoverContext, cfg: HandoverConfig) -> HandoverDecision:
    """Fairness-only baseline: maximise the post-handover Jain index for GBR.

    The source scheme pairs its fairness handover with admission control, so
    the accepted target must also pass the spare-resource test.
    """
    if not ctx.is_gbr:
        return decide_max_rsrq(ctx, cfg)
    loads = dict(ctx.cell_loads)
    if not all(math.isfinite(v) for v in loads.values()):
        return HandoverDecision(ctx.user, ctx.source, None, 0.0, "no_candidate")
    xi_old = jain_fairness(list(loads.values()))
    best: tuple[float, int, float, float] | None = None
    for c in sorted(ctx.neighbors):
        if c not in ctx.report.neighbor_rsrq:
            continue
        w_net_t, _ = _target_net_rbs(ctx, c, ctx.gbr_cap_bps.get(c, 0.0))
        est_used, rho_tgt = estimate_target_load(
            ctx.w_used_source, ctx.report.serving_rsrq, ctx.report.neighbor_rsrq[c], w_net_t
        )
        if rho_tgt == UNSERVABLE:
            continue
        after = dict(loads)
        after[ctx.source] = loads[ctx.source] - ctx.rho_user_source
        after[c] = loads[c] + rho_tgt
        xi_new = jain_fairness(list(after.values()))
        if best is None or xi_new > best[0]:
            best = (xi_new, c, est_used, w_net_t)
    if best is None:
        return HandoverDecision(ctx.user, ctx.source, None, 0.0, "no_candidate")
    xi_new, target, est_used, w_net_t = best
    ratio = xi_new / max(xi_old, 1e-300)
    if xi_new <= xi_old:
        return HandoverDecision(ctx.user, ctx.source, None, ratio, "gain_below_threshold")
    if not admit_gbr(ctx.num_rbs, w_net_t, ctx.gbr_used_total.get(target, 0.0),
                     math.ceil(est_used)):
        return HandoverDecision(ctx.user, ctx.source, None, ratio, "admission_rejected")
    return HandoverDecision(ctx.user, ctx.source, target, ratio, "accepted", est_used)


def decide(ctx: HandoverContext, cfg: HandoverConfig) -> HandoverDecision:
    """Dispatch on the configured policy (NGBR users fall back per policy rules)."""
    if cfg.policy == "max_rsrq":
        return decide_max_rsrq(ctx, cfg)
    if cfg.policy == "qos_aware":
        return decide_qos_aware(ctx, cfg)
    if ctx.is_gbr:
        return decide_gbr(ctx, cfg)
    return decide_ngbr(ctx, cfg)


class OracleBudgetExceeded(Exception):
    pass


@dataclass
class OracleSnapshot:
    """Frozen per-period channel/capacity view used by the exhaustive search."""

    eta: np.ndarray  # [cells, users]
    demand_bps: np.ndarray  # [users]
    is_gbr: np.ndarray  # [users] bool
    num_rbs: int
    rb_bandwidth_hz: float
    gbr_cap_bps: np.ndarray  # [cells]
    dl_cap_bps: np.ndarray  # [cells]

    @property
    def num_cells(self) -> int:
        return self.eta.shape[0]

    @property
    def num_users(self) -> int:
        return self.eta.shape[1]


@dataclass
class AssociationResult:
    assoc: dict[int, int]
    objective: float
    feasible: bool = True


def _candidate_loads(snap: OracleSnapshot) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-(cell, user) fractional used RBs, load and infeasibility mask."""
    m, n = snap.eta.shape
    used = np.zeros((m, n))
    rho = np.zeros((m, n))
    bad = np.zeros((m, n), dtype=bool)
    full_bw = snap.num_rbs * snap.rb_bandwidth_hz
    for c in range(m):
        for u in range(n):
            if not snap.is_gbr[u]:
                continue
            w_used = used_rbs_gbr(
                float(snap.demand_bps[u]),
                float(snap.eta[c, u]),
                float(snap.gbr_cap_bps[c]),
                snap.rb_bandwidth_hz,
                fractional=True,
            )
            w_bh = backhaul_rbs(float(snap.gbr_cap_bps[c]), float(snap.eta[c, u]),
                                snap.rb_bandwidth_hz)
            w_net = min(snap.num_rbs, w_bh)
            deliverable = min(full_bw * snap.eta[c, u], snap.gbr_cap_bps[c])
            if w_used == UNSERVABLE or w_net <= 0 or deliverable < snap.demand_bps[u]:
                bad[c, u] = True
                continue
            used[c, u] = w_used
            rho[c, u] = w_used / w_net
    return used, rho, bad


def global_oracle(snap: OracleSnapshot, budget: int = 2_000_000) -> AssociationResult:
    """Exhaustive GBR association search maximising fairness * spare capacity.

    Assignments violating the per-user rate constraint or a cell's access or
    backhaul budget are discarded (when nothing is feasible the unconstrained
    maximiser is returned and flagged). NGBR users are then placed greedily by
    their shared-rate utility. Ties resolve to the lexicographically smallest
    assignment over user ids.
    """
    m = snap.num_cells
    gbr_users = [int(u) for u in np.flatnonzero(snap.is_gbr)]
    n = len(gbr_users)
    if n == 0:
        assoc = {}
        result = AssociationResult(assoc, 0.0)
        _assign_ngbr_greedy(snap, result)
        result.objective = 1.0  # no GBR load: balanced and empty
        return result
    if m**n > budget:
        raise OracleBudgetExceeded(f"{m}**{n} assignments exceed budget {budget}")

    used, rho, bad = _candidate_loads(snap)
    k = m**n
    powers = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    assign = (np.arange(k, dtype=np.int64)[:, None] // powers[None, :]) % m  # big-endian

    cols = np.array(gbr_users)
    feasible = ~bad[assign, cols[None, :]].any(axis=1)
    loads = np.zeros((k,))
    sumsq = np.zeros((k,))
    for c in range(m):
        mask = assign == c
        cell_load = mask @ rho[c, cols]
        cell_used = mask @ used[c, cols]
        cell_demand = mask @ snap.demand_bps[cols].astype(float)
        feasible &= cell_used <= snap.num_rbs + 1e-9
        feasible &= cell_demand <= snap.gbr_cap_bps[c] + 1e-9
        loads += cell_load
        sumsq += cell_load**2
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.where(loads > 0, loads**2 / (m * sumsq), 1.0)
    obj = xi * (1.0 - loads / m)

    if feasible.any():
        masked = np.where(feasible, obj, -np.inf)
        best = int(masked.argmax())
        best_feasible = True
    else:
        best = int(obj.argmax())
        best_feasible = False
    assoc = {int(u): int(c) for u, c in zip(gbr_users, assign[best])}
    result = AssociationResult(assoc, float(obj[best]), feasible=best_feasible)
    _assign_ngbr_greedy(snap, result)
    return result


def _assign_ngbr_greedy(snap: OracleSnapshot, result: AssociationResult) -> None:
    """Place NGBR users one by one on the cell maximising their shared rate."""
    m = snap.num_cells
    gbr_used_total = np.zeros(m)
    for u, c in result.assoc.items():
        w = used_rbs_gbr(
            float(snap.demand_bps[u]), float(snap.eta[c, u]), float(snap.gbr_cap_bps[c]),
            snap.rb_bandwidth_hz, fractional=True,
        )
        if w != UNSERVABLE:
            gbr_used_total[c] += w
    counts = np.zeros(m, dtype=int)
    for u in (int(v) for v in np.flatnonzero(~snap.is_gbr)):
        best_rate, best_cell = -1.0, 0
        for c in range(m):
            w_bh = backhaul_rbs(float(snap.dl_cap_bps[c]), float(snap.eta[c, u]),
                                snap.rb_bandwidth_hz)
            w_net = min(snap.num_rbs, w_bh)
            residual = max(w_net - gbr_used_total[c], 0.0)
            n_after = counts[c] + 1
            rate = (
                snap.eta[c, u]
                * snap.rb_bandwidth_hz
                * math.floor(residual / n_after)
                * multiuser_diversity_gain(n_after)
            )
            if rate > best_rate:
                best_rate, best_cell = rate, c
        result.assoc[u] = best_cell
        counts[best_cell] += 1
