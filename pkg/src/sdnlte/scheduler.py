"""Per-TTI downlink RB allocation in the style of a channel/QoS-aware scheduler.

Time-domain stage: flows are grouped by head-of-line delay bucket, highest
bucket first, with GBR flows that still have backlog this period ahead of all
NGBR flows. Frequency-domain stage: RBs go to the highest proportional-fair
metric (achievable RB rate over past average throughput) inside the current
group. Fading is flat across RBs within a TTI, so a GBR flow's remaining
demand is granted as one contiguous block; NGBR flows receive single-RB
quanta with a working average updated after every grant, which keeps equal
users alternating instead of starving on ties.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

GBR = "GBR"
NGBR = "NGBR"

FULL_BUFFER_BITS = math.inf


@dataclass
class FlowQueue:
    user: int
    kind: str  # GBR | NGBR
    demand_bps: float = 0.0
    backlog_bits: float = 0.0
    hol_delay_ms: float = 0.0
    past_avg_thr_bps: float = 1.0
    period_served_bits: float = 0.0

    def arrive(self, dt_s: float) -> None:
        """Accumulate source traffic: CBR at the demand rate for GBR flows."""
        if self.kind == GBR and self.demand_bps > 0:
            self.backlog_bits += self.demand_bps * dt_s
            self.hol_delay_ms = 1000.0 * self.backlog_bits / self.demand_bps


@dataclass
class TtiAllocation:
    rb_owner: list[int | None]
    rbs_granted: dict[int, int] = field(default_factory=dict)
    bits_served: dict[int, float] = field(default_factory=dict)

    @property
    def total_rbs(self) -> int:
        return sum(self.rbs_granted.values())


def update_past_avg(prev_avg_bps: float, served_bps: float, alpha: float) -> float:
    """Exponential average of per-TTI throughput."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    return (1.0 - alpha) * prev_avg_bps + alpha * served_bps


def schedule_tti(
    queues: list[FlowQueue],
    rate_per_rb_bps: dict[int, float],
    num_rbs: int,
    tti_s: float,
    *,
    alpha: float = 0.1,
    hol_bucket_ms: float = 10.0,
) -> TtiAllocation:
    """Allocate one TTI's RBs over the cell's flow queues."""
    owner: list[int | None] = [None] * num_rbs
    alloc = TtiAllocation(rb_owner=owner)

    rate = {q.user: rate_per_rb_bps.get(q.user, 0.0) for q in queues}
    active = [q for q in queues if q.backlog_bits > 0 and rate[q.user] > 0]
    gbr = [q for q in active if q.kind == GBR]
    ngbr = [q for q in active if q.kind == NGBR]

    def bucket(q: FlowQueue) -> int:
        return int(q.hol_delay_ms // hol_bucket_ms)

    work_avg = {q.user: max(q.past_avg_thr_bps, 1e-9) for q in active}
    served_tti = {q.user: 0.0 for q in queues}
    rb_next = 0

    def metric(q: FlowQueue) -> float:
        return rate[q.user] / work_avg[q.user]

    def grant(q: FlowQueue, n_rbs: int, bits: float) -> None:
        nonlocal rb_next
        owner[rb_next : rb_next + n_rbs] = [q.user] * n_rbs
        rb_next += n_rbs
        alloc.rbs_granted[q.user] = alloc.rbs_granted.get(q.user, 0) + n_rbs
        alloc.bits_served[q.user] = alloc.bits_served.get(q.user, 0.0) + bits
        served_tti[q.user] += bits
        work_avg[q.user] = update_past_avg(
            max(q.past_avg_thr_bps, 1e-9), served_tti[q.user] / tti_s, alpha
        )
        q.backlog_bits = max(q.backlog_bits - bits, 0.0)
        if q.kind == GBR and q.demand_bps > 0:
            q.hol_delay_ms = 1000.0 * q.backlog_bits / q.demand_bps

    # GBR: each flow takes one block covering its remaining demand, so the
    # per-RB argmax sequence equals the initial metric ordering
    for b in sorted({bucket(q) for q in gbr}, reverse=True):
        group = sorted(
            (q for q in gbr if bucket(q) == b), key=lambda f: (-metric(f), f.user)
        )
        for q in group:
            if rb_next >= num_rbs:
                break
            bpr = rate[q.user] * tti_s
            need = min(int(math.ceil(q.backlog_bits / bpr)), num_rbs - rb_next)
            if need > 0:
                grant(q, need, min(need * bpr, q.backlog_bits))

    # NGBR: one RB at a time; lazily refreshed heap tracks the working average
    for b in sorted({bucket(q) for q in ngbr}, reverse=True):
        heap = [(-metric(q), q.user, q) for q in ngbr if bucket(q) == b]
        heapq.heapify(heap)
        while heap and rb_next < num_rbs:
            neg, uid, q = heapq.heappop(heap)
            current = metric(q)
            if -neg < current - 1e-12 or -neg > current + 1e-12:
                heapq.heappush(heap, (-current, uid, q))
                continue
            bpr = rate[uid] * tti_s
            grant(q, 1, min(bpr, q.backlog_bits))
            if q.backlog_bits > 0:
                heapq.heappush(heap, (-metric(q), uid, q))

    for q in queues:
        q.past_avg_thr_bps = update_past_avg(
            q.past_avg_thr_bps, served_tti.get(q.user, 0.0) / tti_s, alpha
        )
    return alloc
