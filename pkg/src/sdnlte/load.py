"""Resource-usage and load algebra for GBR/NGBR traffic.

All RB quantities live on the cell's RB scale (w_ac equals the number of RBs,
100 by default). Used-RB values are kept fractional; the ceiling/floor
operators are applied exactly where the model prescribes them: when converting
backhaul bits/s into RB equivalents and when sharing residual RBs between NGBR
users. An unservable user carries an infinite load sentinel that orders above
every finite load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNSERVABLE = math.inf

GBR = "GBR"
NGBR = "NGBR"


@dataclass
class AssociationMatrix:
    """User -> serving cell map; every user is associated to exactly one cell."""

    assoc: dict[int, int]

    def cell_of(self, user: int) -> int:
        return self.assoc[user]

    def users_of(self, cell: int) -> list[int]:
        return sorted(u for u, c in self.assoc.items() if c == cell)


@dataclass
class LoadLedger:
    """Per-(cell, user) resource bookkeeping for one LB period.

    Arrays are indexed [cell, user]. `used_rbs[c, u]` is the (fractional) RB
    requirement of user u if served by cell c; `w_bh` / `w_net` are the
    backhaul-side RB equivalents and the binding resource count.
    """

    num_rbs: int
    rb_bandwidth_hz: float
    eta: np.ndarray  # [cells, users] bits/s/Hz
    demand_bps: np.ndarray  # [users]
    is_gbr: np.ndarray  # [users] bool
    assoc: np.ndarray  # [users] serving cell index
    gbr_cap_bps: np.ndarray  # [cells] GBR-class DL backhaul capacity
    dl_cap_bps: np.ndarray  # [cells] total DL backhaul capacity
    used_rbs: np.ndarray = field(init=False)  # [cells, users]
    w_bh: np.ndarray = field(init=False)  # [cells, users]
    w_net: np.ndarray = field(init=False)  # [cells, users]

    def __post_init__(self) -> None:
        cells, users = self.eta.shape
        self.used_rbs = np.zeros((cells, users))
        self.w_bh = np.zeros((cells, users))
        self.w_net = np.zeros((cells, users))
        for c in range(cells):
            for u in range(users):
                self.used_rbs[c, u] = used_rbs_gbr(
                    float(self.demand_bps[u]) if self.is_gbr[u] else 0.0,
                    float(self.eta[c, u]),
                    float(self.gbr_cap_bps[c]),
                    self.rb_bandwidth_hz,
                    fractional=True,
                )
                self.w_bh[c, u] = backhaul_rbs(
                    float(self.gbr_cap_bps[c]), float(self.eta[c, u]), self.rb_bandwidth_hz
                )
                self.w_net[c, u] = min(self.num_rbs, self.w_bh[c, u])

    @property
    def num_cells(self) -> int:
        return self.eta.shape[0]

    @property
    def num_users(self) -> int:
        return self.eta.shape[1]

    def cell_used_rbs(self, cell: int) -> float:
        """Total GBR RBs used at a cell (sum over its associated GBR users)."""
        mask = (self.assoc == cell) & self.is_gbr
        return float(self.used_rbs[cell, mask].sum())

    def user_rho(self, cell: int, user: int) -> float:
        return user_load(float(self.used_rbs[cell, user]), self.num_rbs, float(self.w_bh[cell, user]))

    def cell_rho(self, cell: int) -> float:
        mask = (self.assoc == cell) & self.is_gbr
        total = 0.0
        for u in np.flatnonzero(mask):
            rho = self.user_rho(cell, int(u))
            if rho == UNSERVABLE:
                return UNSERVABLE
            total += rho
        return total

    def ngbr_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in range(self.num_cells):
            out[c] = int(((self.assoc == c) & ~self.is_gbr).sum())
        return out


@dataclass
class LoadReport:
    """Load summary for one LB period."""

    rho_user: dict[tuple[int, int], float]  # (cell, user) -> load, serving pairs
    rho_cell: dict[int, float]
    rho_avg: float
    fairness: float


def used_rbs_gbr(
    demand_bps: float,
    eta: float,
    bh_rate_bps: float,
    rb_bandwidth_hz: float = 180e3,
    *,
    fractional: bool = False,
) -> float:
    """RBs needed to carry a GBR demand: demand / min(per-RB rate, backhaul rate).

    The backhaul branch binds only when the backhaul pipe available to the user
    drops below one RB's deliverable rate. Returns the infinite sentinel when
    neither network can carry any traffic.
    """
    if demand_bps < 0:
        raise ValueError("demand must be non-negative")
    if demand_bps == 0:
        return 0.0
    access_rate = rb_bandwidth_hz * max(eta, 0.0)
    denom = min(access_rate, max(bh_rate_bps, 0.0))
    if denom <= 0.0:
        return UNSERVABLE
    rbs = demand_bps / denom
    return rbs if fractional else float(math.ceil(rbs))


def backhaul_rbs(c_bh_bps: float, eta: float, rb_bandwidth_hz: float = 180e3) -> float:
    """Backhaul capacity as RB equivalents: ceil(C_BH / (BW * eta))."""
    rate = rb_bandwidth_hz * eta
    if rate <= 0.0 or c_bh_bps <= 0.0:
        return 0.0
    return float(math.ceil(c_bh_bps / rate))


def user_load(used_rbs: float, w_ac: float, w_bh: float) -> float:
    """Load fraction: used RBs over the binding resource count min(w_ac, w_bh)."""
    if used_rbs == 0.0:
        return 0.0
    net = min(w_ac, w_bh)
    if net <= 0.0 or used_rbs == UNSERVABLE:
        return UNSERVABLE
    return used_rbs / net


def average_load(cell_loads: list[float] | np.ndarray) -> float:
    """Mean of the per-cell GBR loads; an empty network carries no load."""
    loads = list(cell_loads)
    if not loads:
        return 0.0
    return float(sum(loads) / len(loads))


def jain_fairness(cell_loads: list[float] | np.ndarray) -> float:
    """Jain's index (sum rho)^2 / (M * sum rho^2), in [1/M, 1].

    All-zero loads are perfectly balanced (1.0); a non-finite load means some
    cell is unservable, which we score as maximal imbalance (1/M).
    """
    loads = np.asarray(list(cell_loads), dtype=float)
    if loads.size == 0:
        raise ValueError("at least one cell required")
    if not np.all(np.isfinite(loads)):
        return 1.0 / loads.size
    total = loads.sum()
    if total == 0.0:
        return 1.0
    return float(total**2 / (loads.size * np.square(loads).sum()))


def multiuser_diversity_gain(n: int) -> float:
    """n-th harmonic number; the scheduling gain of n proportional-fair users."""
    if n < 0:
        raise ValueError("user count must be non-negative")
    return float(sum(1.0 / j for j in range(1, n + 1)))


def ngbr_rate(
    eta: float,
    w_net: float,
    w_gbr_used: float,
    n_ngbr: int,
    rb_bandwidth_hz: float = 180e3,
) -> float:
    """Achievable NGBR rate under proportional-fair sharing of residual RBs.

    rate = eta * BW * floor(residual / n) * G(n); zero residual gives zero.
    """
    if n_ngbr < 1:
        raise ValueError("n_ngbr must be at least 1")
    residual = max(w_net - w_gbr_used, 0.0)
    share = math.floor(residual / n_ngbr)
    return eta * rb_bandwidth_hz * share * multiuser_diversity_gain(n_ngbr)


def build_report(ledger: LoadLedger) -> LoadReport:
    """Per-period load report: serving-user loads, cell loads, mean and fairness."""
    rho_user: dict[tuple[int, int], float] = {}
    for u in range(ledger.num_users):
        if not ledger.is_gbr[u]:
            continue
        c = int(ledger.assoc[u])
        if c < 0:
            continue
        rho_user[(c, u)] = ledger.user_rho(c, u)
    rho_cell = {c: ledger.cell_rho(c) for c in range(ledger.num_cells)}
    loads = list(rho_cell.values())
    return LoadReport(
        rho_user=rho_user,
        rho_cell=rho_cell,
        rho_avg=average_load(loads) if all(math.isfinite(x) for x in loads) else UNSERVABLE,
        fairness=jain_fairness(loads),
    )
