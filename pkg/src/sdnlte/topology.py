"""Scenario topologies, user placement and random-walk mobility.

Three scenarios are provided:
  1: three cells on a triangle, each on its own access switch behind one SGW.
  2: seven hexagonal cells on a star backhaul; the centre cell's uplink to the
     SGW has half the capacity of its neighbours'.
  3: the same seven cells on a 100 Mbps aggregation ring closed through the PGW
     plus two 50 Mbps access rings.

Cell 0 is the centre cell and doubles as the overloaded cell in asymmetric and
degree-of-asymmetry placements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox, SeedSequence, default_rng

from .backhaul import BackhaulGraph, Link, LinkUsage, link_key

GBR = "GBR"
NGBR = "NGBR"

VEHICULAR_SPEED_M_S = 30_000.0 / 3600.0
PEDESTRIAN_SPEED_M_S = 0.9
SPEED_CLASSES = (("vehicular", VEHICULAR_SPEED_M_S, 0.7),
                 ("pedestrian", PEDESTRIAN_SPEED_M_S, 0.2),
                 ("stationary", 0.0, 0.1))

INNER_RADIUS_M = 170.0
MOBILITY_PAUSE_S = 0.1
BOUNDS_MARGIN_M = 50.0

# seed-domain constants for per-concern substreams
_DOMAIN_PLACEMENT = 0
_DOMAIN_MOBILITY = 1
_U64_MASK = (1 << 64) - 1


@dataclass
class Cell:
    id: int
    position: tuple[float, float]
    radius_m: float = 250.0
    neighbors: frozenset[int] = frozenset()
    attached_switch: str = ""


@dataclass
class UserProfile:
    id: int
    kind: str  # GBR | NGBR
    gbr_demand_bps: int
    ngbr_app: str  # HTTP | FTP | none
    qos_weight: float
    speed_class: str
    position: np.ndarray  # (2,) metres
    velocity: np.ndarray  # (2,) m/s


@dataclass
class ScenarioSpec:
    scenario: int = 1
    num_users: int = 100
    distribution: str = "uniform"  # uniform | asymmetric
    doa: float | None = None  # only with asymmetric placement
    gbr_fraction: float = 0.9
    http_fraction: float = 0.5
    gbr_demand_bps: int = 250_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scenario not in (1, 2, 3):
            raise ValueError(f"unknown scenario {self.scenario}")
        if self.distribution not in ("uniform", "asymmetric"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.doa is not None and self.distribution != "asymmetric":
            raise ValueError("doa is only meaningful with the asymmetric distribution")
        if not 0.0 <= self.gbr_fraction <= 1.0:
            raise ValueError("gbr_fraction must lie in [0, 1]")


@dataclass
class NetworkState:
    """The simulated world: cells, backhaul, users and their association."""

    cells: list[Cell]
    graph: BackhaulGraph
    usage: LinkUsage
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    overloaded_cell: int = 0
    users: list[UserProfile] = field(default_factory=list)
    assoc: dict[int, int] = field(default_factory=dict)  # user -> serving cell


def split_counts(total: int, fractions: list[float]) -> list[int]:
    """Largest-remainder apportionment; ties go to the lower index."""
    raw = [total * f for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    leftover = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _hex_positions(inter_site_m: float) -> list[tuple[float, float]]:
    positions = [(0.0, 0.0)]
    for k in range(6):
        ang = math.pi / 3.0 * k
        positions.append((inter_site_m * math.cos(ang), inter_site_m * math.sin(ang)))
    return positions


def _hex_neighbors() -> list[frozenset[int]]:
    ring = [1, 2, 3, 4, 5, 6]
    neigh = [frozenset(ring)]
    for idx, c in enumerate(ring):
        left = ring[(idx - 1) % 6]
        right = ring[(idx + 1) % 6]
        neigh.append(frozenset({0, left, right}))
    return neigh


def _bounds_of(cells: list[Cell]) -> tuple[float, float, float, float]:
    xs = [c.position[0] for c in cells]
    ys = [c.position[1] for c in cells]
    r = max(c.radius_m for c in cells) + BOUNDS_MARGIN_M
    return (min(xs) - r, min(ys) - r, max(xs) + r, max(ys) + r)


def build_scenario(
    spec: ScenarioSpec,
    *,
    cell_radius_m: float = 250.0,
    inter_site_m: float = 500.0,
    access_link_mbps: float = 50.0,
    scenario2_center_mbps: float = 25.0,
    trunk_mbps: float = 1000.0,
) -> NetworkState:
    """Build cells, neighbour sets and the scenario's backhaul graph."""
    mbps = 1e6
    if spec.scenario == 1:
        side = inter_site_m
        positions = [(0.0, 0.0), (side, 0.0), (side / 2.0, side * math.sqrt(3.0) / 2.0)]
        cells = [
            Cell(i, pos, cell_radius_m, frozenset({0, 1, 2} - {i}), f"s{i}")
            for i, pos in enumerate(positions)
        ]
        switches = [f"s{i}" for i in range(3)] + ["sgw", "pgw"]
        links = [Link(f"s{i}", "sgw", access_link_mbps * mbps) for i in range(3)]
        links.append(Link("sgw", "pgw", trunk_mbps * mbps))
    elif spec.scenario == 2:
        positions = _hex_positions(inter_site_m)
        neigh = _hex_neighbors()
        cells = [
            Cell(i, pos, cell_radius_m, neigh[i], f"s{i}") for i, pos in enumerate(positions)
        ]
        switches = [f"s{i}" for i in range(7)] + ["sgw", "pgw"]
        links = [Link("s0", "sgw", scenario2_center_mbps * mbps)]
        links += [Link(f"s{i}", "sgw", access_link_mbps * mbps) for i in range(1, 7)]
        links.append(Link("sgw", "pgw", trunk_mbps * mbps))
    elif spec.scenario == 3:
        positions = _hex_positions(inter_site_m)
        neigh = _hex_neighbors()
        cells = [
            Cell(i, pos, cell_radius_m, neigh[i], f"s{i}") for i, pos in enumerate(positions)
        ]
        switches = [f"s{i}" for i in range(7)] + ["agg_a", "agg_b", "pgw"]
        ring100 = [("pgw", "agg_a"), ("agg_a", "agg_b"), ("agg_b", "pgw")]
        ring50_a = [("agg_a", "s0"), ("s0", "s1"), ("s1", "s2"), ("s2", "s3"), ("s3", "agg_b")]
        ring50_b = [("agg_a", "s4"), ("s4", "s5"), ("s5", "s6"), ("s6", "agg_b")]
        links = [Link(a, b, 100.0 * mbps) for a, b in ring100]
        links += [Link(a, b, 50.0 * mbps) for a, b in ring50_a + ring50_b]
    else:  # pragma: no cover - guarded by ScenarioSpec
        raise ValueError(f"unknown scenario {spec.scenario}")

    graph = BackhaulGraph(
        switches=switches,
        links={lk.key: lk for lk in links},
        cell_attachments={c.id: c.attached_switch for c in cells},
        pgw="pgw",
    )
    return NetworkState(
        cells=cells,
        graph=graph,
        usage=LinkUsage(),
        bounds=_bounds_of(cells),
        overloaded_cell=0,
    )


def _uniform_in_disk(rng, center: tuple[float, float], radius: float, n: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = rng.random(n) * 2.0 * np.pi
    return np.column_stack((center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)))


def _uniform_in_annulus(
    rng, center: tuple[float, float], r_in: float, r_out: float, n: int
) -> np.ndarray:
    r = np.sqrt(r_in**2 + rng.random(n) * (r_out**2 - r_in**2))
    theta = rng.random(n) * 2.0 * np.pi
    return np.column_stack((center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)))


def _uniform_over_cells(rng, cells: list[Cell], n: int) -> np.ndarray:
    choice = rng.integers(0, len(cells), n)
    pts = np.empty((n, 2))
    for i, c in enumerate(choice):
        cell = cells[c]
        pts[i] = _uniform_in_disk(rng, cell.position, cell.radius_m, 1)[0]
    return pts


def degree_of_asymmetry_placement(
    doa: float, num_users: int, cells: list[Cell], rng, overloaded: int = 0
) -> np.ndarray:
    """Place `doa` of the users in the loaded cell, the rest spread evenly."""
    m = len(cells)
    if not (1.0 / m) - 1e-12 <= doa <= 1.0 + 1e-12:
        raise ValueError(f"doa must lie in [1/{m}, 1]")
    others = [c.id for c in cells if c.id != overloaded]
    fractions = [doa] + [(1.0 - doa) / len(others)] * len(others)
    counts = split_counts(num_users, fractions)
    pts = np.empty((num_users, 2))
    labels = np.repeat(np.arange(len(counts)), counts)
    rng.shuffle(labels)
    cell_order = [overloaded] + others
    for slot, cell_id in enumerate(cell_order):
        mask = labels == slot
        cell = cells[cell_id]
        pts[mask] = _uniform_in_disk(rng, cell.position, cell.radius_m, int(mask.sum()))
    return pts


def _asymmetric_positions(rng, cells: list[Cell], overloaded: int, n: int) -> np.ndarray:
    """50% outer ring / 20% inner disk of the loaded cell, 30% uniform overall."""
    counts = split_counts(n, [0.5, 0.2, 0.3])
    loaded = cells[overloaded]
    pts = np.empty((n, 2))
    labels = np.repeat(np.arange(3), counts)
    rng.shuffle(labels)
    outer = labels == 0
    inner = labels == 1
    spread = labels == 2
    pts[outer] = _uniform_in_annulus(
        rng, loaded.position, INNER_RADIUS_M, loaded.radius_m, int(outer.sum())
    )
    pts[inner] = _uniform_in_disk(rng, loaded.position, INNER_RADIUS_M, int(inner.sum()))
    pts[spread] = _uniform_over_cells(rng, cells, int(spread.sum()))
    return pts


def place_users(spec: ScenarioSpec, cells: list[Cell], overloaded: int = 0) -> list[UserProfile]:
    """Draw user positions, traffic kinds and speed classes for a scenario."""
    rng = default_rng(SeedSequence((spec.seed, _DOMAIN_PLACEMENT)))
    n = spec.num_users

    if spec.distribution == "asymmetric":
        if spec.doa is not None:
            positions = degree_of_asymmetry_placement(spec.doa, n, cells, rng, overloaded)
        else:
            positions = _asymmetric_positions(rng, cells, overloaded, n)
    elif spec.scenario == 1:
        centroid = (
            sum(c.position[0] for c in cells) / len(cells),
            sum(c.position[1] for c in cells) / len(cells),
        )
        positions = _uniform_in_disk(rng, centroid, 200.0, n)
    else:
        positions = _uniform_over_cells(rng, cells, n)

    n_gbr, n_ngbr = split_counts(n, [spec.gbr_fraction, 1.0 - spec.gbr_fraction])
    n_http, _ = split_counts(n_ngbr, [spec.http_fraction, 1.0 - spec.http_fraction])

    class_counts = split_counts(n, [f for _, _, f in SPEED_CLASSES])
    class_labels = np.repeat(np.arange(3), class_counts)
    rng.shuffle(class_labels)

    users: list[UserProfile] = []
    for uid in range(n):
        is_gbr = uid < n_gbr
        app = "none"
        if not is_gbr:
            app = "HTTP" if (uid - n_gbr) < n_http else "FTP"
        name, speed, _ = SPEED_CLASSES[class_labels[uid]]
        theta = rng.random() * 2.0 * math.pi
        users.append(
            UserProfile(
                id=uid,
                kind=GBR if is_gbr else NGBR,
                gbr_demand_bps=spec.gbr_demand_bps if is_gbr else 0,
                ngbr_app=app,
                qos_weight=1.0,
                speed_class=name,
                position=positions[uid].copy(),
                velocity=speed * np.array([math.cos(theta), math.sin(theta)]),
            )
        )
    return users


def _leg_angles(seed: int, leg: int, n_users: int) -> np.ndarray:
    """Walk directions of every user for one 0.1 s leg (pure in seed and leg)."""
    raws = Philox(key=[seed & _U64_MASK, leg & _U64_MASK]).random_raw(n_users)
    return (raws >> np.uint64(11)).astype(np.float64) * 2.0**-53 * 2.0 * np.pi


def _reflect(coord: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    folded = np.mod(coord - lo, 2.0 * span)
    return lo + np.where(folded > span, 2.0 * span - folded, folded)


def step_mobility(
    users: list[UserProfile],
    dt: float,
    seed: int,
    bounds: tuple[float, float, float, float],
    start_time: float = 0.0,
) -> None:
    """Advance the random walk by dt seconds from model time start_time.

    Directions are resampled every 0.1 s of model time (keyed by leg index, so
    trajectories depend only on the seed and the covered time span) and users
    reflect off the rectangular simulation boundary.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    xmin, ymin, xmax, ymax = bounds
    class_speed = {name: speed for name, speed, _ in SPEED_CLASSES}
    speeds = np.array([class_speed[u.speed_class] for u in users])
    pos = np.array([u.position for u in users], dtype=float)

    remaining = dt
    t = start_time
    eps = 1e-9
    while remaining > eps:
        leg = int(math.floor((t + eps) / MOBILITY_PAUSE_S))
        leg_end = (leg + 1) * MOBILITY_PAUSE_S
        step = min(remaining, leg_end - t)
        ang = _leg_angles(seed, leg, len(users))
        pos[:, 0] += speeds * np.cos(ang) * step
        pos[:, 1] += speeds * np.sin(ang) * step
        t += step
        remaining -= step
    pos[:, 0] = _reflect(pos[:, 0], xmin, xmax)
    pos[:, 1] = _reflect(pos[:, 1], ymin, ymax)
    for u, p in zip(users, pos):
        u.position[:] = p
