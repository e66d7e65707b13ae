"""Analytic throughput oracles.

``maxmin_flow`` computes the max-min fair allocation of saturating (or
demand-bounded) flows over fixed routes by progressive water-filling.
``ideal_crossbar`` applies the same procedure with only per-source and
per-destination port constraints, which is the soft-NoC-at-target-clock
baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

IDEAL_PORT_RATE = 512 / 8 * 250.0 / 1000.0  # 16 GB/s


@dataclass(frozen=True)
class Demand:
    id: Hashable
    resources: tuple[Hashable, ...]  # link ids, or ("src", s)/("dst", d) ports
    demand: float = math.inf


def water_fill(demands: Sequence[Demand], capacity: Mapping[Hashable, float]) -> dict[Hashable, float]:
    """Progressive filling: raise all unfrozen flows together until a resource
    saturates or a flow meets its demand; freeze and repeat."""
    alloc = {d.id: 0.0 for d in demands}
    active = {d.id: d for d in demands if d.demand > 0}
    residual = {r: float(capacity[r]) for d in demands for r in d.resources}
    while active:
        users: dict[Hashable, int] = {}
        for d in active.values():
            for r in d.resources:
                users[r] = users.get(r, 0) + 1
        step = math.inf
        for r, k in users.items():
            step = min(step, residual[r] / k)
        for d in active.values():
            step = min(step, d.demand - alloc[d.id])
        if math.isinf(step):
            raise ValueError("unbounded allocation: a flow crosses no capacity")
        step = max(step, 0.0)
        for d in active.values():
            alloc[d.id] += step
            for r in d.resources:
                residual[r] -= step
        eps = 1e-12
        saturated = {r for r in users if residual[r] <= eps * max(1.0, capacity[r])}
        for fid in list(active):
            d = active[fid]
            if alloc[fid] >= d.demand - eps or any(r in saturated for r in d.resources):
                del active[fid]
    return alloc


def maxmin_flow(routes: Mapping[Hashable, Iterable[int]], capacity: Mapping[int, float],
                demands: Mapping[Hashable, float] | None = None) -> dict[Hashable, float]:
    """Max-min fair rates for flows pinned to ``routes`` (link id lists).

    ``capacity`` maps link id to usable GB/s; ``demands`` bounds flows
    (missing means saturating).
    """
    demands = demands or {}
    ds = [Demand(cid, tuple(dict.fromkeys(links)), demands.get(cid, math.inf)) for cid, links in routes.items()]
    return water_fill(ds, capacity)


def ideal_crossbar(pairs: Mapping[Hashable, tuple[Hashable, Hashable]], port_rate: float = IDEAL_PORT_RATE,
                   demands: Mapping[Hashable, float] | None = None) -> dict[Hashable, float]:
    """Max-min allocation limited only by source and destination port rates."""
    demands = demands or {}
    ds = []
    cap: dict[Hashable, float] = {}
    for cid, (src, dst) in pairs.items():
        rs = (("src", src), ("dst", dst))
        for r in rs:
            cap[r] = port_rate
        ds.append(Demand(cid, rs, demands.get(cid, math.inf)))
    return water_fill(ds, cap)


def is_maxmin(routes: Mapping[Hashable, Iterable[int]], capacity: Mapping[int, float],
              alloc: Mapping[Hashable, float], demands: Mapping[Hashable, float] | None = None,
              tol: float = 1e-9) -> bool:
    """Bottleneck characterization: every flow either meets its demand or
    crosses a saturated link on which it has a maximal rate."""
    demands = demands or {}
    load: dict[int, float] = {}
    for cid, links in routes.items():
        for l in set(links):
            load[l] = load.get(l, 0.0) + alloc[cid]
    for l, v in load.items():
        if v > capacity[l] + tol:
            return False
    for cid, links in routes.items():
        if alloc[cid] >= demands.get(cid, math.inf) - tol:
            continue
        ok = False
        for l in set(links):
            if load[l] >= capacity[l] - tol:
                top = max(alloc[o] for o, ls in routes.items() if l in ls)
                if alloc[cid] >= top - tol:
                    ok = True
                    break
        if not ok:
            return False
    return True
