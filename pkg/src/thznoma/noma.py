"""Two-user NOMA: PPP user drops, distance-based pairing/power control, detection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ArrayGeometry, ChannelParams, ChannelRealization, los_channel
from .constellation import build_qam
from .detectors import ChannelFactors, DetectorKind, StreamPlan, detect_stream, sic_cancel
from .errors import BudgetExhausted, EmptyDrop

log = logging.getLogger(__name__)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class NomaScenario:
    """Cell layout and power-control inputs.  Defaults are the Table I profile."""

    R_N: float = 5.0
    R_C: float = 10.0
    density_inner: float = 0.1
    density_outer: float = 0.1
    pathloss_exp: float = 2.2
    rho_rx: float = dbm_to_watts(-100.0)
    P_max: float = 0.1 * 16
    mu: float = 10.0
    N: int = 16
    sector: float = math.radians(10.0)
    d_min: float = 0.5

    def __post_init__(self):
        if not 0 < self.R_N < self.R_C:
            raise ValueError("need 0 < R_N < R_C")
        if not 0 <= self.d_min < self.R_N:
            raise ValueError("need 0 <= d_min < R_N")
        if not (self.density_inner > 0 and self.density_outer > 0):
            raise ValueError("densities must be positive")
        if not (self.pathloss_exp > 0 and self.P_max > 0 and self.rho_rx > 0):
            raise ValueError("path-loss exponent, P_max and rho_rx must be positive")
        if self.mu < 1:
            raise ValueError("mu must be >= 1")

    @property
    def mean_pairs(self) -> float:
        return self.density_inner * math.pi * self.R_N ** 2

    @property
    def budget(self) -> float:
        """Per-SA power budget ``P_max / N``."""
        return self.P_max / self.N


@dataclass(frozen=True)
class UserDrop:
    inner_d: np.ndarray
    inner_angle: np.ndarray
    outer_d: np.ndarray
    outer_angle: np.ndarray

    @property
    def K(self) -> int:
        return len(self.inner_d)


@dataclass(frozen=True)
class ClusterPlan:
    pairs: tuple
    powers: tuple
    inner_d: tuple
    outer_d: tuple

    def rows(self):
        for k, ((i1, i2), (p1, p2)) in enumerate(zip(self.pairs, self.powers)):
            yield k, self.inner_d[i1], self.outer_d[i2], p1, p2


def _annulus(rng, n, r_lo, r_hi, sector):
    # uniform over the area: radius via inverse CDF of r^2
    r = np.sqrt(rng.uniform(r_lo ** 2, r_hi ** 2, n))
    theta = rng.uniform(-sector / 2, sector / 2, n)
    return r, theta


def drop_users(s: NomaScenario, rng) -> UserDrop:
    K = int(rng.poisson(s.mean_pairs))
    if K == 0:
        raise EmptyDrop("no users dropped in the inner disk")
    d1, a1 = _annulus(rng, K, s.d_min, s.R_N, s.sector)
    # outer radius strictly above R_N
    d2, a2 = _annulus(rng, K, s.R_N, s.R_C, s.sector)
    d2 = np.maximum(d2, np.nextafter(s.R_N, np.inf))
    return UserDrop(d1, a1, d2, a2)


def jdcp(inner_d, outer_d, s: NomaScenario) -> ClusterPlan:
    """Joint distance-based clustering and power control.

    The k-th farthest inner user is paired with the k-th farthest outer user.
    The inner user gets channel-inversion power ``rho_rx d1**alpha``; the outer
    user ``mu`` times its own inversion power, capped by what is left of the
    per-SA budget.
    """
    inner_d = np.asarray(inner_d, dtype=float)
    outer_d = np.asarray(outer_d, dtype=float)
    if len(inner_d) != len(outer_d):
        log.warning("unequal group sizes %d/%d; truncating to the shorter",
                    len(inner_d), len(outer_d))
    K = min(len(inner_d), len(outer_d))
    # stable sort on negated distance: descending, ties keep index order
    order1 = np.argsort(-inner_d, kind="stable")[:K] if K else []
    order2 = np.argsort(-outer_d, kind="stable")[:K] if K else []
    pairs, powers = [], []
    for i1, i2 in zip(order1, order2):
        p1 = s.rho_rx * inner_d[i1] ** s.pathloss_exp
        room = s.budget - p1
        if room <= 0:
            raise BudgetExhausted(f"inner user at {inner_d[i1]:.3f} m needs {p1:.3e} W, "
                                  f"budget is {s.budget:.3e} W")
        p2 = min(s.mu * s.rho_rx * outer_d[i2] ** s.pathloss_exp, room)
        pairs.append((int(i1), int(i2)))
        powers.append((float(p1), float(p2)))
    return ClusterPlan(tuple(pairs), tuple(powers), tuple(inner_d.tolist()), tuple(outer_d.tolist()))


def large_scale_coefficient(d: float, pathloss_exp: float) -> float:
    return float(d) ** (-pathloss_exp / 2.0)


@dataclass
class NomaLink:
    H1: ChannelRealization
    H2: ChannelRealization
    sigma_h1: float
    sigma_h2: float
    p1: float
    p2: float
    d1: float
    d2: float


def build_noma_links(plan: ClusterPlan, scenario: NomaScenario, template: ArrayGeometry,
                     params: ChannelParams | None = None, tune_near: bool = False,
                     tune_far: bool = False) -> list[NomaLink]:
    """LoS channels to both users of every pair at their own distances.

    The BS array is ``template``'s transmit side; a user's receive array is
    spatially tuned to its distance when the matching flag is set.
    """
    links = []
    for k, d1, d2, p1, p2 in plan.rows():
        g1 = replace(template, D=d1)
        g2 = replace(template, D=d2)
        if tune_near:
            g1 = g1.tuned()
        if tune_far:
            g2 = g2.tuned()
        s1 = large_scale_coefficient(d1, scenario.pathloss_exp)
        s2 = large_scale_coefficient(d2, scenario.pathloss_exp)
        h1 = los_channel(g1, params)
        h2 = los_channel(g2, params)
        h1.sigma_h, h2.sigma_h = s1, s2
        links.append(NomaLink(h1, h2, s1, s2, p1, p2, d1, d2))
    return links


def pair_plan(N: int, p1: float, p2: float, order: int = 16) -> StreamPlan:
    return StreamPlan.build(N, [N, N], [build_qam(order, p1), build_qam(order, p2)])


def noma_detect_pair(y1, y2, f1: ChannelFactors, f2: ChannelFactors, powers, kind,
                     order: int = 16):
    """Bits of user 1 (SIC receiver) and user 2 (direct receiver).

    User 2 detects its own stream treating user 1's as noise.  User 1 first
    detects user 2's stream, cancels it and then detects its own; the first
    pass is only used for cancellation.
    """
    kind = DetectorKind.parse(kind)
    p1, p2 = powers
    c1, c2 = build_qam(order, p1), build_qam(order, p2)
    idx = tuple(range(f1.N))
    x2_at_2, _ = detect_stream(np.asarray(y2, dtype=complex), f2, idx, c2, kind)
    x2_at_1, _ = detect_stream(np.asarray(y1, dtype=complex), f1, idx, c2, kind)
    y1c = sic_cancel(y1, f1.H, x2_at_1)
    x1, _ = detect_stream(y1c, f1, idx, c1, kind)
    return c1.demap(x1), c2.demap(x2_at_2)
