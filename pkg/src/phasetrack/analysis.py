"""Diagnostics on computed front histories: jump-condition residuals,
phase-boundary admissibility classes, entropy production per front, and
Green-Gauss weak-form residuals against smooth test functions."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

from .engine import FrontRecord, RunResult
from .errors import OutOfDomain, SamePhase, UnsupportedTestFunction
from .model import ModelLaws, Phase, TrafficState
from .numerics import gauss_integrate
from .riemann import WaveKind

CLASS_TOL = 1e-10


# ---------------------------------------------------------------------------
# jump conditions


def rh_residual(laws: ModelLaws, speed: float, left: TrafficState,
                right: TrafficState) -> tuple[float, float | None]:
    """(mass residual, momentum residual or None).

    The momentum residual uses the conserved marker rho * max(w2, W_c); it is
    meaningful across every front only when the free speed is constant,
    otherwise only between two congested states.
    """
    mass = speed * (right.rho - left.rho) - (right.flow - left.flow)
    both_congested = (left.phase is Phase.CONGESTED and right.phase is Phase.CONGESTED)
    if both_congested or laws.degenerate_free:
        yl = left.rho * laws.marker_W(left)
        yr = right.rho * laws.marker_W(right)
        mom = speed * (yr - yl) - (yr * right.v - yl * left.v)
        return mass, mom
    return mass, None


def record_rh_residual(laws: ModelLaws, rec: FrontRecord):
    return rh_residual(laws, rec.speed, rec.left, rec.right)


# ---------------------------------------------------------------------------
# phase-boundary admissibility


@dataclass(frozen=True)
class TransitionClass:
    in_weak: bool
    in_entropy: bool
    label: str  # G1 | G2 | G3 | G1T | G2T | none


def classify_transition(laws: ModelLaws, u_minus: TrafficState,
                        u_plus: TrafficState) -> TransitionClass:
    """Membership of a phase-boundary jump in the weak and entropy classes."""
    if u_minus.phase is u_plus.phase:
        raise SamePhase(f"{u_minus} and {u_plus} share a phase")

    def low_free(u):     # strictly below the critical free density
        return u.phase is Phase.FREE and u.rho < laws.rho_free_crit - CLASS_TOL

    def high_free(u):    # free at or above the critical density
        return u.phase is Phase.FREE and u.rho >= laws.rho_free_crit - CLASS_TOL

    w2m, w2p = laws.w2(u_minus), laws.w2(u_plus)
    label = "none"
    if low_free(u_minus) and u_plus.phase is Phase.CONGESTED and \
            abs((w2p - laws.W_c) * u_minus.rho) <= CLASS_TOL:
        label = "G1"
    elif high_free(u_minus) and u_plus.phase is Phase.CONGESTED and \
            abs(w2m - w2p) <= CLASS_TOL:
        label = "G2"
    elif u_minus.phase is Phase.CONGESTED and high_free(u_plus) and \
            abs(w2m - w2p) <= CLASS_TOL and abs(u_minus.v - laws.V_c) <= CLASS_TOL:
        label = "G3"
    elif u_plus.phase is Phase.FREE and low_free(u_plus) and \
            abs((w2m - laws.W_c) * u_plus.rho) <= CLASS_TOL:
        label = "G1T"
    elif u_minus.phase is Phase.CONGESTED and high_free(u_plus) and \
            abs(w2m - w2p) <= CLASS_TOL:
        label = "G2T"
    in_entropy = label in ("G1", "G2", "G3")
    # equivalent characterization of the weak class
    in_weak = abs(u_minus.rho * u_plus.rho *
                  (laws.marker_W(u_minus) - laws.marker_W(u_plus))) <= CLASS_TOL
    return TransitionClass(in_weak, in_entropy, label)


# ---------------------------------------------------------------------------
# entropy pairs and production


def entropy_pair(laws: ModelLaws, u: TrafficState, k: float) -> tuple[float, float]:
    """Extended entropy/flux pair built on the marker-level intersection
    density; defined for reference speeds k in [0, V_f]."""
    if u.v <= k:
        return 0.0, 0.0
    rk = laws.R_k(laws.marker_W(u), k)
    return 1.0 - u.rho / rk, k - u.flow / rk


def lwr_entropy_pair(laws: ModelLaws, u: TrafficState, h: float) -> tuple[float, float]:
    """Classical scalar pair |rho - h| on the free branch."""
    if not (0.0 <= h <= laws.rho_free_max):
        raise OutOfDomain(f"reference density {h} outside [0, {laws.rho_free_max}]")
    s = math.copysign(1.0, u.rho - h) if u.rho != h else 0.0
    return abs(u.rho - h), s * (u.flow - h * laws.v_f(h))


def arz_entropy_pair(laws: ModelLaws, u: TrafficState, k: float) -> tuple[float, float]:
    """Congested-branch pair, defined for reference speeds up to the
    congested ceiling only.  On its domain it coincides with the extended
    pair; the two families are kept as separate entry points."""
    if u.phase is not Phase.CONGESTED:
        raise OutOfDomain("the congested pair needs a congested state")
    if not (0.0 <= k <= laws.V_c):
        raise OutOfDomain(f"reference speed {k} outside [0, {laws.V_c}]")
    if u.v <= k:
        return 0.0, 0.0
    rk = laws.p_inv(laws.w2(u) - k)
    return 1.0 - u.rho / rk, k - u.flow / rk


def entropy_production(laws: ModelLaws, speed: float, left: TrafficState,
                       right: TrafficState, k: float) -> float:
    """Rate of entropy production of a single front for reference speed k;
    nonnegative for admissible fronts."""
    el, ql = entropy_pair(laws, left, k)
    er, qr = entropy_pair(laws, right, k)
    return speed * (er - el) - (qr - ql)


def entropy_k_grid(laws: ModelLaws, eps_v: float) -> list[float]:
    """Multiples of the velocity quantum up to V_c plus the chord-branch probes."""
    n = int(round(laws.V_c / eps_v))
    ks = [i * eps_v for i in range(n)] + [laws.V_c,
                                          0.5 * (laws.V_c + laws.V_f), laws.V_f]
    return ks


@dataclass
class EntropyRecord:
    t0: float
    t1: float
    x0: float
    kind: str
    k: float
    upsilon: float


@dataclass
class EntropyReport:
    k_grid: list[float]
    records: list[EntropyRecord] = field(default_factory=list)
    min_sharp: float = math.inf          # min production over non-fan-step fronts
    negative_step_total: float = 0.0     # lifetime-weighted deficit of fan steps
    negative_step_total_unweighted: float = 0.0

    def rows(self):
        for r in self.records:
            yield (r.t0, r.t1, r.x0, r.kind, r.k, r.upsilon)


def _step_deficit(laws: ModelLaws, rec: FrontRecord) -> float:
    """Worst entropy deficit of one congested discretized-fan jump, probed at
    interior reference speeds (grid-aligned speeds sit exactly on the
    conservation identity and produce nothing)."""
    if rec.left.phase is not Phase.CONGESTED or rec.right.phase is not Phase.CONGESTED:
        return 0.0
    vl, vr = rec.left.v, rec.right.v
    lo, hi = min(vl, vr), max(vl, vr)
    worst = 0.0
    for q in (0.25, 0.5, 0.75):
        k = lo + (hi - lo) * q
        u = entropy_production(laws, rec.speed, rec.left, rec.right, k)
        if -u > worst:
            worst = -u
    return worst


def entropy_report(run: RunResult, k_grid: list[float] | None = None) -> EntropyReport:
    laws = run.laws
    if k_grid is None:
        k_grid = entropy_k_grid(laws, run.mesh.eps_v)
    rep = EntropyReport(k_grid=k_grid)
    for rec in run.records:
        is_step = rec.kind is WaveKind.RAREFACTION_STEP
        for k in k_grid:
            u = entropy_production(laws, rec.speed, rec.left, rec.right, k)
            rep.records.append(EntropyRecord(rec.t0, rec.t1, rec.x0,
                                             rec.kind.value if rec.kind else "initial",
                                             k, u))
            if not is_step:
                rep.min_sharp = min(rep.min_sharp, u)
        if is_step:
            d = _step_deficit(laws, rec)
            rep.negative_step_total += d * (rec.t1 - rec.t0)
            rep.negative_step_total_unweighted += d
    return rep


def step_entropy_deficit_bound(laws: ModelLaws, samples: int = 1025) -> float:
    """Dense-sampling evaluation of max over the congested densities of
    2 + rho p'' / p', the constant in the per-jump deficit bound."""
    lo = laws.rho_congested_min
    hi = laws.R_max
    worst = -math.inf
    for i in range(samples):
        r = lo + (hi - lo) * i / (samples - 1)
        worst = max(worst, 2.0 + r * laws.p.deriv2(r) / laws.p.deriv(r))
    return worst


# ---------------------------------------------------------------------------
# weak-form residuals


class BumpTestFunction:
    """Tensor-product smooth bump exp(1 - 1/(1 - s^2)) with analytic derivatives."""

    def __init__(self, t_center: float, t_radius: float,
                 x_center: float, x_radius: float):
        if t_radius <= 0 or x_radius <= 0:
            raise ValueError("radii must be positive")
        self.t_center, self.t_radius = t_center, t_radius
        self.x_center, self.x_radius = x_center, x_radius

    @staticmethod
    def _b(s: float) -> float:
        if abs(s) >= 1.0:
            return 0.0
        return math.exp(1.0 - 1.0 / (1.0 - s * s))

    @staticmethod
    def _db(s: float) -> float:
        if abs(s) >= 1.0:
            return 0.0
        d = 1.0 - s * s
        return math.exp(1.0 - 1.0 / d) * (-2.0 * s / (d * d))

    def __call__(self, t: float, x: float) -> float:
        return self._b((t - self.t_center) / self.t_radius) * \
            self._b((x - self.x_center) / self.x_radius)

    def dt(self, t: float, x: float) -> float:
        return self._db((t - self.t_center) / self.t_radius) / self.t_radius * \
            self._b((x - self.x_center) / self.x_radius)

    def dx(self, t: float, x: float) -> float:
        return self._b((t - self.t_center) / self.t_radius) * \
            self._db((x - self.x_center) / self.x_radius) / self.x_radius

    @property
    def t_support(self) -> tuple[float, float]:
        return (self.t_center - self.t_radius, self.t_center + self.t_radius)


def weak_residual(run: RunResult, phi: BumpTestFunction,
                  nodes_per_segment: int = 32) -> tuple[float, float]:
    """Green-Gauss line-integral residuals of the two balance laws.

    The area integral of rho (phi_t + v phi_x) (and its marker-weighted
    companion) over the run equals the sum over fronts of the jump deficit
    times phi along the front path; both components are returned.  A record
    is one inter-event segment of a front; its lifetime is clipped to the
    bump support and sub-panelled against the bump radius so the fixed
    Gauss rule stays resolved.
    """
    t_lo, t_hi = phi.t_support
    if t_lo < 0.0 or t_hi > run.t_end:
        raise UnsupportedTestFunction(
            f"support [{t_lo}, {t_hi}] exceeds the run window [0, {run.t_end}]")
    laws = run.laws
    res_mass = 0.0
    res_mom = 0.0
    for rec in run.records:
        a = max(rec.t0, t_lo)
        b = min(rec.t1, t_hi)
        if b <= a:
            continue
        dm = rec.speed * (rec.right.rho - rec.left.rho) - (rec.right.flow - rec.left.flow)
        yl = rec.left.rho * laws.marker_W(rec.left)
        yr = rec.right.rho * laws.marker_W(rec.right)
        dq = rec.speed * (yr - yl) - (yr * rec.right.v - yl * rec.left.v)
        if dm == 0.0 and dq == 0.0:
            continue
        panels = min(64, max(1, math.ceil((b - a) / (0.25 * phi.t_radius))))
        w = 0.0
        h = (b - a) / panels
        for j in range(panels):
            w += gauss_integrate(lambda t: phi(t, rec.position(t)),
                                 a + j * h, a + (j + 1) * h, nodes_per_segment)
        res_mass += float(dm * w)
        res_mom += float(dq * w)
    return res_mass, res_mom
