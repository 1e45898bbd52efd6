"""Traffic-light release experiment: a stopped two-class queue discharging
through a light at x = 0.

Provides the model laws and datum, the closed-form interaction points and
last-passage time, and a piecewise-exact reference solution (centered fans,
a non-centered fan obtained by projecting along characteristic rays, and
the two curved discontinuities integrated as ODEs).
"""

from __future__ import annotations

import bisect as _bisect
from dataclasses import dataclass, field

from .engine import PiecewiseConstantDatum, RunResult
from .errors import NotReached, OutOfWindow, StructuralAssumptionViolated
from .model import (LinearFreeSpeed, ModelLaws, Phase, PowerPressure,
                    TrafficState, validate_laws, _solve_marker_density)
from .numerics import interp_polyline, invert_decreasing, invert_increasing
from .riemann import sigma

ODE_STEPS = 1024


@dataclass(frozen=True)
class TrafficLightConfig:
    gamma: float = 2.0
    v_max: float = 1.0 / 20.0
    w_max: float = 4.0 / 30.0
    w_c: float = 1.0 / 8.0
    v_c: float = 0.02
    x1: float = -10.0
    x2: float = -7.0
    n_levels: tuple[int, int] = (5, 9)

    def __post_init__(self):
        if not (self.x1 < self.x2 < 0.0):
            raise ValueError("need x1 < x2 < 0")


def build_scenario(cfg: TrafficLightConfig) -> tuple[ModelLaws, PiecewiseConstantDatum]:
    """Laws with linear free speed and power pressure, and the stopped-queue
    datum: heavy class on [x1, x2), light class on [x2, 0), vacuum outside."""
    v_f = LinearFreeSpeed(cfg.v_max, 1.0)
    p = PowerPressure(cfg.gamma)  # rho^gamma
    rf1 = _solve_marker_density(v_f, p, cfg.w_c, 0.5)
    rf2 = _solve_marker_density(v_f, p, cfg.w_max, 0.5)
    laws = validate_laws(v_f, p, rf1, rf2, cfg.v_c)
    vac = laws.vacuum()
    datum = PiecewiseConstantDatum(
        (cfg.x1, cfg.x2, 0.0),
        (vac,
         TrafficState(laws.R_c, 0.0, Phase.CONGESTED),
         TrafficState(laws.R_max, 0.0, Phase.CONGESTED),
         vac))
    return laws, datum


@dataclass
class ExactEventTable:
    a2: tuple[float, float]
    b2: tuple[float, float]
    c2: tuple[float, float]
    a1: tuple[float, float]
    b1: tuple[float, float]
    c1: tuple[float, float]
    t_star: float
    t_d2: float
    t_d1: float
    t_d1_construction: float
    structural_ok: bool
    merge: tuple[float, float] | None
    t_last: float            # last-passage time of the full exact picture
    speeds: dict = field(default_factory=dict)

    def car_count_residual(self, laws: ModelLaws, cfg: TrafficLightConfig) -> float:
        vf1 = laws.v_f(laws.rho_free_crit)
        lhs = (cfg.x2 - cfg.x1) * laws.R_c
        rhs = (self.t_d1 - self.t_d2) * laws.rho_free_crit * vf1 \
            + (self.t_d2 - self.t_star) * laws.rho_free_max * laws.V_f
        return lhs - rhs


class _Curves:
    """ODE-integrated pieces: the accelerating contact through the main fan
    and the phase boundary through the re-emitted fan."""

    def __init__(self, laws: ModelLaws, cfg: TrafficLightConfig):
        self.laws = laws
        self.cfg = cfg
        p = laws.p
        self.lam_rmax = laws.lambda1(TrafficState(laws.R_max, 0.0, Phase.CONGESTED))
        self.u_wmax_vc = TrafficState(laws.p_inv(laws.W_max - laws.V_c), laws.V_c,
                                      Phase.CONGESTED)
        self.u_wc_vc = TrafficState(laws.p_inv(laws.W_c - laws.V_c), laws.V_c,
                                    Phase.CONGESTED)
        self.xi_b = laws.lambda1(self.u_wmax_vc)
        self.lam_last = laws.lambda1(self.u_wc_vc)
        self.t_a2 = cfg.x2 / self.lam_rmax
        self.t_a1 = self.t_a2 + (cfg.x1 - cfg.x2) / laws.lambda1(
            TrafficState(laws.R_c, 0.0, Phase.CONGESTED))

        g = lambda r: p(r) + r * p.deriv(r)
        self._fan_inv = lambda y: invert_increasing(g, laws.rho_free_crit,
                                                    laws.R_max, y)
        self._c2_ts: list[float] = []
        self._c2_xs: list[float] = []
        self._integrate_c2()
        self._pt1_ts: list[float] = []
        self._pt1_xs: list[float] = []
        self._integrate_pt1()

    # main centered fan
    def fan_state(self, xi: float) -> TrafficState:
        laws = self.laws
        rho = self._fan_inv(laws.W_max - xi)
        return TrafficState(rho, laws.W_max - laws.p(rho), Phase.CONGESTED)

    def fan_speed(self, xi: float) -> float:
        xi = min(max(xi, self.lam_rmax), self.xi_b)
        return self.fan_state(xi).v

    def _rk4(self, f, t0, x0, stop, h_guess):
        """Fixed-step RK4 until `stop` changes sign, then a fresh pass with
        (t_b - t_a)/ODE_STEPS steps and a bisected endpoint."""
        def advance(t, x, h):
            k1 = f(t, x)
            k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = f(t + h, x + h * k3)
            return x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

        t, x = t0, x0
        while stop(t, x) < 0.0:
            t, x = t + h_guess, advance(t, x, h_guess)
            if t > 1e6:
                raise OutOfWindow("curved path never reaches its stop condition")
        t_hi = t
        h = (t_hi - t0) / ODE_STEPS
        ts, xs = [t0], [x0]
        t, x = t0, x0
        for _ in range(ODE_STEPS):
            t, x = t + h, advance(t, x, h)
            ts.append(t)
            xs.append(x)

        # endpoint by bisection on the dense path, one RK4 substep for accuracy
        def value(tq: float) -> float:
            i = min(max(_bisect.bisect_right(ts, tq) - 1, 0), len(ts) - 2)
            return advance(ts[i], xs[i], tq - ts[i])

        lo, hi = t0, t_hi
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if stop(mid, value(mid)) < 0.0:
                lo = mid
            else:
                hi = mid
        t_b = 0.5 * (lo + hi)
        x_b = value(t_b)
        # keep the stored path monotone in time and ending at the endpoint
        cut = _bisect.bisect_left(ts, t_b)
        ts, xs = ts[:cut], xs[:cut]
        ts.append(t_b)
        xs.append(x_b)
        return ts, xs, (t_b, x_b)

    def _integrate_c2(self):
        f = lambda t, x: self.fan_speed(x / t)
        stop = lambda t, x: x - self.xi_b * t
        ts, xs, end = self._rk4(f, self.t_a2, self.cfg.x2, stop, self.t_a2 / 64.0)
        self._c2_ts, self._c2_xs = ts, xs
        self.t_b2, self.x_b2 = end
        # cached source speeds and ray slopes along the path keep the
        # projection solves free of nested root finding
        self._c2_v0 = [self.fan_speed(x / t) for t, x in zip(ts, xs)]
        self._c2_lam = [self.ray_slope(v) for v in self._c2_v0]

    def c2_pos(self, t: float) -> float:
        return interp_polyline(self._c2_ts, self._c2_xs, t)

    def source_speed(self, t0: float) -> float:
        return interp_polyline(self._c2_ts, self._c2_v0, t0)

    def ray_slope(self, v0: float) -> float:
        laws = self.laws
        rho = laws.p_inv(laws.W_c - v0)
        return v0 - rho * laws.p.deriv(rho)

    def ray_pos(self, t0: float, t: float) -> float:
        lam = interp_polyline(self._c2_ts, self._c2_lam, t0)
        return self.c2_pos(t0) + (t - t0) * lam

    def project(self, t: float, x: float) -> float:
        """Source time whose ray passes through (t, x); clamped to the fan."""
        lo, hi = self.t_a2, self.t_b2
        if self.ray_pos(lo, t) >= x:
            return lo
        if self.ray_pos(hi, t) <= x:
            return hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.ray_pos(mid, t) < x:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def reemitted_state(self, t: float, x: float) -> TrafficState:
        laws = self.laws
        v = self.source_speed(self.project(t, x))
        return TrafficState(laws.p_inv(laws.W_c - v), v, Phase.CONGESTED)

    def first_ray(self, t: float) -> float:
        return self.cfg.x2 + (t - self.t_a2) * self.ray_slope(0.0)

    def last_ray(self, t: float) -> float:
        return self.x_b2 + (t - self.t_b2) * self.lam_last

    def _integrate_pt1(self):
        f = lambda t, x: self.source_speed(self.project(t, x))
        stop = lambda t, x: x - self.last_ray(t)
        ts, xs, end = self._rk4(f, self.t_a1, self.cfg.x1, stop,
                                (self.t_b2 - self.t_a2) / 16.0)
        self._pt1_ts, self._pt1_xs = ts, xs
        self.t_b1, self.x_b1 = end

    def pt1_pos(self, t: float) -> float:
        return interp_polyline(self._pt1_ts, self._pt1_xs, t)


def closed_form_table(cfg: TrafficLightConfig, strict: bool = False,
                      _curves: _Curves | None = None) -> ExactEventTable:
    """Interaction points and passage times of the exact construction.

    a-points and the t_star / c2 / d2 / d1 values come from the closed
    forms; the b-points and c1 require the two curved-path integrations.
    The car-count identity ties d1 to d2 and t_star by construction.  When
    the two trailing free-phase shocks meet upstream of the light the
    closed-form picture is inconsistent; the table then reports the merge
    point and the last-passage time of the merged front.
    """
    if _curves is None:
        laws, _ = build_scenario(cfg)
        cur = _Curves(laws, cfg)
    else:
        cur = _curves
        laws = cur.laws
    vf1 = laws.v_f(laws.rho_free_crit)
    u_f2 = TrafficState(laws.rho_free_max, laws.V_f, Phase.FREE)
    u_f1 = TrafficState(laws.rho_free_crit, vf1, Phase.FREE)
    sig_pt = sigma(cur.u_wmax_vc, u_f2)
    sig_s = sigma(u_f1, u_f2)
    sig_pt2p = sigma(cur.u_wc_vc, u_f1)

    t_star = laws.R_max * abs(cfg.x2) / (laws.rho_free_max * laws.V_f)
    t_c2 = laws.R_max * abs(cfg.x2) / (laws.rho_free_max * (laws.V_f - sig_pt))
    x_c2 = sig_pt * t_c2
    t_d2 = t_c2 - x_c2 / sig_s
    t_d1 = ((cfg.x2 - cfg.x1) * laws.R_c - cfg.x2 * laws.R_max) / (laws.rho_free_crit * vf1) \
        + (1.0 - sig_pt / sig_s) * (1.0 - laws.rho_free_max * laws.V_f
                                    / (laws.rho_free_crit * vf1)) \
        * laws.R_max * abs(cfg.x2) / (laws.rho_free_max * (laws.V_f - sig_pt))

    # c1: the straight tail of the left phase boundary meets the upstream
    # free-phase boundary emitted at c2
    t_c1 = (x_c2 - sig_pt2p * t_c2 - cur.x_b1 + laws.V_c * cur.t_b1) / (laws.V_c - sig_pt2p)
    x_c1 = cur.x_b1 + laws.V_c * (t_c1 - cur.t_b1)
    t_d1_constr = t_c1 - x_c1 / vf1

    # do the two trailing shocks meet before x = 0?
    t_m = (x_c2 - sig_s * t_c2 - x_c1 + vf1 * t_c1) / (vf1 - sig_s)
    x_m = x_c1 + vf1 * (t_m - t_c1)
    meets = (t_m > t_c1 and x_m < 0.0)
    if meets:
        t_last = t_m - x_m / laws.V_f
        merge = (t_m, x_m)
    else:
        t_last = t_d1
        merge = None
    if strict and meets:
        raise StructuralAssumptionViolated(
            f"trailing shocks meet at (t={t_m}, x={x_m}) upstream of the light")

    return ExactEventTable(
        a2=(cur.t_a2, cfg.x2), b2=(cur.t_b2, cur.x_b2), c2=(t_c2, x_c2),
        a1=(cur.t_a1, cfg.x1), b1=(cur.t_b1, cur.x_b1), c1=(t_c1, x_c1),
        t_star=t_star, t_d2=t_d2, t_d1=t_d1, t_d1_construction=t_d1_constr,
        structural_ok=not meets, merge=merge, t_last=t_last,
        speeds=dict(pt2=sig_pt, s2=sig_s, pt2_prime=sig_pt2p, s1=vf1,
                    merged=laws.V_f))


class ExactSolution:
    """Pointwise evaluator for the exact construction."""

    def __init__(self, cfg: TrafficLightConfig):
        self.cfg = cfg
        self.laws, self.datum = build_scenario(cfg)
        self.curves = _Curves(self.laws, cfg)
        self.table = closed_form_table(cfg, _curves=self.curves)
        laws = self.laws
        self.vac = laws.vacuum()
        self.u_rc = TrafficState(laws.R_c, 0.0, Phase.CONGESTED)
        self.u_rmax = TrafficState(laws.R_max, 0.0, Phase.CONGESTED)
        self.u_f2 = TrafficState(laws.rho_free_max, laws.V_f, Phase.FREE)
        self.u_f1 = TrafficState(laws.rho_free_crit, laws.v_f(laws.rho_free_crit),
                                 Phase.FREE)
        self.lam_f2 = laws.lambda_free(laws.rho_free_max)
        t = self.table
        caps = [3.0 * t.t_last]
        s2 = t.speeds["s2"]
        if s2 > self.lam_f2:   # the light-side shock eventually enters the fan
            tc2, xc2 = t.c2
            caps.append((xc2 - s2 * tc2) / (self.lam_f2 - s2))
        if t.merge is not None:
            tm, xm = t.merge
            caps.append((xm - laws.V_f * tm) / (self.lam_f2 - laws.V_f))
        self.window_end = min(caps)

    # fan on the outflow side
    def _free_fan_state(self, xi: float) -> TrafficState:
        laws = self.laws
        xi = min(max(xi, self.lam_f2), laws.V_max)
        rho = invert_decreasing(laws.lambda_free, 0.0, laws.rho_free_max, xi)
        return TrafficState(rho, laws.v_f(rho), Phase.FREE)

    def _segments(self, t: float):
        """Ordered boundary positions and the region list at time t."""
        cfg, cur, tab, laws = self.cfg, self.curves, self.table, self.laws
        t_c2, x_c2 = tab.c2
        t_c1, x_c1 = tab.c1
        sp = tab.speeds
        bounds: list[float] = []
        regions: list = [self.vac]

        def add(x, r):
            bounds.append(x)
            regions.append(r)

        if t <= t_c1:
            if t <= cur.t_a2:
                add(cfg.x1, self.u_rc)
                add(cfg.x2, self.u_rmax)
                add(cur.lam_rmax * t, "fan_main")
                add(cur.xi_b * t, cur.u_wmax_vc)
            else:
                if t <= cur.t_a1:
                    add(cfg.x1, self.u_rc)
                    add(cur.first_ray(t), "fan_reemitted")
                elif t <= cur.t_b1:
                    add(cur.pt1_pos(t), "fan_reemitted")
                if t <= cur.t_b2:
                    add(cur.c2_pos(t), "fan_main")
                    add(cur.xi_b * t, cur.u_wmax_vc)
                else:
                    if t <= cur.t_b1:
                        add(cur.last_ray(t), cur.u_wc_vc)
                    else:
                        add(cur.x_b1 + laws.V_c * (t - cur.t_b1), cur.u_wc_vc)
                    if t <= t_c2:
                        add(cur.x_b2 + laws.V_c * (t - cur.t_b2), cur.u_wmax_vc)
            if t <= t_c2:
                add(sp["pt2"] * t, self.u_f2)
            else:
                add(x_c2 + sp["pt2_prime"] * (t - t_c2), self.u_f1)
                add(x_c2 + sp["s2"] * (t - t_c2), self.u_f2)
        else:
            tm = tab.merge
            if tm is not None and t > tm[0]:
                add(tm[1] + laws.V_f * (t - tm[0]), self.u_f2)
            else:
                add(x_c1 + sp["s1"] * (t - t_c1), self.u_f1)
                add(x_c2 + sp["s2"] * (t - t_c2), self.u_f2)
        add(self.lam_f2 * t, "fan_free")
        add(laws.V_max * t, self.vac)
        return bounds, regions

    def evaluate(self, t: float, x: float) -> TrafficState:
        if not (0.0 <= t <= self.window_end):
            raise OutOfWindow(f"t={t} outside [0, {self.window_end}]")
        if t == 0.0:
            return self.datum.evaluate(x)
        bounds, regions = self._segments(t)
        r = regions[_bisect.bisect_right(bounds, x)]
        if isinstance(r, str):
            if r == "fan_main":
                return self.curves.fan_state(x / t)
            if r == "fan_reemitted":
                return self.curves.reemitted_state(t, x)
            return self._free_fan_state(x / t)
        return r

    def breakpoints(self, t: float) -> list[float]:
        bounds, _ = self._segments(t)
        return bounds

    def profile(self, t: float, xs) -> list[TrafficState]:
        return [self.evaluate(t, x) for x in xs]


def exact_reference(cfg: TrafficLightConfig, t: float, xs) -> list[TrafficState]:
    return ExactSolution(cfg).profile(t, xs)


def last_passage_time(run: RunResult, x_light: float = 0.0) -> float:
    """Arrival time at the light of the trailing vacuum-backed front."""
    crossings = []
    for rec in run.records:
        if rec.left.phase is Phase.FREE and rec.left.rho <= 1e-12 and rec.right.rho > 1e-12:
            tc = rec.crossing_time(x_light)
            if tc is not None:
                crossings.append(tc)
    probe = run.final.evaluate(x_light - 1e-6)
    if not crossings or probe.rho > 1e-12:
        raise NotReached("the queue has not fully passed the light in the run window")
    return max(crossings)
