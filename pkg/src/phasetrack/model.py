"""Speed/pressure laws, state space, Riemann-invariant coordinates.

The state space is the union of a free-flow branch (velocity a function of
density) and a congested branch (velocity and density independent, with the
Lagrangian marker v + p(rho) confined to a band).  All derived constants are
computed and checked at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

from .errors import HypothesisViolation, OrderingViolation, OutOfDomain
from .numerics import invert_decreasing, invert_increasing

STATE_TOL = 1e-10       # coordinate-space tolerance for state equality
_GRACE = 1e-12          # slack for sign checks on sampled inequalities
_N_SAMPLES = 2048       # interior sample count per validation interval


class Phase(Enum):
    FREE = "free"
    CONGESTED = "congested"


@dataclass(frozen=True, slots=True)
class TrafficState:
    rho: float
    v: float
    phase: Phase

    @property
    def flow(self) -> float:
        return self.rho * self.v

    @property
    def is_vacuum(self) -> bool:
        return self.phase is Phase.FREE and self.rho == 0.0

    def __repr__(self) -> str:  # compact, phase-tagged
        tag = "F" if self.phase is Phase.FREE else "C"
        return f"({self.rho:.6g},{self.v:.6g}|{tag})"


class RiemannCoords(NamedTuple):
    w1: float
    w2: float


def free_state(laws: "ModelLaws", rho: float) -> TrafficState:
    return TrafficState(rho, laws.v_free(rho), Phase.FREE)


def congested_state(rho: float, v: float) -> TrafficState:
    return TrafficState(rho, v, Phase.CONGESTED)


class LinearFreeSpeed:
    """v(rho) = v_max (1 - rho / R); R = inf gives a constant free speed."""

    def __init__(self, v_max: float, R: float = 1.0):
        if v_max <= 0 or R <= 0:
            raise ValueError("v_max and R must be positive")
        self.v_max = float(v_max)
        self.R = float(R)

    def __call__(self, rho: float) -> float:
        if math.isinf(self.R):
            return self.v_max
        return self.v_max * (1.0 - rho / self.R)

    def deriv(self, rho: float) -> float:
        return 0.0 if math.isinf(self.R) else -self.v_max / self.R

    def deriv2(self, rho: float) -> float:
        return 0.0


class PowerPressure:
    """p(rho) = (v_ref / gamma) (rho / rho_max)^gamma, or the log law at gamma = 0.

    With v_ref = gamma and rho_max = 1 this reduces to p(rho) = rho^gamma.
    """

    def __init__(self, gamma: float, v_ref: float | None = None, rho_max: float = 1.0):
        if gamma < 0:
            raise ValueError("gamma must be >= 0")
        if rho_max <= 0:
            raise ValueError("rho_max must be positive")
        self.gamma = float(gamma)
        self.rho_max = float(rho_max)
        if v_ref is None:
            v_ref = gamma if gamma > 0 else 1.0
        if v_ref <= 0:
            raise ValueError("v_ref must be positive")
        self.v_ref = float(v_ref)

    def __call__(self, rho: float) -> float:
        g = self.gamma
        if g == 0.0:
            return self.v_ref * math.log(rho / self.rho_max)
        return (self.v_ref / g) * (rho / self.rho_max) ** g

    def deriv(self, rho: float) -> float:
        g = self.gamma
        if g == 0.0:
            return self.v_ref / rho
        return (self.v_ref / self.rho_max) * (rho / self.rho_max) ** (g - 1.0)

    def deriv2(self, rho: float) -> float:
        g = self.gamma
        if g == 0.0:
            return -self.v_ref / rho ** 2
        return (g - 1.0) * (self.v_ref / self.rho_max ** 2) * (rho / self.rho_max) ** (g - 2.0)


class CustomLaw:
    """Wrap plain callables (value, first, second derivative) as a law."""

    def __init__(self, f: Callable[[float], float], df: Callable[[float], float],
                 ddf: Callable[[float], float]):
        self._f, self._df, self._ddf = f, df, ddf

    def __call__(self, rho: float) -> float:
        return self._f(rho)

    def deriv(self, rho: float) -> float:
        return self._df(rho)

    def deriv2(self, rho: float) -> float:
        return self._ddf(rho)


def _sample_points(lo: float, hi: float, n: int = _N_SAMPLES) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n + 1)
    pts = [lo + i * step for i in range(1, n + 1)]
    return [lo] + pts + [hi]


class ModelLaws:
    """Validated pair of laws plus every derived constant.

    Immutable after construction; all methods are pure, so instances can be
    shared freely across threads.
    """

    def __init__(self, v_f, p, rho_free_crit: float, rho_free_max: float, v_crit: float):
        if not (0.0 < rho_free_crit < rho_free_max):
            raise OrderingViolation(
                f"need 0 < R_f'={rho_free_crit} < R_f''={rho_free_max}")
        self.v_f = v_f
        self.p = p
        self.rho_free_crit = float(rho_free_crit)   # R_f'
        self.rho_free_max = float(rho_free_max)     # R_f''

        self.V_max = v_f(0.0)
        self.V_f = v_f(self.rho_free_max)
        self.W_max = p(self.rho_free_max) + self.V_f
        self.W_c = p(self.rho_free_crit) + v_f(self.rho_free_crit)
        self.W_min = self.W_c + v_f(self.rho_free_crit) - self.V_max
        self.V_c = float(v_crit)

        self._validate_h1()
        # H2 is checked twice: a pre-check near the free band (so degenerate
        # pressures fail loudly), then the full sweep once R_max is known
        self._validate_h2(self.rho_free_crit, 2.0 * self.rho_free_max)
        self.R_max = self._p_inv_raw(self.W_max)
        self.R_c = self._p_inv_raw(self.W_c)
        self._validate_h2(self.rho_free_crit, self.R_max)
        self._validate_h3()
        self._validate_orderings()

        # vacuum-excluded lower bound of the congested densities
        self.rho_congested_min = self.p_inv(self.W_c - self.V_c)

    # -- validation ---------------------------------------------------------

    def _validate_h1(self) -> None:
        vf = self.v_f
        if vf(self.rho_free_max) <= 0:
            raise HypothesisViolation("H1", self.rho_free_max, "v_f(R_f'') <= 0")
        for r in _sample_points(0.0, self.rho_free_max):
            if vf.deriv(r) > _GRACE:
                raise HypothesisViolation("H1", r, "v_f' > 0")
            if vf(r) + r * vf.deriv(r) <= _GRACE:
                raise HypothesisViolation("H1", r, "v_f + rho v_f' <= 0")
            if 2.0 * vf.deriv(r) + r * vf.deriv2(r) > _GRACE:
                raise HypothesisViolation("H1", r, "2 v_f' + rho v_f'' > 0")

    def _validate_h2(self, lo: float, hi: float) -> None:
        p = self.p
        for r in _sample_points(lo, hi):
            if p.deriv(r) <= _GRACE:
                raise HypothesisViolation("H2", r, "p' <= 0")
            if 2.0 * p.deriv(r) + r * p.deriv2(r) <= _GRACE:
                raise HypothesisViolation("H2", r, "2 p' + rho p'' <= 0")

    def _validate_h3(self) -> None:
        for r in _sample_points(self.rho_free_crit, self.rho_free_max):
            if self.v_f.deriv(r) + self.p.deriv(r) <= _GRACE:
                raise HypothesisViolation("H3", r, "v_f + p not increasing")
            if self.v_f(r) >= r * self.p.deriv(r) - _GRACE:
                raise HypothesisViolation("H3", r, "v_f >= rho p'")

    def _validate_orderings(self) -> None:
        if not (0.0 < self.V_c < self.V_f):
            raise OrderingViolation(f"need 0 < V_c={self.V_c} < V_f={self.V_f}")
        if self.V_f > self.V_max + _GRACE:
            raise OrderingViolation("V_f > V_max")
        if not (self.R_max > self.rho_free_max):
            raise OrderingViolation("R_max <= R_f''")
        if not (self.R_c > self.rho_free_crit):
            raise OrderingViolation("R_c <= R_f'")
        if not (self.W_max > self.W_c):
            raise OrderingViolation("W_max <= W_c")
        # W_c == W_min exactly when the free speed is constant (V_max == V_f)
        if self.W_c < self.W_min - _GRACE:
            raise OrderingViolation("W_c < W_min")
        if self.W_c <= self.W_min and not self.degenerate_free:
            raise OrderingViolation("W_c <= W_min with a non-constant free speed")

    # -- elementary maps ----------------------------------------------------

    @property
    def degenerate_free(self) -> bool:
        """True when the free speed is constant (the free field degenerates)."""
        return abs(self.V_max - self.V_f) <= _GRACE

    def v_free(self, rho: float) -> float:
        return self.v_f(rho)

    def _p_inv_raw(self, y: float) -> float:
        lo = self.rho_free_crit
        hi = max(2.0 * self.rho_free_max, 2.0 * lo)
        while self.p(hi) < y:
            hi *= 2.0
            if hi > 1e12:
                raise HypothesisViolation("H2", hi, f"p never reaches {y}")
        return invert_increasing(self.p, lo, hi, y)

    def p_inv(self, y: float) -> float:
        """Inverse pressure on [p(R_f'), W_max]."""
        if y < self.p(self.rho_free_crit) - STATE_TOL or y > self.W_max + STATE_TOL:
            raise OutOfDomain(f"p_inv({y}) outside [{self.p(self.rho_free_crit)}, {self.W_max}]")
        return invert_increasing(self.p, self.rho_free_crit, self.R_max, y)

    def v_f_inv(self, v: float) -> float:
        """Inverse of v_f on [0, R_f'] (used by the low-density marker branch)."""
        return invert_decreasing(self.v_f, 0.0, self.rho_free_crit, v)

    def rho_f(self, w: float) -> float:
        """Density at which the free flow curve meets rho (w - p(rho)).

        Unique in [R_f', R_f''] for w in [W_c, W_max]; the intersection lies on
        the decreasing side of the congested flow (capacity drop).
        """
        if w < self.W_c - STATE_TOL or w > self.W_max + STATE_TOL:
            raise OutOfDomain(f"rho_f({w}) outside [{self.W_c}, {self.W_max}]")
        f = lambda r: self.v_f(r) + self.p(r)
        rho = invert_increasing(f, self.rho_free_crit, self.rho_free_max, w)
        # decreasing-slope side of rho [w - p(rho)]:
        assert w - self.p(rho) - rho * self.p.deriv(rho) < 0.0
        return rho

    def free_rho_from_marker(self, w2: float) -> float:
        """Free-phase density with the given extended marker value."""
        if w2 > self.W_max + STATE_TOL or w2 < self.W_min - STATE_TOL:
            raise OutOfDomain(f"free marker {w2} outside [{self.W_min}, {self.W_max}]")
        if w2 >= self.W_c:
            return self.rho_f(min(w2, self.W_max))
        # below W_c:  w2 = W_c + v_f(R_f') - v_f(rho)
        return self.v_f_inv(self.W_c + self.v_f(self.rho_free_crit) - w2)

    # -- characteristic speeds ----------------------------------------------

    def lambda_free(self, rho: float) -> float:
        return self.v_f(rho) + rho * self.v_f.deriv(rho)

    def lambda1(self, u: TrafficState) -> float:
        return u.v - u.rho * self.p.deriv(u.rho)

    def lambda2(self, u: TrafficState) -> float:
        return u.v

    def characteristics(self, u: TrafficState):
        """Free state -> lambda_f; congested state -> (lambda_1, lambda_2)."""
        if u.phase is Phase.FREE:
            return self.lambda_free(u.rho)
        return (self.lambda1(u), self.lambda2(u))

    # -- coordinates ---------------------------------------------------------

    def w1(self, u: TrafficState) -> float:
        return self.V_f if u.phase is Phase.FREE else u.v

    def w2(self, u: TrafficState) -> float:
        if u.phase is Phase.CONGESTED:
            return u.v + self.p(u.rho)
        if u.rho >= self.rho_free_crit:
            return self.v_f(u.rho) + self.p(u.rho)
        # below the critical density the pressure is undefined; the marker
        # continues along the free-speed deficit instead
        return self.W_c + self.v_f(self.rho_free_crit) - self.v_f(u.rho)

    def to_coords(self, u: TrafficState) -> RiemannCoords:
        return RiemannCoords(self.w1(u), self.w2(u))

    def from_coords(self, c: RiemannCoords, phase: Phase) -> TrafficState:
        w1, w2 = c
        if phase is Phase.FREE:
            if abs(w1 - self.V_f) > STATE_TOL:
                raise OutOfDomain(f"free state must carry w1 = V_f, got {w1}")
            rho = self.free_rho_from_marker(w2)
            return TrafficState(rho, self.v_f(rho), Phase.FREE)
        if not (-STATE_TOL <= w1 <= self.V_c + STATE_TOL):
            raise OutOfDomain(f"congested w1 {w1} outside [0, {self.V_c}]")
        if not (self.W_c - STATE_TOL <= w2 <= self.W_max + STATE_TOL):
            raise OutOfDomain(f"congested w2 {w2} outside [{self.W_c}, {self.W_max}]")
        rho = self.p_inv(w2 - w1)
        return TrafficState(rho, w1, Phase.CONGESTED)

    def norm(self, u: TrafficState) -> float:
        c = self.to_coords(u)
        return abs(c.w1) + abs(c.w2)

    def coord_distance(self, a: TrafficState, b: TrafficState) -> float:
        ca, cb = self.to_coords(a), self.to_coords(b)
        return abs(ca.w1 - cb.w1) + abs(ca.w2 - cb.w2)

    def states_equal(self, a: TrafficState, b: TrafficState, tol: float = STATE_TOL) -> bool:
        return self.coord_distance(a, b) <= tol and abs(a.rho - b.rho) <= tol

    # -- domain membership ---------------------------------------------------

    def in_free_domain(self, u: TrafficState, tol: float = STATE_TOL) -> bool:
        if u.phase is not Phase.FREE:
            return False
        return (-tol <= u.rho <= self.rho_free_max + tol
                and abs(u.v - self.v_f(u.rho)) <= tol)

    def in_congested_domain(self, u: TrafficState, tol: float = STATE_TOL) -> bool:
        if u.phase is not Phase.CONGESTED:
            return False
        w2 = u.v + self.p(u.rho)
        return (-tol <= u.v <= self.V_c + tol
                and self.W_c - tol <= w2 <= self.W_max + tol)

    def contains(self, u: TrafficState, tol: float = STATE_TOL) -> bool:
        return self.in_free_domain(u, tol) or self.in_congested_domain(u, tol)

    def in_low_free(self, u: TrafficState, tol: float = STATE_TOL) -> bool:
        """Free state below the critical density (the Omega_f' band)."""
        return self.in_free_domain(u, tol) and u.rho < self.rho_free_crit - tol

    # -- entropy auxiliaries --------------------------------------------------

    def marker_W(self, u: TrafficState) -> float:
        """max(w2, W_c): the conserved marker, continuous on the whole domain."""
        return max(self.w2(u), self.W_c)

    def R_k(self, w: float, k: float) -> float:
        """Abscissa where the line f = rho k meets the extended flow curve of
        marker level w.

        For k below the congested ceiling this is the usual pressure inverse;
        above it, the intersection lies on the chord joining the congested
        ceiling state to the free state of the same marker.
        """
        if w < self.W_c - STATE_TOL or w > self.W_max + STATE_TOL:
            raise OutOfDomain(f"R_k marker {w} outside [{self.W_c}, {self.W_max}]")
        if k < -STATE_TOL or k > self.V_f + STATE_TOL:
            raise OutOfDomain(f"R_k speed {k} outside [0, {self.V_f}]")
        if k <= self.V_c:
            return self.p_inv(w - k)
        rho_hi = self.p_inv(w - self.V_f)   # free-side endpoint of the chord
        rho_lo = self.p_inv(w - self.V_c)   # congested ceiling endpoint
        s = (rho_lo * self.V_c - rho_hi * self.V_f) / (rho_lo - rho_hi)
        return (self.V_f - s) / (k - s) * rho_hi

    def vacuum(self) -> TrafficState:
        return TrafficState(0.0, self.V_max, Phase.FREE)


def validate_laws(v_f, p, rho_free_crit: float, rho_free_max: float,
                  v_crit: float) -> ModelLaws:
    """Build laws, checking the structural hypotheses by dense sampling."""
    return ModelLaws(v_f, p, rho_free_crit, rho_free_max, v_crit)


def _solve_marker_density(v_f, p, w: float, rho_hint_hi: float) -> float:
    """Rightmost root of v_f(rho) + p(rho) = w; used to derive R_f' / R_f''
    from marker levels before laws exist."""
    f = lambda r: v_f(r) + p(r)
    n = 4096
    lo_edge = rho_hint_hi * 1e-9
    hi = rho_hint_hi
    while f(hi) < w:
        hi *= 2.0
        if hi > 1e9:
            raise OutOfDomain(f"v_f + p never reaches {w}")
    # scan for the last upward crossing
    xs = [lo_edge + (hi - lo_edge) * i / n for i in range(n + 1)]
    bracket = None
    for a, b in zip(xs, xs[1:]):
        if f(a) <= w <= f(b):
            bracket = (a, b)
    if bracket is None:
        raise OutOfDomain(f"no upward crossing of v_f + p = {w}")
    return invert_increasing(f, bracket[0], bracket[1], w)


def laws_from_config(cfg: dict) -> ModelLaws:
    """Build laws from a flat mapping (the [model] config block).

    Keys: family (linear), V_max, R, gamma, v_ref, rho_max,
    R_f_prime or W_c, R_f_second or W_max, V_c.
    """
    family = str(cfg.get("family", "linear")).lower()
    if family != "linear":
        raise ValueError(f"unknown speed family {family!r}; plug custom laws in via the API")
    R = float(cfg.get("r", cfg.get("R", math.inf)))
    v_f = LinearFreeSpeed(float(cfg["v_max"]), R)
    p = PowerPressure(float(cfg.get("gamma", 2.0)),
                      cfg.get("v_ref") and float(cfg["v_ref"]),
                      float(cfg.get("rho_max", 1.0)))
    if "r_f_prime" in cfg:
        rf1 = float(cfg["r_f_prime"])
    elif "w_c" in cfg:
        rf1 = _solve_marker_density(v_f, p, float(cfg["w_c"]), 1.0 if math.isinf(R) else R / 2.0)
    else:
        raise ValueError("need R_f_prime or W_c")
    if "r_f_second" in cfg:
        rf2 = float(cfg["r_f_second"])
    elif "w_max" in cfg:
        rf2 = _solve_marker_density(v_f, p, float(cfg["w_max"]), 1.0 if math.isinf(R) else R / 2.0)
    else:
        raise ValueError("need R_f_second or W_max")
    return validate_laws(v_f, p, rf1, rf2, float(cfg["v_c"]))
