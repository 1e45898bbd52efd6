"""Event-driven wave-front tracking.

A piecewise-constant profile is evolved by moving its fronts along straight
lines and re-solving a mesh Riemann problem wherever fronts collide.  The
loop keeps running totals of the coordinate total variation, the wave-count
potential (a Temple-style functional that pays for every wave split), and
the number of phase-boundary fronts.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
from dataclasses import dataclass, field

from .errors import EventOverflow, InvariantViolation, ValueOutsideOmega
from .grid import GridMesh, VACUUM_IW, solve_approx
from .model import ModelLaws, Phase, TrafficState
from .riemann import WaveFan, WaveKind

TIME_GROUP_TOL = 1e-12
MONO_TOL = 1e-10


# ---------------------------------------------------------------------------
# datum description and mesh approximation


@dataclass(frozen=True)
class PiecewiseConstantDatum:
    """Finite piecewise-constant profile: states[i] on (breaks[i-1], breaks[i])."""

    breaks: tuple[float, ...]
    states: tuple[TrafficState, ...]

    def __post_init__(self):
        if len(self.states) != len(self.breaks) + 1:
            raise ValueError("need len(states) == len(breaks) + 1")
        for a, b in zip(self.breaks, self.breaks[1:]):
            if b <= a:
                raise ValueError("breakpoints must increase strictly")

    def evaluate(self, x: float) -> TrafficState:
        return self.states[bisect.bisect_right(self.breaks, x)]

    def tv_coords(self, laws: ModelLaws) -> float:
        return sum(laws.coord_distance(a, b)
                   for a, b in zip(self.states, self.states[1:]))


def _taut_track(brackets: list[tuple[int, int]]) -> list[int]:
    """Minimal-total-variation integer path through index tubes.

    Every forced move exactly spans a gap between consecutive bracket pools,
    which the underlying values must cross as well, so the tracked path never
    has more variation than the input.
    """
    out: list[int] = []
    i = 0
    n = len(brackets)
    cur: int | None = None
    while i < n:
        lo, hi = brackets[i]
        j = i
        while j + 1 < n:
            nlo, nhi = brackets[j + 1]
            if nlo > hi or nhi < lo:
                break
            lo, hi = max(lo, nlo), min(hi, nhi)
            j += 1
        if cur is None:
            if j + 1 < n:
                cur = hi if brackets[j + 1][0] > hi else lo
            else:
                cur = lo
        else:
            cur = min(max(cur, lo), hi)
        out.extend([cur] * (j - i + 1))
        i = j + 1
    return out


def _index_brackets(mesh: GridMesh, u: TrafficState) -> tuple[tuple[int, int], tuple[int, int]]:
    """Velocity- and marker-index tubes bracketing a state."""
    laws = mesh.laws
    if u.phase is Phase.FREE:
        ivb = (mesh.iv_free, mesh.iv_free)
        if laws.degenerate_free and u.rho < laws.rho_free_crit - 1e-12:
            return ivb, (VACUUM_IW, VACUUM_IW)
        w2 = laws.w2(u)
        lo = mesh._floor_w(w2)
        hi = lo if mesh.w_value(lo) >= w2 - 1e-12 else min(lo + 1, mesh.num_w - 1)
        return ivb, (lo, hi)
    lo_v = mesh._floor_v(u.v)
    hi_v = lo_v if mesh.v_value(lo_v) >= u.v - 1e-12 else min(lo_v + 1, mesh.iv_vc)
    w2 = laws.w2(u)
    lo_w = max(mesh._floor_w(w2), mesh.iw_c)
    hi_w = lo_w if mesh.w_value(lo_w) >= w2 - 1e-12 else min(lo_w + 1, mesh.num_w - 1)
    return (lo_v, hi_v), (lo_w, hi_w)


def approximate_datum(datum: PiecewiseConstantDatum, mesh: GridMesh) -> "FrontDiagram":
    """Project a datum onto the mesh and emit the initial raw fronts.

    The projection threads each coordinate through its bracketing mesh
    lines with a minimal-variation tracker, so the coordinate variation of
    the projected datum never exceeds that of the input while every value
    stays within one quantum of the original.
    """
    laws = mesh.laws
    for u in datum.states:
        if not laws.contains(u, tol=1e-9):
            raise ValueOutsideOmega(f"datum value {u} not in the model domain")
    pairs = [_index_brackets(mesh, u) for u in datum.states]
    ivs = _taut_track([p[0] for p in pairs])
    iws = _taut_track([p[1] for p in pairs])
    snapped = [mesh.state(iv, iw) for iv, iw in zip(ivs, iws)]

    fronts: list[DiagramFront] = []
    cur = snapped[0]
    for x, nxt in zip(datum.breaks, snapped[1:]):
        if nxt is cur:
            continue
        # raw datum jumps carry no speed; they are resolved at t = 0
        fronts.append(DiagramFront(x, 0.0, cur, nxt, None))
        cur = nxt
    return FrontDiagram(0.0, snapped[0], fronts)


# ---------------------------------------------------------------------------
# diagrams


@dataclass(frozen=True, slots=True)
class DiagramFront:
    x: float
    speed: float
    left: TrafficState
    right: TrafficState
    kind: WaveKind | None


@dataclass(frozen=True)
class FrontDiagram:
    """Snapshot of the profile: ordered fronts plus the leftmost state."""

    time: float
    left_state: TrafficState
    fronts: list[DiagramFront]

    @property
    def right_state(self) -> TrafficState:
        return self.fronts[-1].right if self.fronts else self.left_state

    def positions(self) -> list[float]:
        return [f.x for f in self.fronts]

    def evaluate(self, x: float) -> TrafficState:
        """Right-continuous evaluation: at a front the right state applies."""
        i = bisect.bisect_right([f.x for f in self.fronts], x)
        return self.left_state if i == 0 else self.fronts[i - 1].right

    def profile(self, xs) -> list[TrafficState]:
        pos = [f.x for f in self.fronts]
        out = []
        for x in xs:
            i = bisect.bisect_right(pos, x)
            out.append(self.left_state if i == 0 else self.fronts[i - 1].right)
        return out


def next_event(diagram: FrontDiagram) -> tuple[float, list[int]] | None:
    """Earliest strictly-future collision among adjacent fronts, with all
    fronts meeting at that same point grouped together."""
    fr = diagram.fronts
    t0 = diagram.time
    best: tuple[float, float] | None = None
    for a, b in zip(fr, fr[1:]):
        dv = a.speed - b.speed
        if dv <= 0:
            continue
        t = t0 + (b.x - a.x) / dv
        if best is None or t < best[0] - TIME_GROUP_TOL:
            best = (t, a.x + a.speed * (t - t0))
    if best is None:
        return None
    t_star, x_star = best
    idx = []
    for i, f in enumerate(fr):
        xt = f.x + f.speed * (t_star - t0)
        if abs(xt - x_star) <= 1e-9 * (1.0 + abs(x_star)):
            idx.append(i)
    return t_star, idx


def resolve_interaction(u_left: TrafficState, u_right: TrafficState,
                        mesh: GridMesh) -> WaveFan:
    """Riemann resolution between the outermost states of a colliding group."""
    return solve_approx(mesh, u_left, u_right)


# ---------------------------------------------------------------------------
# functionals


def _front_measures(mesh: GridMesh, left: TrafficState, right: TrafficState,
                    kind: WaveKind | None) -> tuple[float, float, int]:
    """(tv, temple, is_phase_transition) contributions of one front."""
    laws = mesh.laws
    ivl, iwl = mesh.index_of(left)
    ivr, iwr = mesh.index_of(right)
    dw1 = abs(mesh.v_value(ivl) - mesh.v_value(ivr))
    dw2 = abs(mesh.w_value(iwl) - mesh.w_value(iwr))
    tv = dw1 + dw2
    # the marker drop of a slow contact is counted twice once it exceeds a
    # full quantum: that is the wave-split budget of the functional
    delta = (ivl == ivr and ivl <= mesh.iv_vc and (iwl - iwr) >= 2)
    temple = tv + (dw2 if delta else 0.0)
    is_pt = (left.phase is not right.phase)
    return tv, temple, 1 if is_pt else 0


def tv_coords(mesh: GridMesh, diagram: FrontDiagram) -> float:
    return sum(_front_measures(mesh, f.left, f.right, f.kind)[0] for f in diagram.fronts)


def temple_functional(mesh: GridMesh, diagram: FrontDiagram) -> float:
    return sum(_front_measures(mesh, f.left, f.right, f.kind)[1] for f in diagram.fronts)


def count_phase_transitions(diagram: FrontDiagram) -> int:
    return sum(1 for f in diagram.fronts if f.left.phase is not f.right.phase)


@dataclass
class FunctionalLog:
    """Per-event history of the tracked functionals."""

    ts: list[float] = field(default_factory=list)
    tv: list[float] = field(default_factory=list)
    temple: list[float] = field(default_factory=list)
    waves: list[int] = field(default_factory=list)
    phase_transitions: list[int] = field(default_factory=list)

    def record(self, t, tv, temple, waves, pts):
        self.ts.append(t)
        self.tv.append(tv)
        self.temple.append(temple)
        self.waves.append(waves)
        self.phase_transitions.append(pts)

    def rows(self):
        return zip(self.ts, self.tv, self.temple, self.waves, self.phase_transitions)


# ---------------------------------------------------------------------------
# run history


@dataclass(frozen=True, slots=True)
class FrontRecord:
    """One front over its straight-line lifetime segment."""

    t0: float
    t1: float
    x0: float
    speed: float
    left: TrafficState
    right: TrafficState
    kind: WaveKind | None

    def position(self, t: float) -> float:
        return self.x0 + self.speed * (t - self.t0)

    @property
    def x1(self) -> float:
        return self.position(self.t1)

    def alive_at(self, t: float) -> bool:
        return (self.t0 < t <= self.t1) or (t == self.t0 == 0.0)

    def crossing_time(self, x: float) -> float | None:
        if self.speed == 0.0:
            return None
        t = self.t0 + (x - self.x0) / self.speed
        return t if self.t0 <= t <= self.t1 else None


class _F:
    """Live front in the simulation's doubly linked list."""

    __slots__ = ("x0", "t0", "speed", "left", "right", "kind",
                 "prev", "next", "alive", "tv", "temple", "pt")

    def __init__(self, x0, t0, speed, left, right, kind):
        self.x0 = x0
        self.t0 = t0
        self.speed = speed
        self.left = left
        self.right = right
        self.kind = kind
        self.prev = None
        self.next = None
        self.alive = True

    def position(self, t: float) -> float:
        return self.x0 + self.speed * (t - self.t0)


@dataclass
class RunResult:
    laws: ModelLaws
    mesh: GridMesh
    t_end: float
    records: list[FrontRecord]
    log: FunctionalLog
    initial: FrontDiagram
    final: FrontDiagram
    events: int

    def diagram_at(self, t: float) -> FrontDiagram:
        """Left-continuous-in-time snapshot reconstructed from the records."""
        if not (0.0 <= t <= self.t_end):
            from .errors import OutOfWindow
            raise OutOfWindow(f"t={t} outside [0, {self.t_end}]")
        live = [r for r in self.records if r.alive_at(t)]
        live.sort(key=lambda r: (r.position(t), r.speed))
        fronts = [DiagramFront(r.position(t), r.speed, r.left, r.right, r.kind)
                  for r in live]
        left = live[0].left if live else self.final.left_state
        return FrontDiagram(t, left, fronts)

    def evaluate(self, t: float, x: float) -> TrafficState:
        return self.diagram_at(t).evaluate(x)

    def profile(self, t: float, xs) -> list[TrafficState]:
        return self.diagram_at(t).profile(xs)

    def l1_distance(self, t: float, s: float, window: tuple[float, float] | None = None) -> float:
        """Coordinate-metric L1 distance between the profiles at two times."""
        da, db = self.diagram_at(t), self.diagram_at(s)
        return l1_profile_distance(self.laws, da, db, window)


def l1_profile_distance(laws: ModelLaws, da: FrontDiagram, db: FrontDiagram,
                        window: tuple[float, float] | None = None) -> float:
    pos = sorted(set(da.positions()) | set(db.positions()))
    if window is None:
        if not pos:
            return 0.0
        window = (pos[0] - 1.0, pos[-1] + 1.0)
    lo, hi = window
    cuts = [lo] + [p for p in pos if lo < p < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        mid = 0.5 * (a + b)
        total += laws.coord_distance(da.evaluate(mid), db.evaluate(mid)) * (b - a)
    return total


# ---------------------------------------------------------------------------
# the time loop


def run(diagram: FrontDiagram, t_end: float, mesh: GridMesh, observers=(),
        event_cap: int = 10_000_000, strict: bool = False) -> RunResult:
    """Advance a diagram to t_end, resolving collisions as they come due.

    Raw (unclassified) fronts of the initial diagram are first resolved into
    mesh Riemann fans at t = 0.  The functional log gets one row at t = 0 and
    one per interaction; with strict=True the monotonicity expectations are
    enforced on the fly.
    """
    laws = mesh.laws
    records: list[FrontRecord] = []
    log = FunctionalLog()
    counter = itertools.count()
    heap: list[tuple[float, int, _F, _F]] = []

    # initial resolution of the datum jumps
    head: _F | None = None
    tail: _F | None = None

    def link(f: _F):
        nonlocal head, tail
        f.prev = tail
        if tail is not None:
            tail.next = f
        else:
            head = f
        tail = f

    left_state = diagram.left_state
    for raw in diagram.fronts:
        fan = solve_approx(mesh, raw.left, raw.right)
        for w in fan.waves:
            link(_F(raw.x, 0.0, w.speed, w.left, w.right, w.kind))

    tot_tv = tot_temple = 0.0
    n_waves = n_pts = 0

    def measures(f: _F):
        return _front_measures(mesh, f.left, f.right, f.kind)

    f = head
    while f is not None:
        f.tv, f.temple, f.pt = measures(f)
        tot_tv += f.tv
        tot_temple += f.temple
        n_waves += 1
        n_pts += f.pt
        f = f.next

    log.record(0.0, tot_tv, tot_temple, n_waves, n_pts)

    def pair_time(a: _F, b: _F) -> tuple[float, float] | None:
        dv = a.speed - b.speed
        if dv <= 0.0:
            return None
        t = ((b.x0 - b.speed * b.t0) - (a.x0 - a.speed * a.t0)) / dv
        return (t, a.position(t))

    def push(a: _F | None, b: _F | None, now: float):
        if a is None or b is None:
            return
        tb = pair_time(a, b)
        if tb is None:
            return
        t, x = tb
        if t < now - TIME_GROUP_TOL or t < max(a.t0, b.t0) - TIME_GROUP_TOL:
            return
        heapq.heappush(heap, (t, next(counter), a, b))

    f = head
    while f is not None and f.next is not None:
        push(f, f.next, 0.0)
        f = f.next

    events = 0
    now = 0.0
    while heap:
        t_star, _, fa, fb = heapq.heappop(heap)
        if not (fa.alive and fb.alive and fa.next is fb):
            continue
        tb = pair_time(fa, fb)
        if tb is None or abs(tb[0] - t_star) > TIME_GROUP_TOL * (1.0 + abs(t_star)):
            push(fa, fb, now)
            continue
        if t_star > t_end:
            break
        now = max(now, t_star)
        x_star = fa.position(t_star)

        # gather every front arriving at (t_star, x_star)
        group = [fa, fb]
        tol_t = TIME_GROUP_TOL * (1.0 + abs(t_star))
        tol_x = 1e-9 * (1.0 + abs(x_star))
        g = group[0].prev
        while g is not None:
            tb = pair_time(g, group[0])
            if tb is None or abs(tb[0] - t_star) > tol_t or abs(tb[1] - x_star) > tol_x:
                break
            group.insert(0, g)
            g = g.prev
        g = group[-1].next
        while g is not None:
            tb = pair_time(group[-1], g)
            if tb is None or abs(tb[0] - t_star) > tol_t or abs(tb[1] - x_star) > tol_x:
                break
            group.append(g)
            g = g.next

        u_left, u_right = group[0].left, group[-1].right
        fan = solve_approx(mesh, u_left, u_right)

        pre_tv, pre_temple, pre_waves = tot_tv, tot_temple, n_waves
        pre_pts = n_pts
        for g in group:
            g.alive = False
            records.append(FrontRecord(g.t0, t_star, g.x0, g.speed,
                                       g.left, g.right, g.kind))
            tot_tv -= g.tv
            tot_temple -= g.temple
            n_waves -= 1
            n_pts -= g.pt
        before, after = group[0].prev, group[-1].next

        new_fronts: list[_F] = []
        for w in fan.waves:
            nf = _F(x_star, t_star, w.speed, w.left, w.right, w.kind)
            nf.tv, nf.temple, nf.pt = measures(nf)
            tot_tv += nf.tv
            tot_temple += nf.temple
            n_waves += 1
            n_pts += nf.pt
            new_fronts.append(nf)
        # splice
        prev = before
        for nf in new_fronts:
            nf.prev = prev
            if prev is not None:
                prev.next = nf
            else:
                head = nf
            prev = nf
        if prev is not None:
            prev.next = after
        else:
            head = after
        if after is not None:
            after.prev = prev
        else:
            tail = prev

        if new_fronts:
            push(before, new_fronts[0], now)
            push(new_fronts[-1], after, now)
        else:
            push(before, after, now)

        log.record(t_star, tot_tv, tot_temple, n_waves, n_pts)
        for obs in observers:
            obs(dict(t=t_star, x=x_star, tv=tot_tv, temple=tot_temple,
                     waves=n_waves, phase_transitions=n_pts))

        if strict:
            if tot_tv - pre_tv > MONO_TOL:
                raise InvariantViolation(
                    f"TV increased by {tot_tv - pre_tv} at t={t_star}")
            if tot_temple - pre_temple > MONO_TOL:
                raise InvariantViolation(
                    f"wave potential increased by {tot_temple - pre_temple} at t={t_star}")
            if n_waves > pre_waves and tot_temple - pre_temple > -mesh.eps_w + MONO_TOL:
                raise InvariantViolation(
                    f"wave count grew without paying a quantum at t={t_star}")
            dpt = n_pts - pre_pts
            if dpt > 0 or dpt % 2 != 0:
                raise InvariantViolation(
                    f"phase-transition count changed by {dpt} at t={t_star}")

        events += 1
        if events > event_cap:
            raise EventOverflow(f"more than {event_cap} interactions")

    # close out the survivors
    final_fronts = []
    f = head
    while f is not None:
        records.append(FrontRecord(f.t0, t_end, f.x0, f.speed, f.left, f.right, f.kind))
        final_fronts.append(DiagramFront(f.position(t_end), f.speed,
                                         f.left, f.right, f.kind))
        f = f.next
    final_fronts.sort(key=lambda d: (d.x, d.speed))
    # initial post-resolution snapshot for reference
    init_live = sorted((r for r in records if r.t0 == 0.0),
                       key=lambda r: (r.x0, r.speed))
    init_left = init_live[0].left if init_live else left_state
    initial = FrontDiagram(0.0, init_left,
                           [DiagramFront(r.x0, r.speed, r.left, r.right, r.kind)
                            for r in init_live])
    final_left = final_fronts[0].left if final_fronts else init_left
    final = FrontDiagram(t_end, final_left, final_fronts)
    return RunResult(laws, mesh, t_end, records, log, initial, final, events)


# ---------------------------------------------------------------------------
# randomized data


def random_mesh_datum(mesh: GridMesh, rng, max_jumps: int = 12,
                      x_span: tuple[float, float] = (-10.0, 10.0),
                      vacuum_prob: float = 0.15,
                      free_prob: float = 0.4) -> PiecewiseConstantDatum:
    """Random mesh-valued piecewise-constant datum touching both phases."""
    laws = mesh.laws

    def rand_state() -> TrafficState:
        r = rng.random()
        if r < vacuum_prob:
            if laws.degenerate_free:
                return mesh.state(mesh.iv_free, VACUUM_IW)
            return mesh.state(mesh.iv_free, 0)
        if r < vacuum_prob + free_prob:
            return mesh.state(mesh.iv_free, rng.randrange(mesh.num_w))
        return mesh.state(rng.randrange(mesh.iv_vc + 1),
                          rng.randrange(mesh.iw_c, mesh.num_w))

    n_jumps = rng.randrange(3, max_jumps + 1)
    lo, hi = x_span
    xs = sorted(lo + (hi - lo) * rng.random() for _ in range(n_jumps))
    states = [rand_state()]
    for _ in range(n_jumps):
        nxt = rand_state()
        tries = 0
        while nxt is states[-1] and tries < 20:
            nxt = rand_state()
            tries += 1
        states.append(nxt)
    return PiecewiseConstantDatum(tuple(xs), tuple(states))
