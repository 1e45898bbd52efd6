"""Dyadic state mesh and the approximate Riemann solver with discretized
rarefactions.

Nodes are addressed by integer indices (iv, iw) into cached coordinate
arrays, so states snapped to the mesh compare exactly and repeated solves
never re-run root finders.
"""

from __future__ import annotations

import math

from .errors import NotOnMesh, ValueOutsideOmega
from .model import ModelLaws, Phase, TrafficState
from .riemann import Wave, WaveFan, WaveKind, sigma

_IDX_GUARD = 1e-9      # index-space slack when flooring coordinates
VACUUM_IW = -1         # synthetic marker index for vacuum under constant v_f


class GridMesh:
    """Mesh of admissible states at refinement level n.

    Velocity nodes are the dyadic multiples of eps_v up to the congested
    ceiling plus the free speed; marker nodes are dyadic multiples of eps_w
    spanning the marker range, with the top of the range adjoined as an
    extra (possibly off-lattice) node.
    """

    def __init__(self, laws: ModelLaws, n: int):
        if n < 1:
            raise ValueError("refinement level must be >= 1")
        self.laws = laws
        self.n = n
        two_n = 1 << n
        self.eps_v = laws.V_c / two_n

        if laws.degenerate_free:
            # constant free speed: the sub-critical marker band collapses,
            # so the quantum is taken from the congested marker span instead
            w_base = laws.W_c
            span = laws.W_max - laws.W_c
            self._iw_c = 0
        else:
            w_base = laws.W_min
            span = laws.W_c - laws.W_min
            self._iw_c = two_n
        self.eps_w = span / two_n

        m = int(math.floor((laws.W_max - w_base) / self.eps_w + _IDX_GUARD))
        self.w_values = [w_base + i * self.eps_w for i in range(m + 1)]
        if laws.W_max - self.w_values[-1] > 1e-9 * self.eps_w:
            self.w_values.append(laws.W_max)
        self.v_values = [i * self.eps_v for i in range(two_n + 1)] + [laws.V_f]
        self.iv_free = two_n + 1
        self.iv_vc = two_n

        self._states: dict[tuple[int, int], TrafficState] = {}
        self._rev: dict[tuple[float, float], tuple[int, int]] = {}

    # -- node access ---------------------------------------------------------

    @property
    def iw_c(self) -> int:
        return self._iw_c

    @property
    def num_w(self) -> int:
        return len(self.w_values)

    def w_value(self, iw: int) -> float:
        if iw == VACUUM_IW:
            return self.laws.W_c
        return self.w_values[iw]

    def v_value(self, iv: int) -> float:
        return self.v_values[iv]

    def state(self, iv: int, iw: int) -> TrafficState:
        key = (iv, iw)
        cached = self._states.get(key)
        if cached is not None:
            return cached
        laws = self.laws
        if iv == self.iv_free:
            if iw == VACUUM_IW:
                u = laws.vacuum()
            else:
                rho = laws.free_rho_from_marker(self.w_values[iw])
                u = TrafficState(rho, laws.v_free(rho), Phase.FREE)
        else:
            if not (0 <= iv <= self.iv_vc and self._iw_c <= iw < len(self.w_values)):
                raise NotOnMesh(f"no congested node at (iv={iv}, iw={iw})")
            v = self.v_values[iv]
            rho = laws.p_inv(self.w_values[iw] - v)
            u = TrafficState(rho, v, Phase.CONGESTED)
        self._states[key] = u
        self._rev[(u.rho, u.v)] = key
        return u

    def nodes(self):
        """All node ids (congested box plus the free line)."""
        for iw in range(self._iw_c, len(self.w_values)):
            for iv in range(self.iv_vc + 1):
                yield (iv, iw)
        for iw in range(len(self.w_values)):
            yield (self.iv_free, iw)
        if self.laws.degenerate_free:
            yield (self.iv_free, VACUUM_IW)

    # -- coordinate -> index -------------------------------------------------

    def _floor_w(self, w2: float) -> int:
        last = len(self.w_values) - 1
        if w2 >= self.w_values[last] - 1e-9 * self.eps_w:
            return last
        base = self.w_values[0]
        i = int(math.floor((w2 - base) / self.eps_w + _IDX_GUARD))
        return min(max(i, 0), last)

    def _floor_v(self, v: float) -> int:
        i = int(math.floor(v / self.eps_v + _IDX_GUARD))
        return min(max(i, 0), self.iv_vc)

    def snap(self, u: TrafficState) -> TrafficState:
        """Componentwise floor of the coordinates to mesh lines, clamped into
        the admissible box.  Order-preserving in each coordinate."""
        laws = self.laws
        if not laws.contains(u, tol=1e-9):
            raise ValueOutsideOmega(f"{u} not in the model domain")
        if u.phase is Phase.FREE:
            if laws.degenerate_free and u.rho < laws.rho_free_crit - 1e-12:
                # sub-critical free densities are indistinguishable in
                # coordinates here; floor in density lands on vacuum
                return self.state(self.iv_free, VACUUM_IW)
            return self.state(self.iv_free, self._floor_w(laws.w2(u)))
        iw = max(self._floor_w(laws.w2(u)), self._iw_c)
        return self.state(self._floor_v(u.v), iw)

    def index_of(self, u: TrafficState) -> tuple[int, int]:
        key = self._rev.get((u.rho, u.v))
        if key is not None:
            return key
        # tolerate externally built copies of node states
        snapped = self.snap(u)
        cand = [self._rev[(snapped.rho, snapped.v)]]
        iv, iw = cand[0]
        if iw + 1 < len(self.w_values):
            cand.append((iv, iw + 1))
        if iv < self.iv_vc and iv != self.iv_free:
            cand.append((iv + 1, iw))
        for iv2, iw2 in cand:
            try:
                node = self.state(iv2, iw2)
            except NotOnMesh:
                continue
            if self.laws.states_equal(node, u, tol=1e-9):
                return (iv2, iw2)
        raise NotOnMesh(f"{u} is not a mesh node")

    def contains_state(self, u: TrafficState) -> bool:
        try:
            self.index_of(u)
            return True
        except (NotOnMesh, ValueOutsideOmega):
            return False


def _free_wave_kind(laws: ModelLaws) -> WaveKind:
    return WaveKind.CONTACT if laws.degenerate_free else WaveKind.RAREFACTION_STEP


def _append_jump(fan: WaveFan, kind: WaveKind, a: TrafficState, b: TrafficState) -> None:
    s = sigma(a, b)
    fan.waves.append(Wave(kind, a, b, s, s))


def solve_approx(mesh: GridMesh, u_l: TrafficState, u_r: TrafficState) -> WaveFan:
    """Mesh-valued Riemann solver: rarefactions become chains of jumps
    between consecutive nodes along the corresponding wave curve, each jump
    travelling at its own mass-conserving speed."""
    laws = mesh.laws
    ivl, iwl = mesh.index_of(u_l)
    ivr, iwr = mesh.index_of(u_r)
    u_l = mesh.state(ivl, iwl)
    u_r = mesh.state(ivr, iwr)
    fan = WaveFan(u_l, u_r)
    if (ivl, iwl) == (ivr, iwr):
        return fan

    def free_chain(a_iw: int, b_iw: int, a: TrafficState, b: TrafficState) -> None:
        # decreasing density <=> decreasing marker index on the free line.
        # Keeping every jump at one marker quantum (also for the contacts of
        # a constant free speed) is what lets the wave potential only ever
        # see single-quantum drops arriving at a phase boundary.
        kind = _free_wave_kind(laws)
        if a_iw - b_iw == 1:
            _append_jump(fan, kind, a, b)
            return
        prev = a
        for iw in range(a_iw - 1, max(b_iw, 0), -1):
            nxt = mesh.state(mesh.iv_free, iw)
            _append_jump(fan, kind, prev, nxt)
            prev = nxt
        _append_jump(fan, kind, prev, b)

    def congested_chain(a_iv: int, b_iv: int, iw: int, a: TrafficState, b: TrafficState) -> None:
        prev = a
        for iv in range(a_iv + 1, b_iv):
            nxt = mesh.state(iv, iw)
            _append_jump(fan, WaveKind.RAREFACTION_STEP, prev, nxt)
            prev = nxt
        _append_jump(fan, WaveKind.RAREFACTION_STEP, prev, b)

    lf, rf = ivl == mesh.iv_free, ivr == mesh.iv_free

    if lf and rf:
        if iwl < iwr:
            _append_jump(fan, WaveKind.CONTACT if laws.degenerate_free
                         else WaveKind.SHOCK, u_l, u_r)
        else:
            free_chain(iwl, iwr, u_l, u_r)
        return fan

    if not lf and not rf:
        u_m = mesh.state(ivr, iwl)
        if ivr < ivl:
            _append_jump(fan, WaveKind.SHOCK, u_l, u_m)
        elif ivr > ivl:
            congested_chain(ivl, ivr, iwl, u_l, u_m)
        if iwl != iwr:
            _append_jump(fan, WaveKind.CONTACT, u_m, u_r)
        return fan

    if lf:
        # free -> congested: one phase transition, then a possibly-null contact
        if u_l.rho == 0.0:
            _append_jump(fan, WaveKind.PHASE_TRANSITION, u_l, u_r)
            return fan
        iw_m = max(mesh.iw_c, iwl)
        u_m = mesh.state(ivr, iw_m)
        _append_jump(fan, WaveKind.PHASE_TRANSITION, u_l, u_m)
        if iw_m != iwr:
            _append_jump(fan, WaveKind.CONTACT, u_m, u_r)
        return fan

    # congested -> free: possibly-null 1-wave up to the congested ceiling,
    # one phase transition, then a possibly-null free wave
    u_m1 = mesh.state(mesh.iv_vc, iwl)
    if ivl < mesh.iv_vc:
        congested_chain(ivl, mesh.iv_vc, iwl, u_l, u_m1)
    u_m2 = mesh.state(mesh.iv_free, iwl)
    _append_jump(fan, WaveKind.PHASE_TRANSITION, u_m1, u_m2)
    if iwl != iwr or (u_r.rho != u_m2.rho):
        if iwl < iwr:
            _append_jump(fan, WaveKind.CONTACT if laws.degenerate_free
                         else WaveKind.SHOCK, u_m2, u_r)
        else:
            free_chain(iwl, iwr, u_m2, u_r)
    return fan
