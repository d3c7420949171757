"""Contact schedules, convex foot regions and swing height profiles."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .model import NUM_LEGS, PAIR_OF, SIDE_BY_SIDE_PAIRS, FootId

Mode = tuple[bool, bool, bool, bool, bool, bool]

ALL_STANCE: Mode = (True,) * NUM_LEGS
# alternating tripods: [LF, RF, MR] and [MF, LR, RR]
TRIPOD_A: Mode = tuple(f in (FootId.LF, FootId.RF, FootId.MR) for f in FootId)
TRIPOD_B: Mode = tuple(f in (FootId.MF, FootId.LR, FootId.RR) for f in FootId)


class ScheduleError(ValueError):
    pass


class ConvexRegion:
    """Planar region {p : A p + b >= 0}; must contain a strictly interior point."""

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(self.A.shape[0])
        if self.A.shape[1] != 2:
            raise ScheduleError("region rows must be 2-D half-planes")
        self.interior = self._find_interior()

    def _find_interior(self) -> np.ndarray:
        # Chebyshev-style LP: maximize margin t with A p + b >= t * ||row||
        norms = np.linalg.norm(self.A, axis=1)
        if np.any(norms < 1e-12):
            raise ScheduleError("degenerate half-plane row")
        # variables (px, py, t): minimize -t  s.t.  -A p + norms * t <= b
        c = np.array([0.0, 0.0, -1.0])
        A_ub = np.hstack([-self.A, norms[:, None]])
        res = linprog(c, A_ub=A_ub, b_ub=self.b, bounds=[(-1e6, 1e6)] * 2 + [(None, 1e6)], method="highs")
        if not res.success or res.x[2] <= 1e-9:
            raise ScheduleError("region is empty (no strictly interior point)")
        return res.x[:2].copy()

    def residuals(self, xy) -> np.ndarray:
        return self.A @ np.asarray(xy, dtype=float) + self.b

    def contains(self, xy, margin: float = 0.0) -> bool:
        return bool(np.all(self.residuals(xy) >= margin))

    def project(self, xy, margin: float = 0.0, iters: int = 32) -> np.ndarray:
        """Point inside the (margin-shrunk) region closest-ish to xy (cyclic projection)."""
        p = np.asarray(xy, dtype=float).copy()
        for _ in range(iters):
            r = self.A @ p + self.b - margin
            k = int(np.argmin(r))
            if r[k] >= -1e-12:
                return p
            row = self.A[k]
            p -= (r[k] / (row @ row)) * row
        return p

    @staticmethod
    def box(x0, x1, y0, y1) -> "ConvexRegion":
        A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        b = np.array([-x0, x1, -y0, y1])
        return ConvexRegion(A, b)


class SwingProfile:
    """Foot height reference: two cubic segments, lift-off -> apex -> touch-down.

    Zero velocity at both ends and at the apex; monotone on each half.
    """

    def __init__(self, t_start: float, t_end: float, lift_height: float,
                 touchdown_height: float, apex_clearance: float):
        if t_end <= t_start:
            raise ScheduleError("swing phase must have positive duration")
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.t_mid = 0.5 * (t_start + t_end)
        self.lift_height = float(lift_height)
        self.touchdown_height = float(touchdown_height)
        self.apex = max(lift_height, touchdown_height) + float(apex_clearance)

    def _segment(self, t: float):
        if t <= self.t_mid:
            return self.t_start, self.t_mid, self.lift_height, self.apex
        return self.t_mid, self.t_end, self.apex, self.touchdown_height

    def height(self, t: float) -> float:
        t = min(max(t, self.t_start), self.t_end)
        a, b, z0, z1 = self._segment(t)
        s = (t - a) / (b - a)
        return z0 + (z1 - z0) * s * s * (3.0 - 2.0 * s)

    def velocity(self, t: float) -> float:
        if t < self.t_start or t > self.t_end:
            return 0.0
        a, b, z0, z1 = self._segment(t)
        s = (t - a) / (b - a)
        return (z1 - z0) * 6.0 * s * (1.0 - s) / (b - a)


@dataclass
class SwingPhase:
    foot: FootId
    t_start: float
    t_end: float
    lift_height: float
    touchdown_height: float
    apex_clearance: float
    first_half_region: ConvexRegion | None = None
    second_half_region: ConvexRegion | None = None
    touchdown_xy: np.ndarray | None = None

    def __post_init__(self):
        self.profile = SwingProfile(self.t_start, self.t_end, self.lift_height,
                                    self.touchdown_height, self.apex_clearance)

    @property
    def t_mid(self) -> float:
        return 0.5 * (self.t_start + self.t_end)

    def ascending(self, tol: float = 1e-9) -> bool:
        return self.touchdown_height > self.lift_height + tol

    def descending(self, tol: float = 1e-9) -> bool:
        return self.touchdown_height < self.lift_height - tol

    def active_region(self, t: float) -> ConvexRegion | None:
        """Half-swing collision-avoidance window (ascending: first half; descending: second)."""
        if self.ascending():
            return self.first_half_region if t < self.t_mid else None
        if self.descending():
            return self.second_half_region if t >= self.t_mid else None
        return None


@dataclass
class StancePhase:
    foot: FootId
    t_start: float
    t_end: float
    height: float
    region: ConvexRegion | None = None


@dataclass
class ContactSchedule:
    """Mode sequence with switching times plus per-foot phase metadata."""

    times: list[float]          # segment boundaries, len M+1, strictly increasing
    modes: list[Mode]           # len M, exactly one active at any t
    stance_phases: dict[FootId, list[StancePhase]] = field(default_factory=dict)
    swing_phases: dict[FootId, list[SwingPhase]] = field(default_factory=dict)
    feasible: bool = True
    notes: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(self.modes) != len(t) - 1:
            raise ScheduleError("need one mode per segment")
        if np.any(np.diff(t) <= 0):
            raise ScheduleError("switching times must be strictly increasing")
        for m in self.modes:
            if len(m) != NUM_LEGS:
                raise ScheduleError("mode must carry 6 contact flags")
        for foot, phases in self.swing_phases.items():
            for ph in phases:
                if not np.isfinite(ph.lift_height) or not np.isfinite(ph.touchdown_height):
                    raise ScheduleError(f"swing phase of {foot.name} missing heights")

    @property
    def t_start(self) -> float:
        return self.times[0]

    @property
    def t_end(self) -> float:
        return self.times[-1]

    def covers(self, t0: float, t1: float) -> bool:
        return self.t_start <= t0 + 1e-12 and self.t_end >= t1 - 1e-12

    def segment_index(self, t: float) -> int:
        i = bisect_right(self.times, t) - 1
        return min(max(i, 0), len(self.modes) - 1)

    def mode_at(self, t: float) -> Mode:
        return self.modes[self.segment_index(t)]

    def boundaries_in(self, t0: float, t1: float) -> list[float]:
        return [t for t in self.times[1:-1] if t0 + 1e-12 < t < t1 - 1e-12]

    def in_stance(self, foot: FootId, t: float) -> bool:
        return bool(self.mode_at(t)[int(foot)])

    def swing_phase_at(self, foot: FootId, t: float) -> SwingPhase | None:
        for ph in self.swing_phases.get(foot, []):
            if ph.t_start - 1e-12 <= t < ph.t_end - 1e-12:
                return ph
        return None

    def stance_phase_at(self, foot: FootId, t: float) -> StancePhase | None:
        for ph in self.stance_phases.get(foot, []):
            if ph.t_start - 1e-12 <= t < ph.t_end + 1e-12:
                return ph
        return None

    def contact_height(self, foot: FootId, t: float) -> float:
        ph = self.stance_phase_at(foot, t)
        return ph.height if ph is not None else np.nan


def dedup_stance_feet(mode: Mode) -> list[FootId]:
    """Stance feet that keep their velocity rows after side-by-side deduplication.

    When both feet of a lateral pair are in stance, only the first pair member
    (LF, MF, LR) keeps Eqs-style rows; otherwise the stance member keeps them.
    """
    kept = []
    for a, b in SIDE_BY_SIDE_PAIRS:
        sa, sb = mode[int(a)], mode[int(b)]
        if sa and sb:
            kept.append(a)
        elif sa:
            kept.append(a)
        elif sb:
            kept.append(b)
    return kept
