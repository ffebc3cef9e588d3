"""Rectangular wave-packet branches, the guiding velocity field, and trajectories.

The spatial wave is piecewise constant on moving rectangles, one rectangle per
spin component. A pilot-wave particle inside the wave moves with the
weight-averaged group velocity of the branches whose support contains it, so
every trajectory is piecewise linear: straight at the shared velocity inside
an overlap region, then locked to a single branch once the branches separate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BranchCountError, NoSupportError, StepTooLargeError

# Slack for support-containment tests, in absolute length units. Guards
# against float rounding when a particle rides exactly on a packet edge.
SUPPORT_ATOL = 1e-9

# Branch weights below this are treated as absent when building a wave.
WEIGHT_FLOOR = 1e-15


class Spin(enum.Enum):
    UP = "up"
    DOWN = "down"

    def flipped(self) -> "Spin":
        return Spin.DOWN if self is Spin.UP else Spin.UP


class Side(enum.Enum):
    """Which overlap boundary a trajectory crosses first (spatial up/down)."""

    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class SpinorWeights:
    """Complex amplitudes of the spin superposition alpha*|up> + beta*|down>."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"amplitudes must be normalized, |a|^2+|b|^2 = {norm!r}")

    @property
    def p_up(self) -> float:
        return abs(self.alpha) ** 2

    @property
    def p_down(self) -> float:
        return abs(self.beta) ** 2


@dataclass(frozen=True)
class Packet:
    """One rectangular branch of the spatial wave.

    The support at time offset tau from the packet's reference time is
    [center_x + vel_x*tau +- width/2] x [center_z + vel_z*tau +- height/2].
    ``weight`` is the branch's Born weight; it is kept unrenormalized after
    path blocking.
    """

    center_x: float
    center_z: float
    width: float
    height: float
    vel_x: float
    vel_z: float
    spin: Spin
    weight: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("packet extents must be positive")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")

    def support_at(self, tau: float) -> tuple[float, float, float, float]:
        """Return (x_lo, x_hi, z_lo, z_hi) of the support at time offset tau."""
        cx = self.center_x + self.vel_x * tau
        cz = self.center_z + self.vel_z * tau
        return (cx - self.width / 2, cx + self.width / 2,
                cz - self.height / 2, cz + self.height / 2)

    def contains(self, x: float, z: float, tau: float = 0.0) -> bool:
        x_lo, x_hi, z_lo, z_hi = self.support_at(tau)
        return (x_lo - SUPPORT_ATOL <= x <= x_hi + SUPPORT_ATOL
                and z_lo - SUPPORT_ATOL <= z <= z_hi + SUPPORT_ATOL)


@dataclass(frozen=True)
class BranchedWave:
    """Ordered branches sharing one packet geometry, at a common time."""

    branches: tuple[Packet, ...]
    time: float = 0.0

    def __post_init__(self):
        if not self.branches:
            raise BranchCountError("a wave needs at least one branch")
        if len(self.branches) > 2:
            raise BranchCountError(f"at most 2 branches supported, got {len(self.branches)}")
        first = self.branches[0]
        for b in self.branches[1:]:
            if b.width != first.width or b.height != first.height:
                raise ValueError("all branches must share the packet extents")
        spins = [b.spin for b in self.branches]
        if len(set(spins)) != len(spins):
            raise ValueError("at most one branch per spin label")

    @property
    def height(self) -> float:
        return self.branches[0].height

    @property
    def width(self) -> float:
        return self.branches[0].width

    def branch_for(self, spin: Spin) -> Packet | None:
        for b in self.branches:
            if b.spin is spin:
                return b
        return None

    def advanced(self, dt: float) -> "BranchedWave":
        """Free evolution: every branch center moves with its group velocity."""
        moved = tuple(
            replace(b,
                    center_x=b.center_x + b.vel_x * dt,
                    center_z=b.center_z + b.vel_z * dt)
            for b in self.branches
        )
        return BranchedWave(branches=moved, time=self.time + dt)


@dataclass(frozen=True)
class BohmianState:
    """A branched wave plus the particle's definite position."""

    wave: BranchedWave
    pos_x: float
    pos_z: float

    def __post_init__(self):
        if not any(b.weight > 0 and b.contains(self.pos_x, self.pos_z)
                   for b in self.wave.branches):
            raise NoSupportError(
                f"particle at ({self.pos_x}, {self.pos_z}) is outside every "
                f"positive-weight branch at t={self.wave.time}")


@dataclass(frozen=True)
class Trajectory:
    """Sampled particle path: times, positions, and branch occupancy.

    ``occupancy`` uses 1 for the spin-up branch, 2 for spin-down, 3 for the
    overlap of both, 0 for none (only after absorption in chain traces).
    """

    times: np.ndarray
    xs: np.ndarray
    zs: np.ndarray
    occupancy: np.ndarray

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.xs.tolist(), self.zs.tolist()))

    def __len__(self) -> int:
        return len(self.times)


OCCUPANCY_LABELS = {0: "none", 1: "up", 2: "down", 3: "both"}


def make_wave(weights: SpinorWeights, *, height: float, width: float,
              speed: float, center_x: float = 0.0, center_z: float = 0.0,
              time: float = 0.0) -> BranchedWave:
    """Build the pre-measurement wave: coincident branches, one per component.

    Components with vanishing weight are omitted, so eigenstates produce a
    single branch. Branch order is spin-up first.
    """
    branches = []
    for spin, w in ((Spin.UP, weights.p_up), (Spin.DOWN, weights.p_down)):
        if w > WEIGHT_FLOOR:
            branches.append(Packet(center_x=center_x, center_z=center_z,
                                   width=width, height=height,
                                   vel_x=speed, vel_z=0.0,
                                   spin=spin, weight=w))
    return BranchedWave(branches=tuple(branches), time=time)


def make_initial_state(weights: SpinorWeights, z0: float, *, height: float,
                       width: float, speed: float) -> BohmianState:
    """Initial Bohmian state: packet centered at the origin, particle at z0.

    The transverse coordinate z0 is the only sampled hidden variable; the
    particle rides at the packet center in x, which is exact here because
    every branch shares the same forward velocity.
    """
    if abs(z0) > height / 2:
        raise ValueError(f"z0={z0} outside the packet height [{-height/2}, {height/2}]")
    wave = make_wave(weights, height=height, width=width, speed=speed)
    return BohmianState(wave=wave, pos_x=0.0, pos_z=z0)


def velocity_at(wave: BranchedWave, point: tuple[float, float]) -> tuple[float, float]:
    """Guiding velocity at ``point``: the weight-averaged branch velocity.

    Each branch contributes its full weight when its support contains the
    point and nothing otherwise, so inside an overlap the particle moves at
    (w_up*v_up + w_dn*v_dn) / (w_up + w_dn) and inside a single branch it
    moves exactly at that branch's group velocity.

    Raises NoSupportError when no positive-weight branch contains the point.
    """
    x, z = point
    num_x = num_z = den = 0.0
    for b in wave.branches:
        if b.weight > 0.0 and b.contains(x, z):
            num_x += b.weight * b.vel_x
            num_z += b.weight * b.vel_z
            den += b.weight
    if den == 0.0:
        raise NoSupportError(f"no branch supports point ({x}, {z}) at t={wave.time}")
    return num_x / den, num_z / den


def split_exit(p_up: float, offset: float, u: float, a: float) -> tuple[Side, float]:
    """Exit side and overlap-exit time for a symmetric two-branch split.

    Works in the frame of the (coincident) pre-kick branch centers: the
    up-kicked branch carries weight fraction ``p_up`` and velocity +u, the
    other 1 - p_up and -u, and the particle starts at ``offset`` from the
    common center. Inside the shrinking overlap the particle moves at
    (2*p_up - 1)*u; it exits up if it meets the upper overlap boundary
    (closing at speed u) before the lower one, i.e. iff

        offset >= -a*(2*p_up - 1)/2.

    Born consistency fixes the factor 2 in the denominator: offsets are
    uniform on [-a/2, a/2], so the up fraction (a/2 - threshold)/a equals
    p_up only for this threshold. Exact ties go up (a measure-zero choice
    made for reproducibility). Crossing times simplify to
    (a/2 -+ offset) / (2*u*p), which stays meaningful as either weight
    approaches zero: the vanished branch is never joined.
    """
    if u <= 0 or a <= 0:
        raise ValueError("kick and packet height must be positive")
    if not 0.0 <= p_up <= 1.0:
        raise ValueError(f"p_up must lie in [0, 1], got {p_up}")
    if abs(offset) > a / 2 + SUPPORT_ATOL:
        raise ValueError(f"offset {offset} outside the packet height")
    p, q = p_up, 1.0 - p_up
    t_up = math.inf if p == 0.0 else (a / 2 - offset) / (2.0 * u * p)
    t_dn = math.inf if q == 0.0 else (a / 2 + offset) / (2.0 * u * q)
    if t_up <= t_dn:
        return Side.UP, t_up
    return Side.DOWN, t_dn


def split_threshold(p_up: float, u: float, a: float) -> float:
    """Offset above which a split trajectory exits through the upper boundary."""
    return -a * (2.0 * p_up - 1.0) / 2.0


def analytic_exit(weights: SpinorWeights, z0: float, u: float, a: float) -> tuple[Side, float]:
    """Closed-form exit side for the spin-up-goes-up kick assignment.

    Models an upward kick +u on the |up> component and -u on |down> applied
    at t=0 to coincident branches centered on z=0, with the particle at z0.
    Returns the exit side and the time at which the particle leaves the
    two-branch overlap region.
    """
    return split_exit(weights.p_up, z0, u, a)


def piecewise_offset(p_up: float, offset: float, u: float, a: float, t: float) -> float:
    """Analytic particle offset at time t >= 0 after a symmetric split."""
    side, t_exit = split_exit(p_up, offset, u, a)
    drift = (2.0 * p_up - 1.0) * u
    inside = min(t, t_exit)
    after = max(0.0, t - t_exit)
    sgn = u if side is Side.UP else -u
    return offset + drift * inside + sgn * after


def sample_qeh(height: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n initial transverse positions from the packet's position density.

    The squared wave is constant on the rectangle, so the transverse marginal
    is uniform on [-height/2, height/2].
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return rng.uniform(-height / 2, height / 2, size=n)


class _FieldArrays:
    """Branch data unpacked for vectorized field evaluation."""

    __slots__ = ("t0", "weights", "vels", "centers", "half", "spin_codes")

    def __init__(self, wave: BranchedWave):
        self.t0 = wave.time
        self.weights = [b.weight for b in wave.branches]
        self.vels = [b.vel_z for b in wave.branches]
        self.centers = [b.center_z for b in wave.branches]
        self.half = wave.height / 2
        self.spin_codes = [1 if b.spin is Spin.UP else 2 for b in wave.branches]

    def memberships(self, t: float, z: np.ndarray) -> list[np.ndarray]:
        out = []
        for c0, v in zip(self.centers, self.vels):
            c = c0 + v * (t - self.t0)
            out.append(np.abs(z - c) <= self.half + SUPPORT_ATOL)
        return out

    def vz(self, t: float, z: np.ndarray, active: np.ndarray,
           snap_slack: float) -> np.ndarray:
        """Transverse field on active samples, with near-edge fallback.

        Samples marginally outside every support (within ``snap_slack`` of an
        edge) take the velocity of the nearest branch, the spatially upper
        one on an exact tie. This is the dynamical counterpart of the
        exit-tie rule and only ever fires on the measure-zero separatrix.
        """
        num = np.zeros_like(z)
        den = np.zeros_like(z)
        for w, v, inside in zip(self.weights, self.vels, self.memberships(t, z)):
            if w <= 0.0:
                continue
            num += np.where(inside, w * v, 0.0)
            den += np.where(inside, w, 0.0)
        out = np.divide(num, den, out=np.zeros_like(z), where=den > 0)
        gap = active & (den == 0)
        if np.any(gap):
            out[gap] = self._nearest_branch_vel(t, z[gap], snap_slack)
        return out

    def _nearest_branch_vel(self, t: float, z: np.ndarray, slack: float) -> np.ndarray:
        best_d = np.full(z.shape, np.inf)
        best_v = np.zeros_like(z)
        best_c = np.full(z.shape, -np.inf)
        for w, v, c0 in zip(self.weights, self.vels, self.centers):
            if w <= 0.0:
                continue
            c = c0 + v * (t - self.t0)
            d = np.maximum(np.abs(z - c) - self.half, 0.0)
            closer = (d < best_d) | ((d == best_d) & (c > best_c))
            best_d = np.where(closer, d, best_d)
            best_v = np.where(closer, v, best_v)
            best_c = np.where(closer, c, best_c)
        if np.any(best_d > slack):
            worst = float(np.max(best_d))
            raise NoSupportError(
                f"sample left every branch support by {worst:.3g} at t={t:.6g}")
        return best_v

    def nearest_edge_snap(self, t: float, z: np.ndarray, active: np.ndarray,
                          slack: float) -> np.ndarray:
        """Pull unsupported active samples back onto the nearest support edge."""
        den = np.zeros_like(z)
        for w, inside in zip(self.weights, self.memberships(t, z)):
            if w > 0.0:
                den += np.where(inside, w, 0.0)
        gap = active & (den == 0)
        if not np.any(gap):
            return z
        z = z.copy()
        zg = z[gap]
        best_d = np.full(zg.shape, np.inf)
        best_z = zg.copy()
        best_c = np.full(zg.shape, -np.inf)
        for w, v, c0 in zip(self.weights, self.vels, self.centers):
            if w <= 0.0:
                continue
            c = c0 + v * (t - self.t0)
            snapped = np.clip(zg, c - self.half, c + self.half)
            d = np.abs(zg - snapped)
            closer = (d < best_d) | ((d == best_d) & (c > best_c))
            best_d = np.where(closer, d, best_d)
            best_z = np.where(closer, snapped, best_z)
            best_c = np.where(closer, c, best_c)
        if np.any(best_d > slack):
            worst = float(np.max(best_d))
            raise NoSupportError(
                f"sample left every branch support by {worst:.3g} at t={t:.6g}")
        z[gap] = best_z
        return z

    def occupancy(self, t: float, z: np.ndarray) -> np.ndarray:
        codes = np.zeros(z.shape, dtype=np.int8)
        for code, w, inside in zip(self.spin_codes, self.weights,
                                   self.memberships(t, z)):
            if w > 0.0:
                codes |= np.where(inside, np.int8(code), np.int8(0))
        return codes


def max_transverse_speed(wave: BranchedWave) -> float:
    return max(abs(b.vel_z) for b in wave.branches)


def check_step(wave: BranchedWave, dt: float) -> None:
    """Reject steps that move a branch more than 1% of its height."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    vmax = max_transverse_speed(wave)
    if vmax > 0 and dt * vmax > wave.height / 100:
        raise StepTooLargeError(
            f"dt*v = {dt * vmax:.3g} exceeds height/100 = {wave.height / 100:.3g}")


def rk4_transverse(wave: BranchedWave, z0s: np.ndarray, t_end: float, dt: float,
                   active: np.ndarray | None = None
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate many transverse trajectories against one evolving wave.

    Classical fixed-step 4th-order scheme; branch supports move analytically
    to every stage time. The forward motion is not integrated because all
    branches share it. Returns (times, Z, occupancy) with Z of shape
    (len(z0s), len(times)); row i is NaN wherever sample i is inactive.
    """
    check_step(wave, dt)
    t0 = wave.time
    if t_end < t0:
        raise ValueError(f"t_end={t_end} precedes the wave time {t0}")
    field = _FieldArrays(wave)
    z = np.asarray(z0s, dtype=float).copy()
    if active is None:
        active = np.ones(z.shape, dtype=bool)
    else:
        active = active.copy()
    slack = dt * max(max_transverse_speed(wave), 1.0) + SUPPORT_ATOL

    n_steps = max(1, math.ceil((t_end - t0) / dt - 1e-12)) if t_end > t0 else 0
    times = np.empty(n_steps + 1)
    Z = np.empty((z.size, n_steps + 1))
    occ = np.zeros((z.size, n_steps + 1), dtype=np.int8)

    def record(k: int, t: float):
        times[k] = t
        Z[:, k] = np.where(active, z, np.nan)
        occ[active, k] = field.occupancy(t, z[active])

    record(0, t0)
    t = t0
    for k in range(n_steps):
        h = min(dt, t_end - t)
        z = field.nearest_edge_snap(t, z, active, slack)
        k1 = field.vz(t, z, active, slack)
        k2 = field.vz(t + h / 2, z + h / 2 * k1, active, slack)
        k3 = field.vz(t + h / 2, z + h / 2 * k2, active, slack)
        k4 = field.vz(t + h, z + h * k3, active, slack)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (k + 1) * dt if k + 1 < n_steps else t_end
        record(k + 1, t)
    return times, Z, occ


def integrate_trajectory(state: BohmianState, dt: float, t_end: float) -> Trajectory:
    """Integrate one particle path from the state's time to t_end.

    Fixed-step so that identical inputs give bit-identical paths. The final
    position lands within a few steps' drift of the analytic piecewise
    solution; only a particle started exactly on the up/down separatrix is
    resolved by the tie rule (it follows the upper branch).
    """
    wave = state.wave
    times, Z, occ = rk4_transverse(wave, np.array([state.pos_z]), t_end, dt)
    vel_x = wave.branches[0].vel_x
    xs = state.pos_x + vel_x * (times - wave.time)
    return Trajectory(times=times, xs=xs, zs=Z[0], occupancy=occ[0])
