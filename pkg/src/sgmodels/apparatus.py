"""Stern-Gerlach devices, chains of devices, and the pilot-wave chain runner.

A device imparts an instantaneous, spin-dependent transverse kick to every
branch at its plane. Polarity decides the sign convention: an S device sends
the spin-up component upward, an N device sends it downward. Path blocking
and recollimation make repeated measurements on the surviving conditional
wave possible, which is what the multi-device chains exercise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .errors import BranchCountError, NoSupportError, ValidationError
from .wavepacket import (
    SUPPORT_ATOL,
    BohmianState,
    BranchedWave,
    Packet,
    Side,
    Spin,
    SpinorWeights,
    _FieldArrays,
    make_initial_state,
    make_wave,
    max_transverse_speed,
    piecewise_offset,
    rk4_transverse,
    split_exit,
    velocity_at,
)

_COINCIDENCE_ATOL = 1e-9


class Polarity(enum.Enum):
    S = "S"
    N = "N"

    def opposite(self) -> "Polarity":
        return Polarity.N if self is Polarity.S else Polarity.S


class OutputPath(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class SGDeviceSpec:
    """One device: polarity, kick magnitude, and the plane where it acts."""

    polarity: Polarity
    kick: float
    plane_x: float

    def __post_init__(self):
        if self.kick <= 0:
            raise ValueError(f"kick must be positive, got {self.kick}")


@dataclass(frozen=True)
class Device:
    spec: SGDeviceSpec


@dataclass(frozen=True)
class Block:
    """Screen absorbing one output path, placed at plane_x."""

    path: OutputPath
    plane_x: float


@dataclass(frozen=True)
class Recollimate:
    """Reversed-polarity device that cancels the previous transverse kick."""

    spec: SGDeviceSpec


ChainElement = Union[Device, Block, Recollimate]


@dataclass(frozen=True)
class Geometry:
    """Shared packet and chain layout parameters.

    Dimensionless by default: lengths in units of the packet height, times in
    units of height/kick. ``spacing`` is the distance between consecutive
    element planes; it must leave room for branch separation after a device.
    """

    height: float = 1.0
    width: float = 0.05
    kick: float = 1.0
    speed: float = 1.0
    dt: float = 0.001
    spacing: float = 1.0

    def __post_init__(self):
        for name in ("height", "width", "kick", "speed", "dt", "spacing"):
            if getattr(self, name) <= 0:
                raise ValueError(f"geometry field {name} must be positive")

    @property
    def separation_time(self) -> float:
        """Time for two kicked branches to become spatially disjoint."""
        return self.height / (2 * self.kick)

    @property
    def separation_run(self) -> float:
        """Forward distance covered while branches separate."""
        return self.speed * self.separation_time


DEFAULT_GEOMETRY = Geometry()


@dataclass(frozen=True)
class DeviceEvent:
    polarity: Polarity
    path: OutputPath
    spin: Spin


@dataclass(frozen=True)
class BlockEvent:
    blocked: OutputPath
    survived: bool


@dataclass(frozen=True)
class OutcomeRecord:
    """Per-run log: one DeviceEvent per device, one BlockEvent per screen."""

    events: tuple[Union[DeviceEvent, BlockEvent], ...]

    @property
    def absorbed(self) -> bool:
        return any(isinstance(e, BlockEvent) and not e.survived for e in self.events)

    @property
    def device_events(self) -> tuple[DeviceEvent, ...]:
        return tuple(e for e in self.events if isinstance(e, DeviceEvent))

    @property
    def first(self) -> DeviceEvent:
        return self.device_events[0]

    @property
    def final(self) -> DeviceEvent:
        return self.device_events[-1]


def kick_velocity(polarity: Polarity, spin: Spin, u: float) -> float:
    """Signed transverse kick a device of given polarity gives a spin component."""
    up_sign = 1.0 if polarity is Polarity.S else -1.0
    return up_sign * u if spin is Spin.UP else -up_sign * u


def assigned_spin(polarity: Polarity, path: OutputPath) -> Spin:
    """Spin value assigned to a given exit path: upper from S means up."""
    if polarity is Polarity.S:
        return Spin.UP if path is OutputPath.UPPER else Spin.DOWN
    return Spin.DOWN if path is OutputPath.UPPER else Spin.UP


def _kicked(wave: BranchedWave, spec: SGDeviceSpec) -> BranchedWave:
    branches = tuple(
        replace(b, vel_z=b.vel_z + kick_velocity(spec.polarity, b.spin, spec.kick))
        for b in wave.branches
    )
    return BranchedWave(branches=branches, time=wave.time)


def apply_device(spec: SGDeviceSpec, state: BohmianState
                 ) -> tuple[BohmianState, OutputPath, Spin]:
    """Kick the branches at the device plane and resolve the particle's exit.

    With two (coincident) branches the exit side comes from the closed-form
    overlap analysis and the particle is moved along the matching piecewise
    path; a single branch is deflected whole and keeps its passenger. The
    returned state is advanced just far enough for the branch supports to be
    disjoint, so a screen may act on it immediately.
    """
    wave = state.wave
    if abs(state.pos_x - spec.plane_x) > _COINCIDENCE_ATOL:
        raise ValidationError(
            f"particle at x={state.pos_x} has not reached the device plane "
            f"x={spec.plane_x}")
    if len(wave.branches) > 2:
        raise BranchCountError("device expects 1 or 2 branches")

    u = spec.kick
    a = wave.height
    t_sep = a / (2 * u)

    if len(wave.branches) == 1:
        branch = wave.branches[0]
        dv = kick_velocity(spec.polarity, branch.spin, u)
        path = OutputPath.UPPER if dv > 0 else OutputPath.LOWER
        new_wave = _kicked(wave, spec).advanced(t_sep)
        new_pos_z = state.pos_z + (branch.vel_z + dv) * t_sep
        new_state = BohmianState(wave=new_wave,
                                 pos_x=state.pos_x + branch.vel_x * t_sep,
                                 pos_z=new_pos_z)
        return new_state, path, branch.spin

    b1, b2 = wave.branches
    if (abs(b1.center_x - b2.center_x) > _COINCIDENCE_ATOL
            or abs(b1.center_z - b2.center_z) > _COINCIDENCE_ATOL
            or abs(b1.vel_z - b2.vel_z) > _COINCIDENCE_ATOL):
        raise ValidationError(
            "device needs coincident, co-moving branches; recollimate and "
            "block before measuring again")

    up_spin = Spin.UP if spec.polarity is Polarity.S else Spin.DOWN
    up_branch = wave.branch_for(up_spin)
    dn_branch = wave.branch_for(up_spin.flipped())
    total = up_branch.weight + dn_branch.weight
    p_up = up_branch.weight / total

    center_z = b1.center_z
    drift_z = b1.vel_z
    offset = state.pos_z - center_z
    side, _ = split_exit(p_up, offset, u, a)
    path = OutputPath.UPPER if side is Side.UP else OutputPath.LOWER
    spin = up_spin if side is Side.UP else up_spin.flipped()

    new_wave = _kicked(wave, spec).advanced(t_sep)
    new_offset = piecewise_offset(p_up, offset, u, a, t_sep)
    new_state = BohmianState(wave=new_wave,
                             pos_x=state.pos_x + b1.vel_x * t_sep,
                             pos_z=center_z + drift_z * t_sep + new_offset)
    return new_state, path, spin


def _branches_by_height(wave: BranchedWave) -> tuple[Packet, Packet]:
    """Return (upper, lower) branch by current transverse center."""
    b1, b2 = wave.branches
    return (b1, b2) if b1.center_z >= b2.center_z else (b2, b1)


def apply_block(block: Block, state: BohmianState
                ) -> tuple[BohmianState | None, bool]:
    """Absorb one path; keep the conditional wave if the particle survives.

    Surviving branch weights are deliberately left unrenormalized; the
    conditioning is recorded by the caller as a BlockEvent. Returns
    (state, True) on survival or (None, False) when the particle sits in the
    blocked branch. A particle exactly on the touching corner of both
    supports counts as belonging to the upper branch, matching the exit tie
    rule.
    """
    wave = state.wave
    if len(wave.branches) != 2:
        raise BranchCountError(f"blocking expects 2 branches, got {len(wave.branches)}")
    upper, lower = _branches_by_height(wave)
    if upper.center_z - lower.center_z < wave.height - SUPPORT_ATOL:
        raise ValidationError("branches still overlap; blocking is ill-defined")

    if upper.contains(state.pos_x, state.pos_z):
        member = OutputPath.UPPER
    elif lower.contains(state.pos_x, state.pos_z):
        member = OutputPath.LOWER
    else:
        raise NoSupportError(
            f"particle at ({state.pos_x}, {state.pos_z}) is in neither branch")

    if member is block.path:
        return None, False
    survivor = upper if block.path is OutputPath.LOWER else lower
    new_wave = BranchedWave(branches=(survivor,), time=wave.time)
    return BohmianState(wave=new_wave, pos_x=state.pos_x, pos_z=state.pos_z), True


def apply_recollimate(spec: SGDeviceSpec, state: BohmianState) -> BohmianState:
    """Cancel the surviving branch's transverse motion with the opposite kick."""
    wave = state.wave
    if len(wave.branches) != 1:
        raise BranchCountError(
            f"recollimation expects a single branch, got {len(wave.branches)}")
    branch = wave.branches[0]
    if branch.vel_z == 0.0:
        raise ValidationError("branch is already collimated")
    dv = kick_velocity(spec.polarity, branch.spin, spec.kick)
    if abs(branch.vel_z + dv) > _COINCIDENCE_ATOL:
        raise ValidationError(
            f"kick {dv} does not cancel branch velocity {branch.vel_z}; "
            "recollimation needs the opposite polarity and equal kick")
    new_wave = BranchedWave(branches=(replace(branch, vel_z=0.0),), time=wave.time)
    return BohmianState(wave=new_wave, pos_x=state.pos_x, pos_z=state.pos_z)


def element_plane(element: ChainElement) -> float:
    if isinstance(element, Block):
        return element.plane_x
    return element.spec.plane_x


def chain_from_steps(steps: Sequence[tuple], geometry: Geometry = DEFAULT_GEOMETRY
                     ) -> tuple[ChainElement, ...]:
    """Build a chain from compact (kind, argument) steps on a uniform grid.

    Steps are ("device", Polarity), ("block", OutputPath) or
    ("recollimate", Polarity); element k gets plane (k+1)*spacing.
    """
    chain: list[ChainElement] = []
    for k, (kind, arg) in enumerate(steps):
        plane = (k + 1) * geometry.spacing
        if kind == "device":
            chain.append(Device(SGDeviceSpec(arg, geometry.kick, plane)))
        elif kind == "block":
            chain.append(Block(arg, plane))
        elif kind == "recollimate":
            chain.append(Recollimate(SGDeviceSpec(arg, geometry.kick, plane)))
        else:
            raise ValidationError(f"unknown chain step kind {kind!r}")
    return tuple(chain)


def validate_chain_order(chain: Sequence[ChainElement]) -> None:
    """Structural rules that hold for both engines."""
    if not chain:
        raise ValidationError("chain must contain at least one element")
    if not isinstance(chain[0], Device):
        raise ValidationError("chain must start with a device"
                              if not isinstance(chain[0], Block)
                              else "a block must follow a device")
    last_device: SGDeviceSpec | None = None
    prev: ChainElement | None = None
    for el in chain:
        if isinstance(el, Block):
            if not isinstance(prev, Device):
                raise ValidationError("a block must follow a device")
        elif isinstance(el, Recollimate):
            if last_device is None:
                raise ValidationError("recollimation needs a preceding device")
            if el.spec.polarity is not last_device.polarity.opposite():
                raise ValidationError(
                    "recollimation polarity must be opposite to the preceding "
                    f"device ({last_device.polarity.value})")
            if el.spec.kick != last_device.kick:
                raise ValidationError(
                    "recollimation kick must equal the preceding device's kick")
        if isinstance(el, Device):
            last_device = el.spec
        prev = el


def validate_chain_geometry(chain: Sequence[ChainElement], geometry: Geometry) -> None:
    """Plane layout rules for the wave-packet engine."""
    prev_plane = -math.inf
    for i, el in enumerate(chain):
        plane = element_plane(el)
        if plane < 0:
            raise ValidationError(f"element {i} has negative plane {plane}")
        if plane <= prev_plane:
            raise ValidationError("element planes must strictly increase")
        prev_plane = plane
    for i, el in enumerate(chain[:-1]):
        if isinstance(el, Device):
            gap = element_plane(chain[i + 1]) - el.spec.plane_x
            need = geometry.speed * geometry.height / (2 * el.spec.kick)
            if gap < need - SUPPORT_ATOL:
                raise ValidationError(
                    f"element after device {i} sits {gap} downstream; branches "
                    f"need {need} to separate")


def _fly_to_plane(state: BohmianState, plane_x: float) -> BohmianState:
    """Free flight to a plane; the field is constant along in-scope segments."""
    vel_x, vel_z = velocity_at(state.wave, (state.pos_x, state.pos_z))
    dt = (plane_x - state.pos_x) / vel_x
    if dt < -_COINCIDENCE_ATOL:
        raise ValidationError(f"particle already passed plane x={plane_x}")
    if dt <= 0:
        return state
    return BohmianState(wave=state.wave.advanced(dt),
                        pos_x=plane_x,
                        pos_z=state.pos_z + vel_z * dt)


def run_chain_bohm(chain: Sequence[ChainElement], weights: SpinorWeights,
                   z0: float, geometry: Geometry = DEFAULT_GEOMETRY
                   ) -> OutcomeRecord:
    """Run one particle through a device chain using the closed-form dynamics.

    Every device event logs the exit path and the spin value assigned by the
    polarity convention; a blocking loss terminates the run with the block
    event marked unsurvived.
    """
    validate_chain_order(chain)
    validate_chain_geometry(chain, geometry)
    state = make_initial_state(weights, z0, height=geometry.height,
                               width=geometry.width, speed=geometry.speed)
    events: list[DeviceEvent | BlockEvent] = []
    for el in chain:
        state = _fly_to_plane(state, element_plane(el))
        if isinstance(el, Device):
            state, path, spin = apply_device(el.spec, state)
            events.append(DeviceEvent(el.spec.polarity, path, spin))
        elif isinstance(el, Block):
            next_state, survived = apply_block(el, state)
            events.append(BlockEvent(el.path, survived))
            if not survived:
                return OutcomeRecord(tuple(events))
            state = next_state
        else:
            state = apply_recollimate(el.spec, state)
    return OutcomeRecord(tuple(events))


@dataclass(frozen=True)
class ChainTrace:
    """Numerically integrated trajectory bundle for a whole chain.

    ``z`` has one row per starting offset and is NaN after absorption;
    ``occupancy`` uses the Trajectory codes. ``segments`` holds the wave in
    force on each inter-plane interval, which is what figure rendering needs.
    """

    times: np.ndarray
    xs: np.ndarray
    z: np.ndarray
    occupancy: np.ndarray
    absorbed_at: np.ndarray
    segments: tuple[tuple[float, float, BranchedWave], ...]
    device_marks: tuple[tuple[float, Polarity], ...]
    block_marks: tuple[tuple[float, OutputPath, float, float], ...]

    @property
    def n_samples(self) -> int:
        return self.z.shape[0]


def trace_chain_bohm(chain: Sequence[ChainElement], weights: SpinorWeights,
                     z0s: Sequence[float], geometry: Geometry = DEFAULT_GEOMETRY,
                     dt: float | None = None, tail_time: float | None = None
                     ) -> ChainTrace:
    """Integrate a fan of trajectories through the chain with the RK4 field.

    This is the numerical route through the same physics that
    ``run_chain_bohm`` treats in closed form, and doubles as the data source
    for trajectory files and figures. ``tail_time`` extends the last segment
    past the final element (default: one plane spacing).
    """
    validate_chain_order(chain)
    validate_chain_geometry(chain, geometry)
    if dt is None:
        dt = geometry.dt
    if tail_time is None:
        tail_time = geometry.spacing / geometry.speed

    z = np.asarray(list(z0s), dtype=float)
    if np.any(np.abs(z) > geometry.height / 2):
        raise ValidationError("initial offsets must lie within the packet height")
    active = np.ones(z.shape, dtype=bool)
    absorbed_at = np.full(z.shape, -1, dtype=np.int64)

    wave = make_wave(weights, height=geometry.height, width=geometry.width,
                     speed=geometry.speed)
    t_now = 0.0
    n_recorded = 0
    times_parts: list[np.ndarray] = []
    z_parts: list[np.ndarray] = []
    occ_parts: list[np.ndarray] = []
    segments: list[tuple[float, float, BranchedWave]] = []
    device_marks: list[tuple[float, Polarity]] = []
    block_marks: list[tuple[float, OutputPath, float, float]] = []

    def integrate_to(t_target: float):
        nonlocal wave, t_now, z, n_recorded
        if t_target <= t_now + 1e-15:
            return
        times, Z, occ = rk4_transverse(wave, z, t_target, dt, active)
        start = 1 if n_recorded else 0
        times_parts.append(times[start:])
        z_parts.append(Z[:, start:])
        occ_parts.append(occ[:, start:])
        n_recorded += len(times) - start
        segments.append((t_now, t_target, wave))
        z = np.where(active, Z[:, -1], z)
        wave = wave.advanced(t_target - t_now)
        t_now = t_target

    for el in chain:
        plane = element_plane(el)
        integrate_to(plane / geometry.speed)
        if isinstance(el, Device):
            wave = _kicked(wave, el.spec)
            device_marks.append((plane, el.spec.polarity))
        elif isinstance(el, Block):
            field = _FieldArrays(wave)
            slack = dt * max(max_transverse_speed(wave), 1.0) + SUPPORT_ATOL
            z = field.nearest_edge_snap(t_now, z, active, slack)
            upper, lower = _branches_by_height(wave)
            if upper.center_z - lower.center_z < wave.height - SUPPORT_ATOL:
                raise ValidationError("branches still overlap at the screen")
            target = upper if el.path is OutputPath.UPPER else lower
            in_upper = np.abs(z - upper.center_z) <= wave.height / 2 + SUPPORT_ATOL
            in_target = in_upper if el.path is OutputPath.UPPER else (~in_upper)
            hit = active & in_target
            absorbed_at[hit] = n_recorded - 1
            active = active & ~hit
            block_marks.append((plane, el.path,
                                target.center_z - wave.height / 2,
                                target.center_z + wave.height / 2))
            survivor = lower if el.path is OutputPath.UPPER else upper
            wave = BranchedWave(branches=(survivor,), time=wave.time)
        else:
            wave = _kicked(wave, el.spec)
            branch = wave.branches[0] if len(wave.branches) == 1 else None
            if branch is None or abs(branch.vel_z) > _COINCIDENCE_ATOL:
                raise ValidationError("recollimation did not cancel the kick")
            wave = BranchedWave(branches=(replace(branch, vel_z=0.0),),
                                time=wave.time)

    integrate_to(t_now + tail_time)

    times = np.concatenate(times_parts)
    Z = np.concatenate(z_parts, axis=1)
    occ = np.concatenate(occ_parts, axis=1)
    xs = geometry.speed * times
    return ChainTrace(times=times, xs=xs, z=Z, occupancy=occ,
                      absorbed_at=absorbed_at, segments=tuple(segments),
                      device_marks=tuple(device_marks),
                      block_marks=tuple(block_marks))
