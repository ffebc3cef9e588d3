"""Declarative scenarios, ensemble statistics, and the device-dependence probe.

A scenario pins one quantum state, one device chain, and how the hidden
variable is chosen (fixed or sampled). The same scenario can drive the
wave-packet engine, the COM engine, or both, which is what the central
comparison needs: identical preparation, different ontology.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .apparatus import (
    ChainElement,
    DEFAULT_GEOMETRY,
    Device,
    Geometry,
    OutputPath,
    Polarity,
    Spin,
    chain_from_steps,
    run_chain_bohm,
    validate_chain_geometry,
    validate_chain_order,
)
from .com import Axis, ComState, SignedPauli, prepare, run_chain_com
from .errors import ValidationError
from .rng import MAIN_LANE, sample_rng
from .wavepacket import Side, SpinorWeights, split_exit

_STABILIZER_ATOL = 1e-9


class Model(enum.Enum):
    BOHMIAN = "bohmian"
    COM = "com"
    BOTH = "both"


@dataclass(frozen=True)
class Scenario:
    """A named, validated experiment description.

    ``z0`` fixes the wave-packet hidden variable (None samples it from the
    packet's position density); ``destab_sign`` fixes the COM hidden variable
    (None randomizes it at preparation).
    """

    name: str
    weights: SpinorWeights
    chain: tuple[ChainElement, ...]
    model: Model
    z0: float | None = None
    destab_sign: int | None = None
    geometry: Geometry = field(default_factory=Geometry)


@dataclass(frozen=True)
class EnsembleReport:
    """Aggregate outcome frequencies over one seeded ensemble.

    ``p_up_first`` is the upper-path fraction at the first device over all
    samples; ``p_up_final`` conditions on survivors at the last device;
    ``device_dependent_fraction`` counts samples whose first-device spin
    would flip if the device polarity were swapped at the same hidden state.
    """

    n_total: int
    n_survived: int
    p_up_first: float
    p_up_final: float
    device_dependent_fraction: float
    records: tuple | None = None

    def __post_init__(self):
        if self.n_survived > self.n_total:
            raise ValueError("survivors cannot exceed the sample count")
        for name in ("p_up_first", "p_up_final", "device_dependent_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a frequency, got {v}")

    def as_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_survived": self.n_survived,
            "p_up_first": self.p_up_first,
            "p_up_final": self.p_up_final,
            "device_dependent_fraction": self.device_dependent_fraction,
        }


def stabilizer_from_weights(weights: SpinorWeights) -> SignedPauli:
    """Map spinor amplitudes to their stabilizer, when one exists.

    Only amplitude pairs fixed by a signed Pauli qualify: the z eigenstates
    and the equal-weight superpositions with relative phase +-1. Anything
    else has no COM counterpart here and is rejected.
    """
    p_up = weights.p_up
    if abs(p_up - 1.0) <= _STABILIZER_ATOL:
        return SignedPauli(Axis.Z, 1)
    if p_up <= _STABILIZER_ATOL:
        return SignedPauli(Axis.Z, -1)
    if abs(p_up - 0.5) <= _STABILIZER_ATOL:
        cross = weights.beta * weights.alpha.conjugate()
        if abs(cross.imag) <= _STABILIZER_ATOL:
            if abs(cross.real - 0.5) <= _STABILIZER_ATOL:
                return SignedPauli(Axis.X, 1)
            if abs(cross.real + 0.5) <= _STABILIZER_ATOL:
                return SignedPauli(Axis.X, -1)
    raise ValidationError(
        f"amplitudes ({weights.alpha}, {weights.beta}) are not a stabilizer state")


def destabilizer_axis(stabilizer: SignedPauli) -> Axis:
    """Conjugate axis used as the hidden variable: Z states get X and vice versa."""
    return Axis.X if stabilizer.axis is Axis.Z else Axis.Z


def com_initial_state(weights: SpinorWeights, sign: int) -> ComState:
    stab = stabilizer_from_weights(weights)
    return ComState(stabilizer=stab,
                    destabilizer=SignedPauli(destabilizer_axis(stab), sign))


def validate_scenario(scenario: Scenario) -> None:
    if not scenario.name:
        raise ValidationError("scenario needs a non-empty name")
    validate_chain_order(scenario.chain)
    if scenario.model in (Model.BOHMIAN, Model.BOTH):
        validate_chain_geometry(scenario.chain, scenario.geometry)
    if scenario.z0 is not None and abs(scenario.z0) > scenario.geometry.height / 2:
        raise ValidationError(
            f"fixed z0={scenario.z0} lies outside the packet height")
    if scenario.destab_sign is not None and scenario.destab_sign not in (1, -1):
        raise ValidationError("destabilizer sign must be +1 or -1")
    if scenario.model in (Model.COM, Model.BOTH):
        stabilizer_from_weights(scenario.weights)


def _first_device_spin(weights: SpinorWeights, z0: float, polarity: Polarity,
                       u: float, a: float) -> Spin:
    """Closed-form spin assigned at a single device, for either polarity."""
    up_spin = Spin.UP if polarity is Polarity.S else Spin.DOWN
    p_up = weights.p_up if up_spin is Spin.UP else weights.p_down
    side, _ = split_exit(p_up, z0, u, a)
    return up_spin if side is Side.UP else up_spin.flipped()


def _com_first_spin(weights: SpinorWeights, sign: int, polarity: Polarity) -> Spin:
    state = com_initial_state(weights, sign)
    chain = chain_from_steps([("device", polarity)])
    rec = run_chain_com(chain, state, np.random.default_rng(0))
    return rec.first.spin


def device_dependence_test(model: Model, hidden, weights: SpinorWeights,
                           geometry: Geometry = DEFAULT_GEOMETRY) -> bool:
    """True iff swapping the first device's polarity flips the assigned spin.

    ``hidden`` is the model's hidden variable: the transverse coordinate for
    the wave-packet engine, the destabilizer sign for COM. Both runs see the
    identical hidden state; only the device differs.
    """
    if model is Model.BOHMIAN:
        z0 = float(hidden)
        spins = []
        for polarity in (Polarity.S, Polarity.N):
            chain = chain_from_steps([("device", polarity)], geometry)
            rec = run_chain_bohm(chain, weights, z0, geometry)
            spins.append(rec.first.spin)
        return spins[0] is not spins[1]
    if model is Model.COM:
        sign = int(hidden)
        if sign not in (1, -1):
            raise ValidationError("COM hidden state is a sign, +1 or -1")
        spin_s = _com_first_spin(weights, sign, Polarity.S)
        spin_n = _com_first_spin(weights, sign, Polarity.N)
        return spin_s is not spin_n
    raise ValidationError("pick a concrete model for the dependence probe")


def _first_device(chain: tuple[ChainElement, ...]) -> Device:
    for el in chain:
        if isinstance(el, Device):
            return el
    raise ValidationError("chain has no device")


def _partitions(n: int, chunk_size: int | None):
    if chunk_size is None or chunk_size >= n:
        yield 0, n
        return
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    for start in range(0, n, chunk_size):
        yield start, min(start + chunk_size, n)


def run_ensemble(scenario: Scenario, n: int, seed: int, model: Model | None = None,
                 chunk_size: int | None = None, keep_records: bool = False
                 ) -> EnsembleReport:
    """Run n seeded samples of a scenario through one engine.

    Each sample draws from its own (seed, index)-keyed stream, so the report
    is identical however the index range is chunked. ``model`` defaults to
    the scenario's engine and must be concrete.
    """
    if n < 1:
        raise ValidationError(f"need at least one sample, got {n}")
    engine = model if model is not None else scenario.model
    if engine is Model.BOTH:
        raise ValidationError("run one engine at a time (bohmian or com)")
    validate_scenario(scenario)
    if engine is Model.COM:
        stabilizer_from_weights(scenario.weights)

    geom = scenario.geometry
    first = _first_device(scenario.chain)
    u, a = first.spec.kick, geom.height
    weights = scenario.weights

    n_up_first = n_survived = n_up_final = n_dependent = 0
    records = [] if keep_records else None

    if engine is Model.COM:
        stab = stabilizer_from_weights(weights)
        dd_by_sign = {s: _com_first_spin(weights, s, Polarity.S)
                      is not _com_first_spin(weights, s, Polarity.N)
                      for s in (1, -1)}

    for lo, hi in _partitions(n, chunk_size):
        for i in range(lo, hi):
            rng = sample_rng(seed, i, MAIN_LANE)
            if engine is Model.BOHMIAN:
                if scenario.z0 is not None:
                    z0 = scenario.z0
                else:
                    z0 = float(rng.uniform(-a / 2, a / 2))
                record = run_chain_bohm(scenario.chain, weights, z0, geom)
                spin_s = _first_device_spin(weights, z0, Polarity.S, u, a)
                spin_n = _first_device_spin(weights, z0, Polarity.N, u, a)
                dependent = spin_s is not spin_n
            else:
                if scenario.destab_sign is not None:
                    state = com_initial_state(weights, scenario.destab_sign)
                else:
                    state = prepare(stab, destabilizer_axis(stab), rng)
                sign = state.destabilizer.sign
                record = run_chain_com(scenario.chain, state, rng)
                dependent = dd_by_sign[sign]

            if record.first.path is OutputPath.UPPER:
                n_up_first += 1
            if not record.absorbed:
                n_survived += 1
                if record.final.path is OutputPath.UPPER:
                    n_up_final += 1
            if dependent:
                n_dependent += 1
            if records is not None:
                records.append(record)

    return EnsembleReport(
        n_total=n,
        n_survived=n_survived,
        p_up_first=n_up_first / n,
        p_up_final=(n_up_final / n_survived) if n_survived else 0.0,
        device_dependent_fraction=n_dependent / n,
        records=tuple(records) if records is not None else None,
    )


def binomial_sigma(p: float, n: int) -> float:
    """Standard error of a frequency estimate at true probability p."""
    return math.sqrt(p * (1.0 - p) / n)


_SQ32 = math.sqrt(3.0) / 2.0
_SQ12 = 1.0 / math.sqrt(2.0)


def builtin_scenarios() -> tuple[Scenario, ...]:
    """Named reproductions of the canonical single- and triple-device setups."""
    g = Geometry()

    def make(name, weights, steps, model, z0=None, destab_sign=None):
        s = Scenario(name=name, weights=weights,
                     chain=chain_from_steps(steps, g), model=model,
                     z0=z0, destab_sign=destab_sign, geometry=g)
        validate_scenario(s)
        return s

    up = SpinorWeights(1.0, 0.0)
    down = SpinorWeights(0.0, 1.0)
    equal = SpinorWeights(_SQ12, _SQ12)
    mostly_up = SpinorWeights(_SQ32, 0.5)
    mostly_down = SpinorWeights(0.5, _SQ32)
    three_device = lambda first: [
        ("device", first),
        ("block", OutputPath.LOWER),
        ("recollimate", first.opposite()),
        ("device", Polarity.S),
    ]

    return (
        make("fig1a", up, [("device", Polarity.S)], Model.BOTH),
        make("fig1b", down, [("device", Polarity.S)], Model.BOTH),
        make("fig1c", down, [("device", Polarity.N)], Model.BOTH),
        make("fig1d", up, [("device", Polarity.N)], Model.BOTH),
        make("fig2a", mostly_up, [("device", Polarity.S)], Model.BOHMIAN),
        make("fig2b", mostly_up, [("device", Polarity.N)], Model.BOHMIAN),
        make("fig3a", mostly_down, three_device(Polarity.S), Model.BOHMIAN),
        make("fig3b", mostly_down, three_device(Polarity.N), Model.BOHMIAN),
        make("com-sequential", equal, three_device(Polarity.S), Model.BOTH),
    )


def builtin_scenario(name: str) -> Scenario:
    for s in builtin_scenarios():
        if s.name == name:
            return s
    raise ValidationError(f"no builtin scenario named {name!r}")
