"""Single-qubit contextual ontological model over signed Pauli observables.

The model state is an ordered pair {stabilizer; destabilizer} of signed,
mutually anticommuting Pauli observables. The stabilizer carries the quantum
state; the destabilizer's sign is the hidden variable that predetermines the
outcome of the otherwise-random conjugate measurement.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .apparatus import (
    Block,
    BlockEvent,
    ChainElement,
    Device,
    DeviceEvent,
    OutcomeRecord,
    OutputPath,
    Polarity,
    assigned_spin,
    validate_chain_order,
)
from .errors import AxisClashError, UnsupportedAxisError


class Axis(enum.Enum):
    X = "X"
    Y = "Y"
    Z = "Z"


@dataclass(frozen=True)
class SignedPauli:
    axis: Axis
    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    def negated(self) -> "SignedPauli":
        return SignedPauli(self.axis, -self.sign)

    def __str__(self) -> str:
        return f"{'+' if self.sign > 0 else '-'}{self.axis.value}"


@dataclass(frozen=True)
class ComState:
    """Ordered pair of anticommuting signed Paulis: {stabilizer; destabilizer}."""

    stabilizer: SignedPauli
    destabilizer: SignedPauli

    def __post_init__(self):
        if self.stabilizer.axis is self.destabilizer.axis:
            raise AxisClashError(
                f"stabilizer and destabilizer share axis {self.stabilizer.axis.value}")

    def __str__(self) -> str:
        return f"{{{self.stabilizer}; {self.destabilizer}}}"


def prepare(stabilizer: SignedPauli, destab_axis: Axis,
            rng: np.random.Generator) -> ComState:
    """Extend a stabilizer state with a uniformly random destabilizer sign."""
    if destab_axis is stabilizer.axis:
        raise AxisClashError(f"destabilizer axis {destab_axis.value} clashes "
                             "with the stabilizer")
    sign = 1 if rng.integers(0, 2) == 1 else -1
    return ComState(stabilizer=stabilizer,
                    destabilizer=SignedPauli(destab_axis, sign))


def measure(state: ComState, observable: SignedPauli,
            rng: np.random.Generator) -> tuple[int, ComState]:
    """Measure a signed Pauli observable; return (outcome, new state).

    Along the stabilizer axis the outcome is read off the stabilizer (times
    the observable's own sign) and only the destabilizer sign is
    re-randomized. Along the destabilizer axis the outcome is read off the
    destabilizer; the old destabilizer becomes the new stabilizer (its sign
    arranged so the measured observable evaluates to the reported outcome)
    and the old stabilizer axis returns as a fresh random-sign destabilizer.
    Any other axis is rejected: outcomes for it are not defined by this
    single-system rule.
    """
    fresh_sign = 1 if rng.integers(0, 2) == 1 else -1
    if observable.axis is state.stabilizer.axis:
        outcome = observable.sign * state.stabilizer.sign
        new_state = ComState(stabilizer=state.stabilizer,
                             destabilizer=SignedPauli(state.destabilizer.axis,
                                                      fresh_sign))
        return outcome, new_state
    if observable.axis is state.destabilizer.axis:
        outcome = observable.sign * state.destabilizer.sign
        new_stab = SignedPauli(observable.axis, outcome * observable.sign)
        new_destab = SignedPauli(state.stabilizer.axis, fresh_sign)
        return outcome, ComState(stabilizer=new_stab, destabilizer=new_destab)
    raise UnsupportedAxisError(
        f"axis {observable.axis.value} matches neither the stabilizer nor the "
        f"destabilizer of {state}")


def sg_observable(polarity: Polarity) -> SignedPauli:
    """Observable realized by a device: S measures +Z, N measures -Z.

    Outcome +1 always maps to the upper output path.
    """
    sign = 1 if polarity is Polarity.S else -1
    return SignedPauli(Axis.Z, sign)


def run_chain_com(chain: Sequence[ChainElement], initial: ComState,
                  rng: np.random.Generator) -> OutcomeRecord:
    """Run one COM sample through a device chain.

    Devices measure their polarity's observable and route by outcome;
    recollimation has no measurement content here and is skipped; a screen
    absorbs the sample when its current path is the blocked one.
    """
    validate_chain_order(chain)
    state = initial
    events: list[DeviceEvent | BlockEvent] = []
    current_path: OutputPath | None = None
    for el in chain:
        if isinstance(el, Device):
            outcome, state = measure(state, sg_observable(el.spec.polarity), rng)
            current_path = OutputPath.UPPER if outcome == 1 else OutputPath.LOWER
            events.append(DeviceEvent(el.spec.polarity, current_path,
                                      assigned_spin(el.spec.polarity, current_path)))
        elif isinstance(el, Block):
            survived = current_path is not el.path
            events.append(BlockEvent(el.path, survived))
            if not survived:
                return OutcomeRecord(tuple(events))
    return OutcomeRecord(tuple(events))
