"""Dual-engine simulator for spin-1/2 particles in Stern-Gerlach chains.

One engine integrates pilot-wave trajectories through rectangular wave-packet
branches; the other runs the single-system contextual ontological model over
signed Pauli stabilizer/destabilizer pairs. A shared scenario layer drives
both so that their hidden-variable behavior can be compared sample by sample.
"""

from .apparatus import (
    Block,
    BlockEvent,
    ChainTrace,
    DEFAULT_GEOMETRY,
    Device,
    DeviceEvent,
    Geometry,
    OutcomeRecord,
    OutputPath,
    Polarity,
    Recollimate,
    SGDeviceSpec,
    apply_block,
    apply_device,
    apply_recollimate,
    assigned_spin,
    chain_from_steps,
    kick_velocity,
    run_chain_bohm,
    trace_chain_bohm,
)
from .com import Axis, ComState, SignedPauli, measure, prepare, run_chain_com, sg_observable
from .errors import (
    AxisClashError,
    BranchCountError,
    NoSupportError,
    ParseError,
    SimulationError,
    StepTooLargeError,
    UnsupportedAxisError,
    ValidationError,
)
from .experiments import (
    EnsembleReport,
    Model,
    Scenario,
    binomial_sigma,
    builtin_scenario,
    builtin_scenarios,
    com_initial_state,
    destabilizer_axis,
    device_dependence_test,
    run_ensemble,
    stabilizer_from_weights,
    validate_scenario,
)
from .rng import sample_rng
from .scenario_io import parse_scenario, save_scenario, scenario_to_document
from .wavepacket import (
    BohmianState,
    BranchedWave,
    Packet,
    Side,
    Spin,
    SpinorWeights,
    Trajectory,
    analytic_exit,
    integrate_trajectory,
    make_initial_state,
    make_wave,
    sample_qeh,
    split_exit,
    split_threshold,
    velocity_at,
)

__version__ = "0.1.0"
