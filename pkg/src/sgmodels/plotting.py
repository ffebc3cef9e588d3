"""Figure rendering for device-chain geometry and trajectory fans.

Figures are drawn in the propagation plane: forward position on the
horizontal axis, transverse position on the vertical. Branch supports appear
as shaded corridors, trajectories as a fan of lines colored by the branch
they end in, and the split threshold as a dash-dotted separatrix.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .apparatus import ChainTrace, Device, trace_chain_bohm
from .errors import ValidationError
from .experiments import Model, Scenario
from .wavepacket import Spin, split_threshold

_SPIN_COLOR = {Spin.UP: "tab:blue", Spin.DOWN: "tab:red"}
_END_COLOR = {0: "0.6", 1: "tab:blue", 2: "tab:red", 3: "0.3"}


def fan_offsets(height: float, count: int) -> np.ndarray:
    """Evenly spaced starting offsets spanning the packet height."""
    if count < 1:
        raise ValidationError("need at least one trajectory")
    if count == 1:
        return np.array([0.0])
    return np.linspace(-height / 2, height / 2, count)


def trace_scenario(scenario: Scenario, grid: int, dt: float | None = None
                   ) -> ChainTrace:
    """Integrate the scenario's trajectory fan (wave-packet engine only)."""
    if scenario.model is Model.COM:
        raise ValidationError(
            f"scenario {scenario.name!r} has no wave-packet content to draw")
    z0s = fan_offsets(scenario.geometry.height, grid)
    return trace_chain_bohm(scenario.chain, scenario.weights, z0s,
                            scenario.geometry, dt=dt)


def _draw_corridors(ax, trace: ChainTrace, speed: float):
    for t0, t1, wave in trace.segments:
        x = np.array([speed * t0, speed * t1])
        for b in wave.branches:
            center = np.array([b.center_z, b.center_z + b.vel_z * (t1 - t0)])
            ax.fill_between(x, center - b.height / 2, center + b.height / 2,
                            color=_SPIN_COLOR[b.spin], alpha=0.10, linewidth=0)
            ax.plot(x, center - b.height / 2, color=_SPIN_COLOR[b.spin],
                    linewidth=0.6, alpha=0.5)
            ax.plot(x, center + b.height / 2, color=_SPIN_COLOR[b.spin],
                    linewidth=0.6, alpha=0.5)


def _draw_threshold(ax, scenario: Scenario, speed: float):
    """Dash-dotted separatrix of the first device's split, up to the merge tip."""
    first = next(el for el in scenario.chain if isinstance(el, Device))
    u, a = first.spec.kick, scenario.geometry.height
    up_weight = (scenario.weights.p_up if first.spec.polarity.value == "S"
                 else scenario.weights.p_down)
    if up_weight <= 0.0 or up_weight >= 1.0:
        return
    z_star = split_threshold(up_weight, u, a)
    drift = (2 * up_weight - 1) * u
    t_tip = a / (2 * u)
    x_plane = first.spec.plane_x
    xs = [0.0, x_plane, x_plane + speed * t_tip]
    zs = [z_star, z_star, z_star + drift * t_tip]
    ax.plot(xs, zs, linestyle="-.", color="black", linewidth=1.2,
            label="up/down threshold")


def _end_code(trace: ChainTrace, i: int) -> int:
    stop = trace.absorbed_at[i]
    if stop >= 0:
        return 0
    col = trace.occupancy[i]
    nonzero = np.nonzero(col)[0]
    return int(col[nonzero[-1]]) if nonzero.size else 0


def render_trace(trace: ChainTrace, scenario: Scenario, out_path: str | Path
                 ) -> Path:
    """Draw the chain geometry with the integrated fan and save as SVG."""
    speed = scenario.geometry.speed
    fig, ax = plt.subplots(figsize=(7.0, 4.2))

    _draw_corridors(ax, trace, speed)
    for i in range(trace.n_samples):
        ax.plot(trace.xs, trace.z[i], linewidth=0.9,
                color=_END_COLOR[_end_code(trace, i)], alpha=0.85)
    _draw_threshold(ax, scenario, speed)

    for x_plane, polarity in trace.device_marks:
        ax.axvline(x_plane, color="0.4", linestyle=":", linewidth=0.8)
        ax.annotate(f"SG$_{polarity.value}$", (x_plane, ax.get_ylim()[1]),
                    ha="center", va="bottom", fontsize=9)
    for x_plane, _path, z_lo, z_hi in trace.block_marks:
        ax.plot([x_plane, x_plane], [z_lo, z_hi], color="black", linewidth=4,
                solid_capstyle="butt", label="screen")

    ax.set_xlabel("forward position x")
    ax.set_ylabel("transverse position z")
    p_up = scenario.weights.p_up
    ax.set_title(f"{scenario.name}  (weight up = {p_up:.3g})")
    handles, labels = ax.get_legend_handles_labels()
    if handles:
        seen = dict(zip(labels, handles))
        ax.legend(seen.values(), seen.keys(), loc="best", fontsize=8)
    fig.tight_layout()

    out_path = Path(out_path)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
