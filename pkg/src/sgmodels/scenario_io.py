"""Scenario file parsing and the delimited/JSON result writers.

Scenario documents are strict JSON, schema version 1. Unknown keys are
rejected so that a typo cannot silently change an experiment; amplitudes are
(re, im) pairs; chain elements are tagged records. Element planes are laid
out automatically on the geometry's spacing grid, so a document stays fully
self-describing without coordinates.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .apparatus import (
    Block,
    ChainTrace,
    Device,
    Geometry,
    OutputPath,
    Polarity,
    Recollimate,
    chain_from_steps,
)
from .errors import ParseError, ValidationError
from .experiments import EnsembleReport, Model, Scenario, validate_scenario
from .wavepacket import OCCUPANCY_LABELS, SpinorWeights, Trajectory

SCHEMA_VERSION = 1

_TOP_KEYS = {"version", "name", "model", "alpha", "beta", "chain", "z0",
             "destabilizer_sign", "geometry"}
_REQUIRED_KEYS = {"version", "name", "model", "alpha", "beta", "chain"}
_GEOMETRY_KEYS = {
    "packet_height": "height",
    "packet_width": "width",
    "kick": "kick",
    "forward_speed": "speed",
    "dt": "dt",
    "plane_spacing": "spacing",
}
_ELEMENT_KEYS = {
    "device": {"type", "polarity"},
    "block": {"type", "path"},
    "recollimate": {"type", "polarity"},
}


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ValidationError(f"unknown key {sorted(unknown)[0]!r} in {where}")


def _amplitude(raw, key: str) -> complex:
    if (not isinstance(raw, (list, tuple)) or len(raw) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in raw)):
        raise ParseError(f"{key} must be a [re, im] pair of numbers")
    return complex(float(raw[0]), float(raw[1]))


def _steps_from_records(records, geometry: Geometry):
    if not isinstance(records, list) or not records:
        raise ParseError("chain must be a non-empty list of tagged records")
    steps = []
    for i, rec in enumerate(records):
        where = f"chain[{i}]"
        if not isinstance(rec, dict) or "type" not in rec:
            raise ParseError(f"{where} must be an object with a 'type' tag")
        kind = rec["type"]
        if kind not in _ELEMENT_KEYS:
            raise ValidationError(f"unknown chain element type {kind!r} in {where}")
        _reject_unknown(rec, _ELEMENT_KEYS[kind], where)
        if kind == "block":
            path = rec.get("path")
            if path not in ("upper", "lower"):
                raise ValidationError(f"{where} path must be 'upper' or 'lower'")
            steps.append(("block", OutputPath(path)))
        else:
            polarity = rec.get("polarity")
            if polarity not in ("S", "N"):
                raise ValidationError(f"{where} polarity must be 'S' or 'N'")
            steps.append((kind, Polarity(polarity)))
    return steps


def _geometry_from_document(raw) -> Geometry:
    if raw is None:
        return Geometry()
    if not isinstance(raw, dict):
        raise ParseError("geometry must be an object")
    _reject_unknown(raw, set(_GEOMETRY_KEYS), "geometry")
    kwargs = {}
    for key, fieldname in _GEOMETRY_KEYS.items():
        if key in raw:
            value = raw[key]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ParseError(f"geometry.{key} must be a number")
            kwargs[fieldname] = float(value)
    try:
        return Geometry(**kwargs)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def scenario_from_document(doc: dict) -> Scenario:
    """Validate a decoded scenario document and build the Scenario value."""
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "scenario")
    missing = _REQUIRED_KEYS - set(doc)
    if missing:
        raise ParseError(f"missing required key {sorted(missing)[0]!r}")
    if doc["version"] != SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported scenario version {doc['version']!r}; expected "
            f"{SCHEMA_VERSION}")
    if not isinstance(doc["name"], str) or not doc["name"]:
        raise ValidationError("name must be a non-empty string")
    try:
        model = Model(doc["model"])
    except ValueError:
        raise ValidationError(f"model must be one of "
                              f"{[m.value for m in Model]}, got {doc['model']!r}")
    try:
        weights = SpinorWeights(_amplitude(doc["alpha"], "alpha"),
                                _amplitude(doc["beta"], "beta"))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    geometry = _geometry_from_document(doc.get("geometry"))
    steps = _steps_from_records(doc["chain"], geometry)

    z0 = doc.get("z0")
    if z0 is not None:
        if not isinstance(z0, (int, float)) or isinstance(z0, bool):
            raise ParseError("z0 must be a number")
        z0 = float(z0)
    sign = doc.get("destabilizer_sign")
    if sign is not None:
        if sign not in (1, -1):
            raise ValidationError("destabilizer_sign must be 1 or -1")
        sign = int(sign)

    scenario = Scenario(name=doc["name"], weights=weights,
                        chain=chain_from_steps(steps, geometry), model=model,
                        z0=z0, destab_sign=sign, geometry=geometry)
    validate_scenario(scenario)
    return scenario


def parse_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file, naming any offending key."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed scenario document {path}: {exc}") from None
    return scenario_from_document(doc)


def scenario_to_document(scenario: Scenario) -> dict:
    """Inverse of scenario_from_document up to plane auto-layout."""
    records = []
    for el in scenario.chain:
        if isinstance(el, Device):
            records.append({"type": "device", "polarity": el.spec.polarity.value})
        elif isinstance(el, Block):
            records.append({"type": "block", "path": el.path.value})
        elif isinstance(el, Recollimate):
            records.append({"type": "recollimate",
                            "polarity": el.spec.polarity.value})
    g = scenario.geometry
    doc = {
        "version": SCHEMA_VERSION,
        "name": scenario.name,
        "model": scenario.model.value,
        "alpha": [scenario.weights.alpha.real, scenario.weights.alpha.imag],
        "beta": [scenario.weights.beta.real, scenario.weights.beta.imag],
        "chain": records,
        "geometry": {
            "packet_height": g.height,
            "packet_width": g.width,
            "kick": g.kick,
            "forward_speed": g.speed,
            "dt": g.dt,
            "plane_spacing": g.spacing,
        },
    }
    if scenario.z0 is not None:
        doc["z0"] = scenario.z0
    if scenario.destab_sign is not None:
        doc["destabilizer_sign"] = scenario.destab_sign
    return doc


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_document(scenario), indent=2,
                                     sort_keys=True) + "\n")


def report_document(scenario: Scenario, model: Model, samples: int, seed: int,
                    report: EnsembleReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.name,
        "model": model.value,
        "samples": samples,
        "seed": seed,
        "report": report.as_dict(),
    }


def write_report(path: str | Path, doc: dict) -> None:
    """Serialize a report with a canonical layout, so equal runs match byte-wise."""
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def trajectory_rows(trajectory: Trajectory):
    """Yield (t, x, z, branch_occupied) rows for one integrated trajectory."""
    for t, x, z, occ in zip(trajectory.times, trajectory.xs, trajectory.zs,
                            trajectory.occupancy):
        yield float(t), float(x), float(z), OCCUPANCY_LABELS[int(occ)]


def trace_sample_rows(trace: ChainTrace, index: int):
    """Rows for one fan member, truncated at absorption."""
    stop = trace.absorbed_at[index]
    last = len(trace.times) if stop < 0 else int(stop) + 1
    for k in range(last):
        yield (float(trace.times[k]), float(trace.xs[k]),
               float(trace.z[index, k]),
               OCCUPANCY_LABELS[int(trace.occupancy[index, k])])


def write_trajectory_csv(path: str | Path, rows) -> int:
    """Write rows under the (t, x, z, branch_occupied) schema; return the count."""
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "z", "branch_occupied"])
        for row in rows:
            writer.writerow([repr(row[0]), repr(row[1]), repr(row[2]), row[3]])
            count += 1
    return count
