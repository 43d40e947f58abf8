"""File formats.

System definition (JSON)::

    {"format": "lti-system v1", "N": ..., "J": ..., "O": ...,
     "B": [[...]], "C": [[...]], "D": [[...]], "F": [...], "x0": [...],
     "parametrization": {"tag": "full"} |
                        {"tag": "fmri", "regions": n, "hemodynamics": {...}}}

Trajectory CSV: header ``t, x_1..x_N, y_1..y_O``; output-only CSV drops the
state columns.  Projection pair file: one dimensions header line per matrix
followed by the numeric payload, one value per line in column-major order.
Reduction trace CSV: ``iter, objective, dim_P, dim_V, full_sims, wall_ms``
(full_sims counts full-order solves triggered by objective evaluations).
Inversion result JSON: ``{theta_map, objective, online_ms, rel_err}``.
All numeric text uses repr-exact %.17g formatting, so identical results give
byte-identical payloads.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .inversion import InversionResult
from .lti import ControlSystem, Trajectory, full_parametrization
from .models import HEMODYNAMIC_PARAMETER_NAMES, HemodynamicParams, fmri_assemble
from .reduction import ProjectionPair, ReductionTrace

FMT = "%.17g"


def _matrix(rows) -> np.ndarray:
    return np.atleast_2d(np.asarray(rows, dtype=float))


def system_to_dict(system: ControlSystem) -> dict:
    tag = system.parametrization.tag
    if tag == "full":
        parametrization = {"tag": "full"}
    elif tag == "fmri":
        meta = system.parametrization.meta
        parametrization = {
            "tag": "fmri",
            "regions": int(meta[0]),
            "hemodynamics": dict(zip(HEMODYNAMIC_PARAMETER_NAMES, meta[1:])),
        }
    else:
        raise ValueError(f"parametrization tag {tag!r} is not serializable")
    return {
        "format": "lti-system v1",
        "N": system.N,
        "J": system.J,
        "O": system.O,
        "B": system.B.tolist(),
        "C": system.C.tolist(),
        "D": system.D.tolist(),
        "F": system.F.tolist(),
        "x0": system.x0.tolist(),
        "parametrization": parametrization,
    }


def system_from_dict(payload: dict) -> ControlSystem:
    if payload.get("format") != "lti-system v1":
        raise ValueError("not a lti-system v1 document")
    tag = payload["parametrization"]["tag"]
    if tag == "full":
        parametrization = full_parametrization(int(payload["N"]))
    elif tag == "fmri":
        spec = payload["parametrization"]
        hemo = HemodynamicParams(**spec["hemodynamics"])
        parametrization = fmri_assemble(int(spec["regions"]), hemo).system.parametrization
    else:
        raise ValueError(f"unknown parametrization tag {tag!r}")
    return ControlSystem(
        parametrization=parametrization,
        B=_matrix(payload["B"]),
        C=_matrix(payload["C"]),
        D=_matrix(payload["D"]),
        F=np.asarray(payload["F"], dtype=float),
        x0=np.asarray(payload["x0"], dtype=float),
    )


def save_system(system: ControlSystem, path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(system), indent=1) + "\n")


def load_system(path) -> ControlSystem:
    return system_from_dict(json.loads(Path(path).read_text()))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    n_states = traj.states.shape[1]
    n_outputs = traj.outputs.shape[1]
    header = ",".join(
        ["t"]
        + [f"x_{i + 1}" for i in range(n_states)]
        + [f"y_{i + 1}" for i in range(n_outputs)]
    )
    table = np.column_stack([traj.times, traj.states, traj.outputs])
    np.savetxt(path, table, fmt=FMT, delimiter=",", header=header, comments="")


def write_outputs_csv(times: np.ndarray, outputs: np.ndarray, path) -> None:
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    header = ",".join(["t"] + [f"y_{i + 1}" for i in range(outputs.shape[1])])
    table = np.column_stack([np.asarray(times, dtype=float), outputs])
    np.savetxt(path, table, fmt=FMT, delimiter=",", header=header, comments="")


def read_outputs_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an output time series; returns (times, outputs)."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 0], table[:, 1:]


def save_projection_pair(pair: ProjectionPair, path) -> None:
    lines = ["# projection-pair v1"]
    for name, matrix in (("V", pair.V), ("P", pair.P)):
        lines.append(f"{name} {matrix.shape[0]} {matrix.shape[1]}")
        lines.extend(FMT % v for v in matrix.reshape(-1, order="F"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_projection_pair(path) -> ProjectionPair:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "# projection-pair v1":
        raise ValueError("not a projection-pair v1 file")
    pos = 1
    matrices = {}
    for _ in range(2):
        name, rows, cols = lines[pos].split()
        rows, cols = int(rows), int(cols)
        values = np.array([float(v) for v in lines[pos + 1 : pos + 1 + rows * cols]])
        matrices[name] = values.reshape((rows, cols), order="F")
        pos += 1 + rows * cols
    return ProjectionPair(V=matrices["V"], P=matrices["P"])


def export_projection_csv(pair: ProjectionPair, v_path, p_path) -> None:
    np.savetxt(v_path, pair.V, fmt=FMT, delimiter=",")
    np.savetxt(p_path, pair.P, fmt=FMT, delimiter=",")


def write_trace_csv(trace: ReductionTrace, path) -> None:
    lines = ["# reduction-trace v1", "iter,objective,dim_P,dim_V,full_sims,wall_ms"]
    for r in trace.records:
        lines.append(
            f"{r.iteration},{FMT % r.objective_value},{r.dim_P},{r.dim_V},"
            f"{r.objective_full_sims},{FMT % r.wall_ms}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def save_inversion_result(result: InversionResult, path) -> None:
    payload = {
        "theta_map": np.asarray(result.theta_map, dtype=float).tolist(),
        "objective": result.objective_value,
        "online_ms": result.online_time * 1e3,
        "rel_err": result.relative_output_error,
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")
