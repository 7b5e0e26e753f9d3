"""Trajectory CSV files: one row per sample, fixed column order, shortest round-trip numbers."""
import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, TextIO, Union

import numpy as np

from thermo_network.network.model import SIMPLE_DIFFUSION, NetworkModel
from thermo_network.simulation.dynamics import Dynamics
from thermo_network.simulation.integrator import Trajectory

logger = logging.getLogger(__name__)

PER_COMPARTMENT = ('S', 'N', 'T', 'p', 'mu')
MECHANICS_COLUMNS = ('q', 'qdot', 'x', 'xdot')
TOTAL_COLUMNS = ('Sigma', 'I', 'E', 'P_W', 'P_H', 'P_M', 'firstlaw_residual')


def trajectory_columns(model: NetworkModel) -> List[str]:
    columns = ['t']
    for compartment in model.compartments:
        columns.extend(f"{name}[{compartment.id}]" for name in PER_COMPARTMENT)
    if model.mechanics is not None:
        columns.extend(MECHANICS_COLUMNS)
    columns.extend(TOTAL_COLUMNS)
    return columns


def _format(value: float) -> str:
    return repr(float(value))


def trajectory_rows(traj: Trajectory, model: NetworkModel) -> List[List[str]]:
    dynamics = Dynamics(model)
    layout = dynamics.layout
    rows = []
    for sample in traj.samples:
        y = sample.state.y
        evaluation = dynamics.evaluate(sample.t, y)
        d = sample.diagnostics or evaluation.diagnostics
        row = [sample.t]
        for k, state in enumerate(evaluation.states):
            N = y[layout.N[k]]
            # compartments of the shared-entropy model report their ideal-gas share of S
            S = N * state.s if model.system_class == SIMPLE_DIFFUSION else y[layout.S[k]]
            row.extend([S, N, d.temperatures[k], d.pressures[k], d.potentials[k]])
        if layout.mechanics is not None:
            row.extend(y[i] for i in layout.mechanics)
        row.extend([sum(y[i] for i in layout.Sigma), d.I, d.E, d.P_W, d.P_H, d.P_M, d.first_law_residual])
        rows.append([_format(value) for value in row])
    return rows


def write_trajectory(traj: Trajectory, model: NetworkModel, sink: Union[str, Path, TextIO]) -> None:
    """Write the trajectory as CSV to a path or an open text stream (LF line endings)."""
    if isinstance(sink, (str, Path)):
        path = Path(sink)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            _write(traj, model, f)
        logger.info(f"Wrote {len(traj.samples)} samples to {path}")
    else:
        _write(traj, model, sink)


def _write(traj: Trajectory, model: NetworkModel, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(trajectory_columns(model))
    writer.writerows(trajectory_rows(traj, model))


@dataclass
class TrajectoryTable:
    columns: List[str]
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"no column {name!r} in {self.columns}")

    def __len__(self) -> int:
        return len(self.data)


def read_trajectory_csv(source: Union[str, Path, TextIO]) -> TrajectoryTable:
    if isinstance(source, (str, Path)):
        with open(source, newline='', encoding='utf-8') as f:
            return read_trajectory_csv(f)
    reader = csv.reader(source)
    columns = next(reader)
    data = np.array([[float(value) for value in row] for row in reader], dtype=float)
    return TrajectoryTable(columns, data.reshape(-1, len(columns)))


def trajectory_to_csv_text(traj: Trajectory, model: NetworkModel) -> str:
    buffer = io.StringIO(newline='')
    _write(traj, model, buffer)
    return buffer.getvalue()
