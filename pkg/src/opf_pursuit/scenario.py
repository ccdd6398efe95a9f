"""Time series of loads and available generation, and per-step problem instances."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CaseFormatError
from .lifted import ProblemInstance, make_instance
from .network import ConstantMatrices, NetworkModel, build_matrices


@dataclass(frozen=True, eq=False)
class Scenario:
    """Samples at ``data_hz``; arrays are ``(steps, N)``, ``(steps, N)``, ``(steps, N_G)`` in pu."""

    data_hz: float
    pl: np.ndarray
    ql: np.ndarray
    pav: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("pl", "ql", "pav"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.pl.shape == self.ql.shape and self.pl.shape[0] == self.pav.shape[0]):
            raise ValueError("inconsistent scenario dimensions")
        if not self.data_hz > 0:
            raise ValueError("data_hz must be positive")
        if np.any(self.pav < 0):
            raise ValueError("P_av must be non-negative")

    def __len__(self) -> int:
        return self.pl.shape[0]

    @property
    def duration(self) -> float:
        """Seconds covered by the samples."""
        return len(self) / self.data_hz

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(float(self.data_hz)).encode())
        for arr in (self.pl, self.ql, self.pav):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _header(model: NetworkModel) -> list[str]:
    ids = model.bus_ids
    gen_ids = [ids[g.bus] for g in model.generators]
    return ["t"] + [f"Pl_{b}" for b in ids] + [f"Ql_{b}" for b in ids] + [f"Pav_{b}" for b in gen_ids]


def scenario_to_csv(scenario: Scenario, model: NetworkModel) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(model))
    for k in range(len(scenario)):
        row = [k / scenario.data_hz] + scenario.pl[k].tolist() + scenario.ql[k].tolist() + scenario.pav[k].tolist()
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def save_scenario(scenario: Scenario, model: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(scenario_to_csv(scenario, model), encoding="utf-8")


def load_scenario(path: str | Path, model: NetworkModel) -> Scenario:
    """Read a scenario CSV.

    ``Pav_<bus>`` columns are required for every generator; load columns that
    are absent fall back to the case's static loads.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise CaseFormatError("empty scenario file", str(path))
    header = [h.strip() for h in rows[0]]
    col = {name: k for k, name in enumerate(header)}
    if "t" not in col:
        raise CaseFormatError("missing column 't'", f"{path}:1")
    known = set(_header(model))
    for name in header:
        if name not in known:
            raise CaseFormatError(f"unknown column '{name}'", f"{path}:1")
    ids = model.bus_ids
    gen_ids = [ids[g.bus] for g in model.generators]
    missing = [f"Pav_{b}" for b in gen_ids if f"Pav_{b}" not in col]
    if missing:
        raise CaseFormatError(f"missing generator column(s) {', '.join(missing)}", f"{path}:1")

    data = rows[1:]
    n = len(data)
    times = np.empty(n)
    pl = np.tile(model.pl, (n, 1))
    ql = np.tile(model.ql, (n, 1))
    pav = np.empty((n, model.NG))
    targets = [("t", None, None)]
    targets += [(f"Pl_{b}", pl, i) for i, b in enumerate(ids)]
    targets += [(f"Ql_{b}", ql, i) for i, b in enumerate(ids)]
    targets += [(f"Pav_{b}", pav, k) for k, b in enumerate(gen_ids)]
    for r, row in enumerate(data):
        line = r + 2
        if len(row) != len(header):
            raise CaseFormatError(f"expected {len(header)} cells, found {len(row)}", f"{path}:{line}")
        for name, arr, j in targets:
            if name not in col:
                continue
            cell = row[col[name]]
            try:
                value = float(cell)
            except ValueError:
                raise CaseFormatError(f"non-numeric value {cell!r} in column '{name}'", f"{path}:{line}") from None
            if not math.isfinite(value):
                raise CaseFormatError(f"non-finite value in column '{name}'", f"{path}:{line}")
            if arr is None:
                times[r] = value
            else:
                arr[r, j] = value
    if n >= 2:
        dt = np.diff(times)
        if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * max(1.0, abs(dt[0])):
            raise CaseFormatError("column 't' must be uniformly increasing", str(path))
        data_hz = 1.0 / float(dt[0])
        if abs(round(data_hz) - data_hz) < 1e-9 * data_hz:
            data_hz = float(round(data_hz))
    else:
        data_hz = 1.0
    if np.any(pav < 0):
        raise CaseFormatError("P_av must be non-negative", str(path))
    return Scenario(data_hz, pl, ql, pav, {"source": str(path)})


@dataclass(frozen=True)
class SynthSpec:
    duration: float = 600.0  # seconds
    data_hz: float = 1.0
    load_scale: float = 1.0  # multiplies the case's static loads
    amplitude: float = 0.1  # relative load swing, < 1
    period: float = 300.0  # seconds
    noise: float = 0.0  # std of additive load noise, pu
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not self.duration > 0:
            problems.append("duration must be positive")
        if not self.data_hz > 0:
            problems.append("data_hz must be positive")
        if not 0 <= self.amplitude < 1:
            problems.append("amplitude must lie in [0, 1) so loads stay positive")
        if not self.period > 0:
            problems.append("period must be positive")
        if self.noise < 0:
            problems.append("noise must be >= 0")
        if self.load_scale < 0:
            problems.append("load_scale must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))


def synth_scenario(model: NetworkModel, spec: SynthSpec) -> Scenario:
    """Sinusoidal loads around the case values and a clipped periodic P_av bump.

    ``P_l,i(k) = base_i (1 + A sin(2 pi k / (period * data_hz) + phi_i)) + noise``
    with per-bus phases ``phi_i``; reactive loads follow the same shape.
    ``P_av(k) = P_av,max (1 - A + A max(0, sin(2 pi k / (period * data_hz))))``.
    With ``A = 0`` and no noise the scenario is constant.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration * spec.data_hz))
    if n < 1:
        raise ValueError("scenario would have no samples")
    k = np.arange(n)[:, None]
    omega = 2.0 * np.pi / (spec.period * spec.data_hz)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=model.N)
    shape = 1.0 + spec.amplitude * np.sin(omega * k + phase[None, :])
    pl = spec.load_scale * model.pl[None, :] * shape
    ql = spec.load_scale * model.ql[None, :] * shape
    if spec.noise > 0:
        pl = pl + rng.normal(scale=spec.noise, size=pl.shape)
        ql = ql + rng.normal(scale=spec.noise, size=ql.shape)
    pmax = np.array([g.p_av_max for g in model.generators])
    bump = np.maximum(0.0, np.sin(omega * k))
    pav = pmax[None, :] * (1.0 - spec.amplitude + spec.amplitude * bump)
    meta = {"source": "synthetic", "duration": spec.duration, "spec": spec.__dict__.copy()}
    return Scenario(spec.data_hz, pl, ql, np.maximum(pav, 0.0), meta)


def sample_index(scenario: Scenario, k: int, solver_hz: float) -> int:
    """Data sample visible at solver step ``k`` under zero-order hold."""
    n_steps = solver_steps(scenario, solver_hz)
    if not 0 <= k < n_steps:
        raise IndexError(f"solver step {k} out of range 0..{n_steps - 1}")
    # small slack absorbs representation error in k * data_hz / solver_hz
    idx = int(math.floor(k * scenario.data_hz / solver_hz + 1e-9))
    return min(idx, len(scenario) - 1)


def solver_steps(scenario: Scenario, solver_hz: float) -> int:
    if not solver_hz > 0:
        raise ValueError("solver_hz must be positive")
    return max(1, int(math.floor(scenario.duration * solver_hz + 1e-9)))


def instance_at(
    scenario: Scenario,
    model: NetworkModel,
    k: int,
    solver_hz: float | None = None,
    matrices: ConstantMatrices | None = None,
) -> ProblemInstance:
    """Instance seen by the solver at step ``k`` (time ``k / solver_hz``)."""
    solver_hz = scenario.data_hz if solver_hz is None else solver_hz
    idx = sample_index(scenario, k, solver_hz)
    if matrices is None:
        matrices = build_matrices(model)
    return make_instance(
        model, matrices, scenario.pl[idx], scenario.ql[idx], scenario.pav[idx], timestamp=k / solver_hz
    )


def spec_to_json(spec: SynthSpec) -> str:
    return json.dumps(spec.__dict__, sort_keys=True)
