"""Network description, case-file parsing and the constant quadratic-form matrices.

Bus indexing convention used everywhere in the package: the ``N`` non-slack
buses take internal indices ``0..N-1`` in case-file order and the slack bus
takes index ``N``. Voltage vectors are stacked as real parts followed by
imaginary parts.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

from .errors import CaseFormatError, ValidationError

SLACK_MODES = ("embedded", "folded")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    series: complex  # 1 / (r + jx), pu
    shunt: float  # total line charging susceptance, pu


@dataclass(frozen=True)
class Generator:
    bus: int
    c: float
    d: float
    s_rating: float  # pu
    p_av_max: float  # pu


@dataclass(frozen=True)
class NetworkModel:
    """Static grid description, all quantities in per-unit."""

    base_mva: float
    rho0: float
    theta0: float
    bus_ids: tuple[int, ...]
    slack_id: int
    vmin: np.ndarray
    vmax: np.ndarray
    regulated: np.ndarray
    pl: np.ndarray
    ql: np.ndarray
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    source_hash: str = ""

    def __post_init__(self):
        for name in ("vmin", "vmax", "regulated", "pl", "ql"):
            arr = np.array(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return len(self.bus_ids)

    @property
    def NG(self) -> int:
        return len(self.generators)

    @property
    def slack_voltage(self) -> complex:
        return self.rho0 * np.exp(1j * self.theta0)

    @cached_property
    def gen_buses(self) -> np.ndarray:
        return np.array([g.bus for g in self.generators], dtype=int)

    @cached_property
    def gen_of_bus(self) -> dict[int, int]:
        return {g.bus: k for k, g in enumerate(self.generators)}

    def bus_index(self, bus_id: int) -> int:
        if bus_id == self.slack_id:
            return self.N
        return self.bus_ids.index(bus_id)

    def neighbors(self) -> list[set[int]]:
        """Adjacency over all N + 1 buses (slack last)."""
        adj: list[set[int]] = [set() for _ in range(self.N + 1)]
        for ln in self.lines:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
        return adj


def _field(obj: dict, key: str, where: str, kind=float, default: Any = ...):
    if key not in obj:
        if default is ...:
            raise CaseFormatError(f"missing field '{key}'", where)
        return default
    value = obj[key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(value, bool):
            raise TypeError
        return float(value)
    except (TypeError, ValueError):
        raise CaseFormatError(f"field '{key}' has invalid value {value!r}", where) from None


def model_from_dict(data: dict, source_hash: str = "") -> NetworkModel:
    """Build a validated model from the decoded case schema."""
    if not isinstance(data, dict):
        raise CaseFormatError("top level must be an object")
    base = _field(data, "baseMVA", "baseMVA")
    if base <= 0:
        raise ValidationError(["baseMVA must be positive"])
    slack = data.get("slack")
    if not isinstance(slack, dict):
        raise CaseFormatError("missing object 'slack'", "slack")
    rho0 = _field(slack, "rho0", "slack")
    theta0 = _field(slack, "theta0", "slack")
    slack_id = _field(slack, "bus", "slack", int, default=0)

    buses = data.get("buses")
    if not isinstance(buses, list) or not buses:
        raise CaseFormatError("'buses' must be a non-empty list", "buses")
    ids, vmin, vmax, reg, pl, ql = [], [], [], [], [], []
    for k, b in enumerate(buses):
        where = f"buses[{k}]"
        if not isinstance(b, dict):
            raise CaseFormatError("entry must be an object", where)
        ids.append(_field(b, "id", where, int))
        vmin.append(_field(b, "vmin", where))
        vmax.append(_field(b, "vmax", where))
        reg.append(_field(b, "regulated", where, bool, default=True))
        pl.append(_field(b, "pl", where, default=0.0) / base)
        ql.append(_field(b, "ql", where, default=0.0) / base)

    violations = []
    if slack_id in ids:
        violations.append(f"slack bus {slack_id} must not be listed in 'buses'")
    if len(set(ids)) != len(ids):
        violations.append("duplicate bus ids")
    known = set(ids) | {slack_id}
    index = {bid: k for k, bid in enumerate(ids)}
    index[slack_id] = len(ids)

    lines = []
    for k, ln in enumerate(data.get("lines", [])):
        where = f"lines[{k}]"
        a = _field(ln, "from", where, int)
        b = _field(ln, "to", where, int)
        r = _field(ln, "r", where)
        x = _field(ln, "x", where)
        bsh = _field(ln, "b_shunt", where, default=0.0)
        if a not in known or b not in known:
            bad = a if a not in known else b
            violations.append(f"{where} references unknown bus {bad}")
            continue
        if a == b:
            violations.append(f"{where} is a self-loop at bus {a}")
            continue
        if r == 0 and x == 0:
            violations.append(f"{where} has zero impedance")
            continue
        lines.append(Line(index[a], index[b], 1.0 / complex(r, x), bsh))

    gens = []
    for k, g in enumerate(data.get("generators", [])):
        where = f"generators[{k}]"
        bus = _field(g, "bus", where, int)
        if bus not in index or bus == slack_id:
            violations.append(f"{where} references unknown bus {bus}")
            continue
        gens.append(
            Generator(
                bus=index[bus],
                c=_field(g, "c", where),
                d=_field(g, "d", where),
                s_rating=_field(g, "s_rating", where) / base,
                p_av_max=_field(g, "p_av_max", where, default=0.0) / base,
            )
        )
    if violations:
        raise ValidationError(violations)

    model = NetworkModel(
        base_mva=base,
        rho0=rho0,
        theta0=theta0,
        bus_ids=tuple(ids),
        slack_id=slack_id,
        vmin=np.array(vmin),
        vmax=np.array(vmax),
        regulated=np.array(reg, dtype=bool),
        pl=np.array(pl),
        ql=np.array(ql),
        lines=tuple(lines),
        generators=tuple(gens),
        source_hash=source_hash,
    )
    problems = validate_network(model)
    if problems:
        raise ValidationError(problems)
    return model


def parse_case(path: str | Path) -> NetworkModel:
    """Read a JSON case file and return a validated :class:`NetworkModel`."""
    raw = Path(path).read_bytes()
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CaseFormatError(f"not UTF-8: {exc}", str(path)) from None
    except json.JSONDecodeError as exc:
        raise CaseFormatError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    return model_from_dict(data, source_hash=hashlib.sha256(raw).hexdigest())


def model_to_dict(model: NetworkModel) -> dict:
    """Inverse of :func:`model_from_dict` (physical units restored)."""
    base = model.base_mva
    ids = list(model.bus_ids) + [model.slack_id]
    lines = []
    for ln in model.lines:
        z = 1.0 / ln.series
        lines.append(
            {"from": ids[ln.from_bus], "to": ids[ln.to_bus], "r": z.real, "x": z.imag, "b_shunt": ln.shunt}
        )
    return {
        "baseMVA": base,
        "slack": {"bus": model.slack_id, "rho0": model.rho0, "theta0": model.theta0},
        "buses": [
            {
                "id": bid,
                "vmin": float(model.vmin[k]),
                "vmax": float(model.vmax[k]),
                "regulated": bool(model.regulated[k]),
                "pl": float(model.pl[k] * base),
                "ql": float(model.ql[k] * base),
            }
            for k, bid in enumerate(model.bus_ids)
        ],
        "lines": lines,
        "generators": [
            {
                "bus": ids[g.bus],
                "c": g.c,
                "d": g.d,
                "s_rating": g.s_rating * base,
                "p_av_max": g.p_av_max * base,
            }
            for g in model.generators
        ],
    }


def write_case(model: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")


def validate_network(model: NetworkModel) -> list[str]:
    """Return the list of violated invariants; empty when the model is sound."""
    out = []
    n_all = model.N + 1
    for k, ln in enumerate(model.lines):
        if not (0 <= ln.from_bus < n_all and 0 <= ln.to_bus < n_all):
            out.append(f"line {k} references an invalid bus")
    for k, g in enumerate(model.generators):
        if not 0 <= g.bus < model.N:
            out.append(f"generator {k} references an invalid bus")
        if not g.s_rating > 0:
            out.append(f"generator {k} at bus {model.bus_ids[g.bus] if 0 <= g.bus < model.N else g.bus}: rating S must be > 0")
        if g.p_av_max < 0:
            out.append(f"generator {k}: p_av_max must be >= 0")
    if len(set(g.bus for g in model.generators)) != model.NG:
        out.append("at most one generator per bus")
    for k, bid in enumerate(model.bus_ids):
        if not 0 < model.vmin[k] < model.vmax[k]:
            out.append(f"bus {bid}: need 0 < vmin < vmax")
    if not model.rho0 > 0:
        out.append("slack magnitude rho0 must be positive")
    if out:
        return out

    # connectivity, starting from the slack
    adj = model.neighbors()
    seen = {model.N}
    queue = deque([model.N])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    if len(seen) != n_all:
        out.append("graph not connected")
    return out


def build_admittance(model: NetworkModel, include_slack: bool = False) -> sp.csr_matrix:
    """Pi-model bus admittance matrix.

    With ``include_slack`` the matrix is ``(N+1) x (N+1)`` with the slack last;
    otherwise the slack row and column are dropped (the slack's line admittances
    still contribute to the diagonals of its neighbours).
    """
    n = model.N + 1
    rows, cols, vals = [], [], []
    for ln in model.lines:
        a, b, s = ln.from_bus, ln.to_bus, ln.series
        half = 0.5j * ln.shunt
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [s + half, s + half, -s, -s]
    y = sp.coo_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n, n)).tocsr()
    y.sum_duplicates()
    if not include_slack:
        y = y[: model.N, : model.N]
    return y.tocsr()


def max_row_nonzeros(y: sp.spmatrix) -> int:
    y = sp.csr_matrix(y)
    y.eliminate_zeros()
    return max(1, int(np.diff(y.indptr).max(initial=0)))


def build_constant_matrices(y: sp.spmatrix, i: int):
    """Return the sparse ``(M_i, Y_i, Ybar_i)`` for bus ``i`` of admittance ``y``.

    ``tr(Y_i x x^T)`` and ``tr(Ybar_i x x^T)`` are the active and reactive power
    injected at bus ``i`` when ``x`` stacks the real and imaginary voltages.
    """
    y = sp.csr_matrix(y)
    n = y.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"bus index {i} out of range 0..{n - 1}")
    e = sp.csr_matrix(([1.0], ([i], [i])), shape=(n, n))
    yi = e @ y
    s = yi + yi.T
    d = yi - yi.T
    M = sp.block_diag([e, e], format="csr")
    Y = 0.5 * sp.bmat([[s.real, -d.imag], [d.imag, s.real]], format="csr")
    Ybar = -0.5 * sp.bmat([[s.imag, d.real], [-d.real, s.imag]], format="csr")
    for A in (M, Y, Ybar):
        A.eliminate_zeros()
        A.sort_indices()
    return M, Y, Ybar


def quad_form_trace(A: sp.spmatrix, x: np.ndarray) -> float:
    """``tr(A x x^T) = x^T A x`` using the sparsity of ``A``."""
    x = np.asarray(x, dtype=float)
    if A.shape != (x.size, x.size):
        raise ValueError(f"dimension mismatch: matrix {A.shape} vs vector of length {x.size}")
    A = sp.csr_matrix(A)
    total = 0.0
    for r in np.flatnonzero(np.diff(A.indptr)):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        total += x[r] * float(A.data[lo:hi] @ x[A.indices[lo:hi]])
    return total


@dataclass(frozen=True, eq=False)
class ConstantMatrices:
    """Per-bus matrices for the ``N`` non-slack buses.

    In ``embedded`` mode ``x`` has ``2(N+1)`` entries and the slack voltage sits
    at positions ``N`` and ``2N+1``, frozen. In ``folded`` mode ``x`` has ``2N``
    entries and the slack appears through the linear terms ``omega``.
    """

    N: int
    n: int  # buses represented in x
    slack_mode: str
    M: tuple
    Y: tuple
    Ybar: tuple
    omega: np.ndarray  # (N, 2n), zero in embedded mode
    omega_bar: np.ndarray
    p: int
    slack_x: tuple[float, float]
    frozen_x: tuple[int, ...] = field(default=())

    @cached_property
    def stacked(self) -> sp.csr_matrix:
        """All Y_i, Ybar_i, M_i stacked vertically, shape (3N*2n, 2n)."""
        return sp.vstack(list(self.Y) + list(self.Ybar) + list(self.M), format="csr")

    @cached_property
    def linear(self) -> np.ndarray:
        """Linear terms for the 3N forms, shape (3N, 2n)."""
        return np.vstack([self.omega, self.omega_bar, np.zeros((self.N, 2 * self.n))])

    def forms(self, x: np.ndarray) -> np.ndarray:
        """Values of all 3N forms ``[p; q; m]`` at ``x``."""
        size = 2 * self.n
        quad = (self.stacked @ x).reshape(3 * self.N, size) @ x
        return quad + self.linear @ x


def build_matrices(model: NetworkModel, slack_mode: str = "embedded") -> ConstantMatrices:
    if slack_mode not in SLACK_MODES:
        raise ValueError(f"slack_mode must be one of {SLACK_MODES}")
    N = model.N
    v0 = model.slack_voltage
    full = build_admittance(model, include_slack=True)
    reduced = full[:N, :N]
    if slack_mode == "embedded":
        y, n = full, N + 1
        frozen = (N, 2 * N + 1)
    else:
        y, n = reduced, N
        frozen = ()
    Ms, Ys, Ybs = [], [], []
    for i in range(N):
        M, Y, Yb = build_constant_matrices(y, i)
        Ms.append(M)
        Ys.append(Y)
        Ybs.append(Yb)
    omega = np.zeros((N, 2 * n))
    omega_bar = np.zeros((N, 2 * n))
    if slack_mode == "folded":
        # V_i * conj(y_i0 V0) is linear in (Re V_i, Im V_i)
        col = full[:N, N].toarray().ravel() * v0
        for i in range(N):
            cr, ci = col[i].real, col[i].imag
            omega[i, i], omega[i, i + N] = cr, ci
            omega_bar[i, i], omega_bar[i, i + N] = -ci, cr
    omega.flags.writeable = False
    omega_bar.flags.writeable = False
    return ConstantMatrices(
        N=N,
        n=n,
        slack_mode=slack_mode,
        M=tuple(Ms),
        Y=tuple(Ys),
        Ybar=tuple(Ybs),
        omega=omega,
        omega_bar=omega_bar,
        p=max_row_nonzeros(reduced),
        slack_x=(v0.real, v0.imag),
        frozen_x=frozen,
    )


def synth_case(
    n_bus: int,
    n_gen: int,
    seed: int = 0,
    vmin: float = 0.94,
    vmax: float = 1.06,
    mean_degree: float = 2.6,
    load_mw: float = 8.0,
    base_mva: float = 100.0,
) -> dict:
    """A random meshed test network in the case schema.

    A random spanning tree rooted at the slack is densified with short-range
    chords until the mean degree is reached. Line impedances and loads are
    drawn so the flat-start voltage profile sits comfortably inside the bounds.
    """
    if not 0 <= n_gen <= n_bus:
        raise ValueError("need 0 <= n_gen <= n_bus")
    rng = np.random.default_rng(seed)
    ids = list(range(1, n_bus + 1))
    edges = set()
    for k in range(1, n_bus + 1):
        # attach to a recent bus so paths stay short and the grid looks regional
        lo = max(0, k - 6)
        parent = int(rng.integers(lo, k))
        edges.add((parent, k))
    target = int(round(mean_degree * (n_bus + 1) / 2))
    tries = 0
    while len(edges) < target and tries < 50 * n_bus:
        tries += 1
        a = int(rng.integers(1, n_bus + 1))
        b = int(min(n_bus, max(1, a + rng.integers(-8, 9))))
        if a != b and (a, b) not in edges and (b, a) not in edges:
            edges.add((min(a, b), max(a, b)))
    lines = []
    for a, b in sorted(edges):
        x = float(rng.uniform(0.01, 0.04))
        lines.append(
            {"from": a, "to": b, "r": round(x * float(rng.uniform(0.2, 0.4)), 6), "x": round(x, 6),
             "b_shunt": round(float(rng.uniform(0.0, 0.02)), 6)}
        )
    buses = []
    for bid in ids:
        p = float(rng.uniform(0.3, 1.0)) * load_mw
        buses.append(
            {"id": bid, "vmin": vmin, "vmax": vmax, "regulated": True,
             "pl": round(p, 4), "ql": round(p * float(rng.uniform(0.2, 0.4)), 4)}
        )
    gen_buses = sorted(int(b) for b in rng.choice(ids, size=n_gen, replace=False))
    gens = [
        {"bus": b, "c": round(float(rng.uniform(0.5, 2.0)), 4), "d": round(float(rng.uniform(0.2, 1.0)), 4),
         "s_rating": round(3.0 * load_mw, 4), "p_av_max": round(2.0 * load_mw, 4)}
        for b in gen_buses
    ]
    return {
        "baseMVA": base_mva,
        "slack": {"bus": 0, "rho0": 1.0, "theta0": 0.0},
        "buses": buses,
        "lines": lines,
        "generators": gens,
    }
