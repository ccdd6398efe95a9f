"""Lifted decision vector, feasible box and the augmented Lagrangian.

The state ``xi`` is a flat float array laid out as
``(x, t, g, h, z, lam_t, lam_g, lam_h, lam_z)``. All per-bus blocks have
``N`` entries, the ``z`` and ``lam_z`` blocks have one entry per generator in
generator order.

Every coordinate restriction ``alpha -> L(xi + alpha e_i) - L(xi)`` is a
polynomial of degree at most four. :meth:`Lagrangian.restriction` returns its
ascending coefficients; gradient and curvature along ``e_i`` are read off it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NumericalError
from .network import ConstantMatrices, NetworkModel, build_matrices

BLOCKS = ("x", "t", "g", "h", "z", "lam_t", "lam_g", "lam_h", "lam_z")


@dataclass(frozen=True)
class Layout:
    """Index map between flat positions and ``(block, local index)`` pairs."""

    N: int
    NG: int
    n: int  # buses represented in x
    frozen: tuple[int, ...] = ()

    @cached_property
    def offsets(self) -> dict[str, tuple[int, int]]:
        sizes = {
            "x": 2 * self.n, "t": self.N, "g": self.N, "h": self.N, "z": self.NG,
            "lam_t": self.N, "lam_g": self.N, "lam_h": self.N, "lam_z": self.NG,
        }
        out, pos = {}, 0
        for name in BLOCKS:
            out[name] = (pos, pos + sizes[name])
            pos += sizes[name]
        return out

    @property
    def size(self) -> int:
        return self.offsets["lam_z"][1]

    @property
    def d_free(self) -> int:
        return self.size - len(self.frozen)

    @cached_property
    def free(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[list(self.frozen)] = False
        return np.flatnonzero(mask)

    def slice(self, name: str) -> slice:
        return slice(*self.offsets[name])

    def index(self, name: str, local: int) -> int:
        lo, hi = self.offsets[name]
        if not 0 <= local < hi - lo:
            raise IndexError(f"{name}[{local}] out of range")
        return lo + local

    @cached_property
    def _kinds(self) -> tuple[np.ndarray, np.ndarray]:
        kind = np.empty(self.size, dtype=np.int8)
        local = np.empty(self.size, dtype=np.int64)
        for k, name in enumerate(BLOCKS):
            lo, hi = self.offsets[name]
            kind[lo:hi] = k
            local[lo:hi] = np.arange(hi - lo)
        return kind, local

    def locate(self, i: int) -> tuple[str, int]:
        if not 0 <= i < self.size:
            raise IndexError(f"coordinate {i} out of range 0..{self.size - 1}")
        kind, local = self._kinds
        return BLOCKS[kind[i]], int(local[i])

    def unpack(self, xi: np.ndarray) -> dict[str, np.ndarray]:
        return {name: xi[lo:hi] for name, (lo, hi) in self.offsets.items()}

    def pack(self, parts: dict[str, np.ndarray]) -> np.ndarray:
        xi = np.zeros(self.size)
        for name, (lo, hi) in self.offsets.items():
            xi[lo:hi] = parts[name]
        return xi


def state_layout(N: int, NG: int, n_x: int | None = None, frozen: tuple[int, ...] = ()) -> Layout:
    """Layout for ``N`` buses and ``NG`` generators; ``d = 8N + 2NG`` when ``n_x == N``."""
    if N < 1 or not 0 <= NG <= N:
        raise ValueError("need N >= 1 and 0 <= NG <= N")
    return Layout(N, NG, N if n_x is None else n_x, tuple(frozen))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """The network plus one time step's loads and generator availability (pu)."""

    model: NetworkModel
    matrices: ConstantMatrices
    pl: np.ndarray
    ql: np.ndarray
    pav: np.ndarray
    timestamp: float = 0.0

    @cached_property
    def layout(self) -> Layout:
        m = self.matrices
        # the x block starts at position 0, so frozen x positions are global
        return state_layout(m.N, self.model.NG, m.n, m.frozen_x)

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return self.model.gen_buses

    @cached_property
    def load_offset(self) -> np.ndarray:
        N = self.model.N
        return np.concatenate([self.pl, self.ql, np.zeros(N)])

    @cached_property
    def cost_weight(self) -> np.ndarray:
        N = self.model.N
        w = np.zeros(3 * N)
        for g in self.model.generators:
            w[g.bus] = g.c
            w[N + g.bus] = g.d
        return w

    @cached_property
    def gen_k(self) -> np.ndarray:
        """Generator index per bus, -1 for buses without one."""
        out = np.full(self.model.N, -1, dtype=int)
        out[self.gen_bus] = np.arange(self.model.NG)
        return out

    def with_data(self, pl=None, ql=None, pav=None, timestamp=None) -> "ProblemInstance":
        return make_instance(
            self.model, self.matrices,
            self.pl if pl is None else pl,
            self.ql if ql is None else ql,
            self.pav if pav is None else pav,
            self.timestamp if timestamp is None else timestamp,
        )


def make_instance(model, matrices=None, pl=None, ql=None, pav=None, timestamp: float = 0.0) -> ProblemInstance:
    """Instance with loads/availability defaulting to the case's static values."""
    if matrices is None:
        matrices = build_matrices(model)
    pl = np.array(model.pl if pl is None else pl, dtype=float)
    ql = np.array(model.ql if ql is None else ql, dtype=float)
    if pav is None:
        pav = [g.p_av_max for g in model.generators]
    pav = np.array(pav, dtype=float)
    if pl.shape != (model.N,) or ql.shape != (model.N,):
        raise ValueError(f"loads must have {model.N} entries")
    if pav.shape != (model.NG,):
        raise ValueError(f"availability must have {model.NG} entries")
    if not (np.all(np.isfinite(pl)) and np.all(np.isfinite(ql)) and np.all(np.isfinite(pav))):
        raise ValueError("loads and availability must be finite")
    if np.any(pav < 0):
        raise ValueError("availability must be non-negative")
    for arr in (pl, ql, pav):
        arr.flags.writeable = False
    return ProblemInstance(model, matrices, pl, ql, pav, float(timestamp))


@dataclass(frozen=True, eq=False)
class BoxSet:
    lo: np.ndarray
    hi: np.ndarray


def build_box(inst: ProblemInstance) -> BoxSet:
    """Coordinate bounds of the feasible polyhedron.

    Voltage bounds on ``h`` for regulated buses, ``z <= S^2`` and
    ``-P_l <= t <= min(P_av, S) - P_l`` at generators, and equality pins
    ``t = -P_l``, ``g = -Q_l`` elsewhere as degenerate intervals.
    """
    lay = inst.layout
    model = inst.model
    lo = np.full(lay.size, -np.inf)
    hi = np.full(lay.size, np.inf)
    t0, g0, h0, z0 = (lay.offsets[b][0] for b in ("t", "g", "h", "z"))
    N = model.N
    reg = model.regulated
    lo[h0:h0 + N] = np.where(reg, model.vmin ** 2, -np.inf)
    hi[h0:h0 + N] = np.where(reg, model.vmax ** 2, np.inf)
    is_gen = inst.gen_k >= 0
    lo[t0:t0 + N] = -inst.pl
    hi[t0:t0 + N] = np.where(is_gen, 0.0, -inst.pl)
    lo[g0:g0 + N] = np.where(is_gen, -np.inf, -inst.ql)
    hi[g0:g0 + N] = np.where(is_gen, np.inf, -inst.ql)
    for k, gen in enumerate(model.generators):
        pmax = min(inst.pav[k], gen.s_rating)
        hi[t0 + gen.bus] = pmax - inst.pl[gen.bus]
        hi[z0 + k] = gen.s_rating ** 2
    return BoxSet(lo, hi)


def project_box(xi: np.ndarray, box: BoxSet) -> np.ndarray:
    """Euclidean projection onto the box (coordinate-wise clamp)."""
    return np.minimum(np.maximum(xi, box.lo), box.hi)


def in_box(xi: np.ndarray, box: BoxSet) -> bool:
    return bool(np.all(xi >= box.lo) and np.all(xi <= box.hi))


@dataclass(frozen=True)
class Residuals:
    rt: np.ndarray
    rg: np.ndarray
    rh: np.ndarray
    rz: np.ndarray


def _residuals(xi, inst, F) -> Residuals:
    lay = inst.layout
    N = inst.model.N
    t, g, h, z = (xi[lay.slice(b)] for b in ("t", "g", "h", "z"))
    gb = inst.gen_bus
    rz = (t[gb] + inst.pl[gb]) ** 2 + (g[gb] + inst.ql[gb]) ** 2 - z
    return Residuals(F[:N] - t, F[N:2 * N] - g, F[2 * N:] - h, rz)


def residuals(xi: np.ndarray, inst: ProblemInstance) -> Residuals:
    """Constraint residuals of the lifted equalities (trace forms minus auxiliaries)."""
    return _residuals(xi, inst, inst.matrices.forms(xi[inst.layout.slice("x")]))


def initial_state(inst: ProblemInstance) -> np.ndarray:
    """Flat start: every voltage equals the slack voltage, auxiliaries consistent, multipliers zero."""
    lay = inst.layout
    m = inst.matrices
    xi = np.zeros(lay.size)
    x = xi[lay.slice("x")]
    x[: m.n] = m.slack_x[0]
    x[m.n:] = m.slack_x[1]
    F = m.forms(x)
    N = inst.model.N
    xi[lay.slice("t")] = F[:N]
    xi[lay.slice("g")] = F[N:2 * N]
    xi[lay.slice("h")] = F[2 * N:]
    xi = project_box(xi, build_box(inst))
    gb = inst.gen_bus
    t, g = xi[lay.slice("t")], xi[lay.slice("g")]
    xi[lay.slice("z")] = (t[gb] + inst.pl[gb]) ** 2 + (g[gb] + inst.ql[gb]) ** 2
    return project_box(xi, build_box(inst))


class _XTable:
    """Per-x-coordinate sparse rows of every form touching that coordinate."""

    def __init__(self, m: ConstantMatrices):
        size = 2 * m.n
        mats = list(m.Y) + list(m.Ybar) + list(m.M)
        lin = m.linear
        touching: list[set[int]] = [set() for _ in range(size)]
        for f, A in enumerate(mats):
            for r in np.flatnonzero(np.diff(A.indptr)):
                touching[r].add(f)
            for j in np.flatnonzero(lin[f]):
                touching[j].add(f)
        self.rows, self.cols, self.R, self.gamma, self.omega = [], [], [], [], []
        for j in range(size):
            fs = np.array(sorted(touching[j]), dtype=np.int64)
            colset = set()
            for f in fs:
                A = mats[f]
                colset.update(A.indices[A.indptr[j]:A.indptr[j + 1]].tolist())
            cols = np.array(sorted(colset), dtype=np.int64)
            R = np.zeros((fs.size, cols.size))
            pos = {c: k for k, c in enumerate(cols)}
            for a, f in enumerate(fs):
                A = mats[f]
                lo, hi = A.indptr[j], A.indptr[j + 1]
                for c, v in zip(A.indices[lo:hi], A.data[lo:hi]):
                    R[a, pos[c]] = v
            gamma = R[:, pos[j]].copy() if j in pos else np.zeros(fs.size)
            self.rows.append(fs)
            self.cols.append(cols)
            self.R.append(R)
            self.gamma.append(gamma)
            self.omega.append(lin[fs, j].copy())


_TABLES: dict[int, tuple[ConstantMatrices, _XTable]] = {}


def _xtable(m: ConstantMatrices) -> _XTable:
    hit = _TABLES.get(id(m))
    if hit is None or hit[0] is not m:
        hit = (m, _XTable(m))
        _TABLES[id(m)] = hit
    return hit[1]


class Lagrangian:
    """Augmented Lagrangian ``L(xi, mu)`` of one problem instance.

    Methods accept an optional precomputed forms vector ``F`` (the values of
    all ``tr(Y_i xx^T) + omega_i^T x``, ``tr(Ybar_i xx^T) + ...`` and
    ``tr(M_i xx^T)``) so the solver can keep it cached across updates.
    """

    def __init__(self, inst: ProblemInstance, mu: float):
        if not mu >= 0:
            raise ValueError("mu must be >= 0")
        self.inst = inst
        self.mu = float(mu)
        self.layout = inst.layout
        self.table = _xtable(inst.matrices)
        lay = self.layout
        self.N = inst.model.N
        self.nx = 2 * inst.matrices.n
        self.t0 = lay.offsets["t"][0]
        self.g0 = lay.offsets["g"][0]
        self.h0 = lay.offsets["h"][0]
        self.z0 = lay.offsets["z"][0]
        self.lt0 = lay.offsets["lam_t"][0]
        self.lz0 = lay.offsets["lam_z"][0]
        kinds, local = lay._kinds
        self.kind = kinds.tolist()
        self.local = local.tolist()
        self.pl = inst.pl.tolist()
        self.ql = inst.ql.tolist()
        self.gen_k = inst.gen_k.tolist()
        self.gen_bus = inst.gen_bus.tolist()
        self.load_offset = inst.load_offset
        self.cost_weight = inst.cost_weight

    def forms(self, xi: np.ndarray) -> np.ndarray:
        return self.inst.matrices.forms(xi[: self.nx])

    def value(self, xi: np.ndarray, F: np.ndarray | None = None) -> float:
        if F is None:
            F = self.forms(xi)
        N, mu = self.N, self.mu
        inst = self.inst
        gb = inst.gen_bus
        cost = float(np.sum(self.cost_weight[: 2 * N] * (self.load_offset[: 2 * N] + F[: 2 * N]) ** 2))
        r = _residuals(xi, inst, F)
        lam = xi[self.lt0:]
        rr = np.concatenate([r.rt, r.rg, r.rh, r.rz])
        val = cost - float(lam @ rr) + 0.5 * mu * float(rr @ rr)
        if not math.isfinite(val):
            raise NumericalError(f"augmented Lagrangian is not finite ({val})")
        return val

    def _rz(self, xi, k: int) -> float:
        b = self.gen_bus[k]
        tp = xi[self.t0 + b] + self.pl[b]
        gq = xi[self.g0 + b] + self.ql[b]
        return tp * tp + gq * gq - xi[self.z0 + k]

    def x_restriction(self, xi: np.ndarray, j: int, F: np.ndarray):
        """Coefficients for x coordinate ``j`` plus the form rows it touches.

        Returns ``(coeffs, rows, beta, gamma)`` where every touched form moves by
        ``beta * a + gamma * a**2`` when ``x_j`` moves by ``a``.
        """
        tab = self.table
        rows = tab.rows[j]
        gamma = tab.gamma[j]
        beta = 2.0 * (tab.R[j] @ xi[tab.cols[j]]) + tab.omega[j]
        Fr = F[rows]
        W = 0.5 * self.mu
        cw = self.cost_weight[rows]
        aux = xi[self.t0 + rows]
        lam = xi[self.lt0 + rows]
        s = self.mu * (Fr - aux) - lam + 2.0 * cw * (Fr + self.load_offset[rows])
        w = W + cw
        wb = w * beta
        coeffs = (
            0.0,
            float(s @ beta),
            float(wb @ beta + s @ gamma),
            float(2.0 * (wb @ gamma)),
            float(w @ (gamma * gamma)),
        )
        return coeffs, rows, beta, gamma

    def restriction(self, xi: np.ndarray, i: int, F: np.ndarray | None = None) -> tuple:
        """Ascending coefficients of ``alpha -> L(xi + alpha e_i) - L(xi)``."""
        if F is None:
            F = self.forms(xi)
        kind = self.kind[i]
        loc = int(self.local[i])
        mu, W = self.mu, 0.5 * self.mu
        N = self.N
        if kind == 0:
            return self.x_restriction(xi, i, F)[0]
        if kind in (1, 2):  # t or g
            a0 = F[(kind - 1) * N + loc] - xi[i]
            lam = xi[self.lt0 + (kind - 1) * N + loc]
            s = mu * a0 - lam
            c1, c2, c3, c4 = -s, W, 0.0, 0.0
            k = self.gen_k[loc]
            if k >= 0:
                off = self.pl[loc] if kind == 1 else self.ql[loc]
                beta = 2.0 * (xi[i] + off)
                s2 = mu * self._rz(xi, k) - xi[self.lz0 + k]
                c1 += s2 * beta
                c2 += W * beta * beta + s2
                c3 += 2.0 * W * beta
                c4 += W
            return (0.0, c1, c2, c3, c4)
        if kind == 3:  # h
            a0 = F[2 * N + loc] - xi[i]
            s = mu * a0 - xi[self.lt0 + 2 * N + loc]
            return (0.0, -s, W, 0.0, 0.0)
        if kind == 4:  # z
            s = mu * self._rz(xi, loc) - xi[self.lz0 + loc]
            return (0.0, -s, W, 0.0, 0.0)
        # multipliers: L is linear with slope -residual
        return (0.0, -self.residual(xi, i, F), 0.0, 0.0, 0.0)

    def residual(self, xi: np.ndarray, i: int, F: np.ndarray) -> float:
        """Residual of the constraint paired with multiplier coordinate ``i``."""
        kind = self.kind[i]
        loc = int(self.local[i])
        if kind == 8:
            return self._rz(xi, loc)
        f = (kind - 5) * self.N + loc
        return float(F[f] - xi[self.t0 + f])

    def gradient(self, xi: np.ndarray, F: np.ndarray | None = None) -> np.ndarray:
        if F is None:
            F = self.forms(xi)
        return np.array([self.restriction(xi, i, F)[1] for i in range(xi.size)])


def eval_lagrangian(xi: np.ndarray, mu: float, inst: ProblemInstance) -> float:
    """Value of the augmented Lagrangian at ``xi``."""
    return Lagrangian(inst, mu).value(np.asarray(xi, dtype=float))


def coord_gradient(xi: np.ndarray, mu: float, inst: ProblemInstance, i: int) -> float:
    """Exact partial derivative of ``L`` along coordinate ``i``."""
    inst.layout.locate(i)
    return Lagrangian(inst, mu).restriction(np.asarray(xi, dtype=float), i)[1]


def coord_curvature(xi: np.ndarray, mu: float, inst: ProblemInstance, i: int) -> float:
    """Exact second partial derivative of ``L`` along coordinate ``i``."""
    inst.layout.locate(i)
    return 2.0 * Lagrangian(inst, mu).restriction(np.asarray(xi, dtype=float), i)[2]


@dataclass(frozen=True)
class Metrics:
    cost: float
    T: float
    T_prime: float
    vmag: np.ndarray


def eval_metrics(xi: np.ndarray, inst: ProblemInstance, F: np.ndarray | None = None) -> Metrics:
    """Generation cost, infeasibility ``T``, its generator-only part ``T'`` and ``|V|``."""
    lay = inst.layout
    m = inst.matrices
    x = xi[lay.slice("x")]
    if F is None:
        F = m.forms(x)
    N = inst.model.N
    cost = float(np.sum(inst.cost_weight[: 2 * N] * (inst.load_offset[: 2 * N] + F[: 2 * N]) ** 2))
    r = _residuals(xi, inst, F)
    sq_t, sq_g = r.rt ** 2, r.rg ** 2
    gen = inst.gen_k >= 0
    T_prime = float(sq_t[gen].sum() + sq_g[gen].sum() + (r.rh ** 2).sum() + (r.rz ** 2).sum())
    # adding the non-negative non-generator terms last keeps T' <= T in floating point
    T = T_prime + float(sq_t[~gen].sum() + sq_g[~gen].sum())
    vmag = np.sqrt(x[:N] ** 2 + x[m.n:m.n + N] ** 2)
    return Metrics(cost, T, T_prime, vmag)
