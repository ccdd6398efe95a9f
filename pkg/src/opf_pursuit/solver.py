"""Randomized coordinate descent on the augmented Lagrangian.

Two update rules are available for primal coordinates:

``exact``
    global minimization of the univariate restriction (a quartic for x, t, g
    and a quadratic for h, z) over the coordinate's box interval.
``prox``
    the box-projected gradient step ``clamp(xi_i - grad_i / L) - xi_i``.

Multiplier coordinates take a step on the residual of their constraint,
``lam <- lam - step * residual`` (ascent in ``lam``), in both modes. The
default step is ``mu / 2``; a full ``mu`` step oscillates when the same
multiplier is drawn several times before the primal coordinates catch up.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .complexity import CUBIC_ROOT_FLOPS, update_charges
from .errors import NumericalError, OPFError
from .lifted import BoxSet, Lagrangian, ProblemInstance, build_box, initial_state, project_box
from .polynomial import minimize_univariate, polyval

log = logging.getLogger(__name__)

MU_BAR = 10.0
MODES = ("exact", "prox")
LIPSCHITZ_SAFETY = 1.1


@dataclass
class SolverConfig:
    mu: float = 1.0
    mode: str = "exact"
    seed: int = 0
    budget: int = 1
    L: float | str = "auto"
    dual_step: float | str = "auto"
    radius: float = 0.1
    slack_mode: str = "embedded"
    mu_bar: float = MU_BAR

    def __post_init__(self):
        problems = []
        if not 0 <= self.mu <= self.mu_bar:
            problems.append(f"mu must lie in [0, {self.mu_bar}]")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}")
        if int(self.budget) != self.budget or self.budget < 1:
            problems.append("budget must be an integer >= 1")
        if self.L != "auto" and not (isinstance(self.L, (int, float)) and self.L > 0):
            problems.append("L must be 'auto' or a positive number")
        if self.dual_step != "auto" and not (isinstance(self.dual_step, (int, float)) and self.dual_step > 0):
            problems.append("dual_step must be 'auto' or a positive number")
        if not self.radius > 0:
            problems.append("radius must be positive")
        if problems:
            raise ValueError("; ".join(problems))
        self.budget = int(self.budget)

    def to_dict(self) -> dict:
        return asdict(self)


def _charge_kinds(inst: ProblemInstance) -> np.ndarray:
    """Per-coordinate charge category name used by the flop tally."""
    lay = inst.layout
    kinds = np.empty(lay.size, dtype=object)
    kinds[lay.slice("x")] = "x"
    is_gen = inst.gen_k >= 0
    kinds[lay.slice("t")] = np.where(is_gen, "t_gen", "t_pinned")
    kinds[lay.slice("g")] = np.where(is_gen, "g_gen", "g_pinned")
    kinds[lay.slice("h")] = "h"
    kinds[lay.slice("z")] = "z"
    kinds[lay.offsets["lam_t"][0]:] = "lam"
    return kinds


class CoordinateDescent:
    """Working state of one solver run: iterate, cached forms, RNG and tallies."""

    def __init__(self, inst: ProblemInstance, config: SolverConfig, xi0: np.ndarray | None = None):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.flops = 0
        self.root_evals = 0
        self.updates = 0
        self.inst = None
        xi = initial_state(inst) if xi0 is None else np.array(xi0, dtype=float)
        self.xi = xi
        self.set_instance(inst)
        self.auto_L = config.L == "auto" and (
            config.mode == "prox" or (config.dual_step == "auto" and config.mu == 0)
        )
        self.lipschitz = self.curvature_bound() if self.auto_L else (1.0 if config.L == "auto" else float(config.L))

    def set_instance(self, inst: ProblemInstance) -> None:
        """Switch to new data, keeping the iterate (projected onto the new box)."""
        same_net = self.inst is not None and self.inst.matrices is inst.matrices
        self.inst = inst
        self.lag = Lagrangian(inst, self.config.mu)
        self.box: BoxSet = build_box(inst)
        self.lo = self.box.lo
        self.hi = self.box.hi
        if self.xi.size != inst.layout.size:
            raise ValueError("state size does not match the instance layout")
        self.xi = project_box(self.xi, self.box)
        self.refresh()
        if not same_net:
            self.free = inst.layout.free
            N = inst.model.N
            charges = update_charges(N, inst.model.NG, inst.matrices.p)
            kinds = _charge_kinds(inst)
            self._flops = np.array([charges[k][0] for k in kinds], dtype=np.int64)
            self._roots = np.array([charges[k][1] for k in kinds], dtype=np.int64)

    def refresh(self) -> None:
        """Recompute the cached forms from scratch."""
        self.F = self.lag.forms(self.xi)

    def value(self) -> float:
        return self.lag.value(self.xi, self.F)

    def curvature_bound(self) -> float:
        """Largest |d^2 L / d xi_i^2| over free coordinates at the iterate, times the safety factor."""
        lag, xi, F = self.lag, self.xi, self.F
        best = 0.0
        for i in self.free:
            best = max(best, abs(2.0 * lag.restriction(xi, int(i), F)[2]))
        return LIPSCHITZ_SAFETY * best if best > 0 else 1.0

    def dual_step(self) -> float:
        s = self.config.dual_step
        if s != "auto":
            return float(s)
        mu = self.config.mu
        return 0.5 * mu if mu > 0 else 1.0 / self.lipschitz

    def update(self, i: int) -> float:
        """Update coordinate ``i`` in place; returns the change in ``L``."""
        lag, xi = self.lag, self.xi
        kind = lag.kind[i]
        self.flops += int(self._flops[i])
        self.root_evals += int(self._roots[i])
        self.updates += 1
        if kind >= 5:
            r = lag.residual(xi, i, self.F)
            alpha = -self.dual_step() * r
            xi[i] += alpha
            return -r * alpha
        rows = None
        if kind == 0:
            coeffs, rows, beta, gamma = lag.x_restriction(xi, i, self.F)
        else:
            coeffs = lag.restriction(xi, i, self.F)
        lo = self.lo[i] - xi[i]
        hi = self.hi[i] - xi[i]
        if self.config.mode == "exact":
            label = "{}[{}]".format(*self.inst.layout.locate(i))
            alpha, delta = minimize_univariate(coeffs, lo, hi, label=label)
            if delta > 0.0 and lo <= 0.0 <= hi:
                alpha, delta = 0.0, 0.0
        else:
            alpha = min(max(-coeffs[1] / self.lipschitz, lo), hi)
            delta = polyval(coeffs, alpha)
        if alpha != 0.0:
            xi[i] += alpha
            if rows is not None:
                self.F[rows] += alpha * (beta + alpha * gamma)
        return delta

    def epoch(self) -> None:
        """Visit every free coordinate once in increasing order."""
        for i in self.free:
            self.update(int(i))
        self.refresh()
        if self.auto_L:
            self.lipschitz = self.curvature_bound()

    def run(self, n_updates: int, values: list | None = None) -> None:
        """``n_updates`` uniformly drawn coordinate updates.

        With ``values`` given, ``L`` after every update is appended to it.
        The cached forms are rebuilt and, when an automatic ``L`` is in use,
        the curvature bound re-estimated after every ``d`` updates.
        """
        d = self.free.size
        current = self.value() if values is not None else 0.0
        done = 0
        while done < n_updates:
            chunk = min(n_updates - done, d - self.updates % d)
            draws = self.free[self.rng.integers(0, d, size=chunk)]
            for i in draws:
                delta = self.update(int(i))
                if values is not None:
                    current += delta
                    if not math.isfinite(current):
                        raise NumericalError(f"non-finite L after update of coordinate {int(i)}")
                    values.append(current)
            done += chunk
            if self.updates % d == 0:
                self.refresh()
                if values is not None:
                    current = self.value()
                    if not math.isfinite(current):
                        raise NumericalError("non-finite L at epoch boundary")
                    values[-1] = current
                if self.auto_L:
                    self.lipschitz = self.curvature_bound()


def coord_update_exact(xi, i, mu, inst, box=None, dual_step: float | str = "auto", L: float = 1.0) -> np.ndarray:
    """Exact minimization along primal coordinate ``i`` (multipliers take the residual step)."""
    cfg = SolverConfig(mu=mu, mode="exact", L=L, dual_step=dual_step, mu_bar=max(MU_BAR, mu))
    return _single_update(xi, i, inst, cfg, box)


def coord_update_prox(xi, i, mu, inst, box=None, L: float = 1.0, dual_step: float | str = "auto") -> np.ndarray:
    """Box-projected gradient step along coordinate ``i`` with constant ``L``."""
    cfg = SolverConfig(mu=mu, mode="prox", L=L, dual_step=dual_step, mu_bar=max(MU_BAR, mu))
    return _single_update(xi, i, inst, cfg, box)


def _single_update(xi, i, inst, cfg, box):
    if i in inst.layout.frozen:
        raise ValueError(f"coordinate {i} is frozen")
    cd = CoordinateDescent(inst, cfg, xi0=np.array(xi, dtype=float))
    if box is not None:
        cd.lo, cd.hi = box.lo, box.hi
    cd.xi = np.array(xi, dtype=float)
    cd.refresh()
    cd.update(int(i))
    return cd.xi


def epoch(xi, mu, inst, config: SolverConfig):
    """One cyclic pass; returns ``(new state, arithmetic flops, cubic solves)``."""
    cd = CoordinateDescent(inst, config, xi0=xi)
    cd.epoch()
    return cd.xi, cd.flops, cd.root_evals


@dataclass
class StaticResult:
    xi: np.ndarray
    values: np.ndarray
    flops: int
    root_evals: int


def solve_static(inst: ProblemInstance, config: SolverConfig, n_updates: int, xi0=None) -> StaticResult:
    """Run ``n_updates`` random coordinate updates on a fixed instance.

    ``values[k]`` is ``L(xi^k, mu)``; ``values[0]`` is the starting value.
    """
    cd = CoordinateDescent(inst, config, xi0=xi0)
    values = [cd.value()]
    cd.run(n_updates, values)
    return StaticResult(cd.xi, np.array(values), cd.flops, cd.root_evals)


def estimate_lipschitz(xi_star, r: float, mu: float, inst: ProblemInstance, samples: int, seed: int = 0) -> float:
    """Sampled coordinate-wise Lipschitz constant on the ball ``B_r(xi_star)``.

    Points are drawn uniformly in the ball over the free coordinates (the
    centre included); the result is the largest ``|d^2 L / d xi_i^2|`` seen,
    times the safety factor.
    """
    if not r > 0 or samples < 1:
        raise ValueError("need r > 0 and samples >= 1")
    lag = Lagrangian(inst, mu)
    free = inst.layout.free
    rng = np.random.default_rng(seed)
    center = np.asarray(xi_star, dtype=float)
    best = 0.0
    for s in range(samples):
        xi = center.copy()
        if s > 0:
            u = rng.normal(size=free.size)
            u *= r * rng.uniform() ** (1.0 / free.size) / np.linalg.norm(u)
            xi[free] += u
        F = lag.forms(xi)
        for i in free:
            best = max(best, abs(2.0 * lag.restriction(xi, int(i), F)[2]))
    return LIPSCHITZ_SAFETY * best


def prox_gradient_steps(xi, L: float, mu: float, inst: ProblemInstance, box: BoxSet | None = None):
    """Per-coordinate solution of the separable prox subproblem: ``(grad, step)`` on free coordinates."""
    if not L > 0:
        raise ValueError("L must be positive")
    box = build_box(inst) if box is None else box
    xi = np.asarray(xi, dtype=float)
    lag = Lagrangian(inst, mu)
    free = inst.layout.free
    grad = lag.gradient(xi)[free]
    target = np.clip(xi[free] - grad / L, box.lo[free], box.hi[free])
    return grad, target - xi[free]


def pl_gap(xi, L: float, mu: float, inst: ProblemInstance, box: BoxSet | None = None) -> float:
    """Half the proximal gradient mapping norm ``D(xi, L) / 2`` (non-negative)."""
    grad, step = prox_gradient_steps(xi, L, mu, inst, box)
    inner = float(grad @ step + 0.5 * L * (step @ step))
    return max(0.0, -L * inner)


def estimate_drift(inst_k: ProblemInstance, inst_km1: ProblemInstance, mu: float, states) -> float:
    """Largest observed ``|L^k(xi) - L^{k-1}(xi)|`` over the sample states.

    A lower bound on the true supremum over the feasible box.
    """
    if inst_k.model is not inst_km1.model and inst_k.layout != inst_km1.layout:
        raise ValueError("instances must share the network")
    a = Lagrangian(inst_k, mu)
    b = Lagrangian(inst_km1, mu)
    best = 0.0
    for xi in states:
        xi = np.asarray(xi, dtype=float)
        F = a.forms(xi)
        best = max(best, abs(a.value(xi, F) - b.value(xi, F)))
    return best


def _same_data(a: ProblemInstance, b: ProblemInstance) -> bool:
    return (
        a.matrices is b.matrices
        and np.array_equal(a.pl, b.pl)
        and np.array_equal(a.ql, b.ql)
        and np.array_equal(a.pav, b.pav)
    )


def track(
    scenario,
    model,
    config: SolverConfig,
    solver_hz: float | None = None,
    report_buses=None,
    matrices=None,
    header_extra: dict | None = None,
    xi0=None,
):
    """Run the tracking loop over a scenario and return a :class:`TrackingReport`.

    At each solver step the instance under zero-order hold replaces the
    previous one (the iterate is kept and projected onto the new box), then
    ``config.budget`` coordinate updates run. A step that raises a package
    error is logged in ``report.failures``; the iterate is reset to its state
    at the start of that step and tracking continues.
    """
    from .lifted import eval_metrics
    from .network import build_matrices
    from .report import StepRecord, TrackingReport
    from .scenario import instance_at, solver_steps

    solver_hz = scenario.data_hz if solver_hz is None else float(solver_hz)
    matrices = build_matrices(model, config.slack_mode) if matrices is None else matrices
    ids = list(model.bus_ids)
    buses = ids if report_buses is None else list(report_buses)
    cols = []
    for b in buses:
        if b not in ids:
            raise ValueError(f"report bus {b} is not a non-slack bus of the case")
        cols.append(ids.index(b))
    n_steps = solver_steps(scenario, solver_hz)
    reg = model.regulated
    header = {
        "config": config.to_dict(),
        "seed": config.seed,
        "case_hash": model.source_hash,
        "scenario_hash": scenario.digest(),
        "scenario": scenario.metadata,
        "data_hz": scenario.data_hz,
        "solver_hz": solver_hz,
        "steps": n_steps,
        "N": model.N,
        "NG": model.NG,
        "voltage_bounds": {
            "vmin": float(np.min(model.vmin[reg])) if reg.any() else None,
            "vmax": float(np.max(model.vmax[reg])) if reg.any() else None,
        },
        "report_buses": buses,
    }
    if header_extra:
        header.update(header_extra)
    report = TrackingReport(header)

    inst = instance_at(scenario, model, 0, solver_hz, matrices)
    cd = CoordinateDescent(inst, config, xi0=xi0)
    header["d_free"] = int(cd.free.size)
    mu = config.mu
    for k in range(n_steps):
        drift = 0.0
        if k > 0:
            new = instance_at(scenario, model, k, solver_hz, matrices)
            if _same_data(new, cd.inst):
                cd.inst = new
            else:
                drift = estimate_drift(new, cd.inst, mu, [cd.xi])
                cd.set_instance(new)
        start = cd.xi.copy()
        try:
            cd.run(config.budget)
        except OPFError as exc:
            log.warning("step %d failed: %s", k, exc)
            report.failures.append({"k": k, "error": f"{type(exc).__name__}: {exc}"})
            cd.xi = start
            cd.refresh()
        m = eval_metrics(cd.xi, cd.inst)
        F = cd.lag.forms(cd.xi)
        try:
            L = cd.lag.value(cd.xi, F)
        except NumericalError:
            L = math.nan
        report.records.append(StepRecord(
            k=k,
            timestamp=cd.inst.timestamp,
            cost=m.cost,
            T=m.T,
            T_prime=m.T_prime,
            L=L,
            flops=int(cd.flops + CUBIC_ROOT_FLOPS * cd.root_evals),
            drift=drift,
            vmag=[float(v) for v in m.vmag[cols]],
        ))
    return report


__all__ = [
    "CoordinateDescent", "SolverConfig", "StaticResult", "coord_update_exact", "coord_update_prox",
    "epoch", "estimate_drift", "estimate_lipschitz", "pl_gap", "solve_static", "track", "OPFError",
    "CUBIC_ROOT_FLOPS",
]
