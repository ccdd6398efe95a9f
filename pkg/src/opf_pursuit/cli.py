"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 domain/validation/input error,
3 numerical failure. Run settings come from flags, then ``--config`` (a
JSON object using the flag names with underscores), then defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .complexity import BoundInputs, budget_for_error, flop_counts
from .errors import CaseFormatError, DomainError, NumericalError, OPFError, UnboundedSubproblemError
from .lifted import eval_metrics, make_instance
from .network import build_matrices, parse_case, synth_case, validate_network
from .report import emit_outputs, report_to_csv
from .scenario import SynthSpec, load_scenario, save_scenario, synth_scenario
from .solver import SolverConfig, solve_static, track

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "mu": 1.0,
    "mode": "exact",
    "budget": None,  # one epoch of free coordinates
    "seed": 0,
    "L": "auto",
    "dual_step": "auto",
    "slack_mode": "embedded",
    "solver_hz": None,  # data rate
    "format": "csv",
    "report_buses": None,  # every non-slack bus
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _lipschitz(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number or 'auto'") from None


def _bus_list(text: str) -> list[int]:
    try:
        return [int(b) for b in text.split(",") if b.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated bus ids") from None


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help="case JSON file")
    p.add_argument("--config", help="JSON file with run settings")
    p.add_argument("--mu", type=float)
    p.add_argument("--mode", choices=("exact", "prox"))
    p.add_argument("--budget", type=int, help="coordinate updates (per step when tracking)")
    p.add_argument("--seed", type=int)
    p.add_argument("--L", type=_lipschitz, help="coordinate Lipschitz constant or 'auto'")
    p.add_argument("--out", help="output path")
    p.add_argument("--format", choices=("csv", "json"))


def _synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--duration", type=float, default=SynthSpec.duration)
    p.add_argument("--data-hz", type=float, default=SynthSpec.data_hz)
    p.add_argument("--amplitude", type=float, default=SynthSpec.amplitude)
    p.add_argument("--period", type=float, default=SynthSpec.period)
    p.add_argument("--noise", type=float, default=SynthSpec.noise)
    p.add_argument("--load-scale", type=float, default=SynthSpec.load_scale)
    p.add_argument("--synth-seed", type=int, default=SynthSpec.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opf-pursuit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="parse and check a case file")
    p.add_argument("case_path", nargs="?", help="case JSON file")
    p.add_argument("--case", dest="case_flag")

    p = sub.add_parser("solve", help="coordinate descent on the static case")
    _run_flags(p)

    p = sub.add_parser("track", help="track a time-varying scenario")
    _run_flags(p)
    p.add_argument("--scenario", help="scenario CSV; synthesized from the --duration... flags if omitted")
    p.add_argument("--solver-hz", type=float)
    p.add_argument("--report-buses", type=_bus_list)
    _synth_flags(p)

    p = sub.add_parser("flops", help="flop counts and the flops-to-error budget")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--NG", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--sigma-l", type=float)
    p.add_argument("--sigma-p", type=float)
    p.add_argument("--e", type=float)
    p.add_argument("--E-k", type=float)

    p = sub.add_parser("synth", help="write a synthetic scenario CSV or case JSON")
    p.add_argument("--kind", choices=("scenario", "case"), default="scenario")
    p.add_argument("--case", help="case JSON (scenario kind)")
    p.add_argument("--out", required=True)
    p.add_argument("--buses", type=int, help="bus count including the slack (case kind)")
    p.add_argument("--gens", type=int, help="generator count (case kind)")
    p.add_argument("--vmin", type=float, default=0.94)
    p.add_argument("--vmax", type=float, default=1.06)
    _synth_flags(p)
    return parser


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CaseFormatError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
        if not isinstance(data, dict):
            raise CaseFormatError("config must be a JSON object", str(path))
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise CaseFormatError(f"unknown setting(s) {', '.join(unknown)}", str(path))
        cfg.update(data)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _solver_config(cfg: dict, d_free: int) -> SolverConfig:
    budget = d_free if cfg["budget"] is None else cfg["budget"]
    return SolverConfig(
        mu=cfg["mu"], mode=cfg["mode"], seed=cfg["seed"], budget=budget, L=cfg["L"],
        dual_step=cfg["dual_step"], slack_mode=cfg["slack_mode"],
    )


def _spec(args) -> SynthSpec:
    return SynthSpec(
        duration=args.duration, data_hz=args.data_hz, load_scale=args.load_scale,
        amplitude=args.amplitude, period=args.period, noise=args.noise, seed=args.synth_seed,
    )


def _cmd_validate(args) -> int:
    path = args.case_path or args.case_flag
    if not path:
        raise UsageError("validate: a case path is required")
    model = parse_case(path)
    problems = validate_network(model)
    if problems:
        for msg in problems:
            print(f"invalid: {msg}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"ok: {path}: {model.N} buses + slack, {len(model.lines)} lines, {model.NG} generators")
    return EXIT_OK


def _cmd_solve(args) -> int:
    cfg = _settings(args)
    model = parse_case(args.case)
    mats = build_matrices(model, cfg["slack_mode"])
    inst = make_instance(model, mats)
    config = _solver_config(cfg, inst.layout.d_free)
    res = solve_static(inst, config, config.budget)
    m = eval_metrics(res.xi, inst)
    out = {
        "case_hash": model.source_hash,
        "config": config.to_dict(),
        "updates": config.budget,
        "L": float(res.values[-1]),
        "cost": m.cost,
        "T": m.T,
        "T_prime": m.T_prime,
        "flops": int(res.flops),
        "cubic_roots": int(res.root_evals),
        "vmag": {str(b): float(v) for b, v in zip(model.bus_ids, m.vmag)},
    }
    print(f"L = {out['L']!r}  cost = {m.cost!r}  T = {m.T!r}  T' = {m.T_prime!r}")
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=1, sort_keys=True), encoding="utf-8")
    return EXIT_OK


def _cmd_track(args) -> int:
    cfg = _settings(args)
    model = parse_case(args.case)
    mats = build_matrices(model, cfg["slack_mode"])
    if args.scenario:
        scenario = load_scenario(args.scenario, model)
        extra = {}
    else:
        spec = _spec(args)
        scenario = synth_scenario(model, spec)
        extra = {"synth_spec": spec.__dict__.copy()}
    d_free = make_instance(model, mats).layout.d_free
    config = _solver_config(cfg, d_free)
    report = track(scenario, model, config, cfg["solver_hz"], cfg["report_buses"], mats, extra)
    b = report.header["voltage_bounds"]
    print(f"case {args.case}: voltage bounds vmin={b['vmin']} vmax={b['vmax']} pu")
    print(f"{len(report.records)} steps at {report.header['solver_hz']} Hz, budget {config.budget} updates/step")
    if report.records:
        last = report.records[-1]
        print(f"final: L={last.L!r} T={last.T!r} T'={last.T_prime!r} flops={last.flops}")
    for f in report.failures:
        print(f"step {f['k']} failed: {f['error']}", file=sys.stderr)
    if args.out:
        emit_outputs(report, cfg["format"], args.out)
    elif cfg["format"] == "csv":
        sys.stdout.write(report_to_csv(report))
    return EXIT_OK


def _cmd_flops(args) -> int:
    fc = flop_counts(args.N, args.NG, args.p)
    print(f"per_epoch {fc.per_epoch} flops + {fc.per_epoch_roots} cubic-root evaluations")
    print(f"per_epoch_total {fc.per_epoch_total} flops (cubic roots at {fc.cubic_root_flops} flops)")
    print(f"per_coordinate_max {fc.per_coordinate_max}")
    print(f"cubic_root_flops {fc.cubic_root_flops}")
    bound = (args.sigma_l, args.sigma_p, args.e, args.E_k)
    if any(v is not None for v in bound):
        if any(v is None for v in bound):
            raise UsageError("flops: --sigma-l, --sigma-p, --e and --E-k must be given together")
        budget = budget_for_error(BoundInputs(*bound, args.N, args.NG, args.p))
        note = "" if budget.positive else " (non-positive: bound gives no requirement)"
        print(f"budget_for_error {budget.flops!r}{note}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    if args.kind == "case":
        if args.buses is None or args.gens is None:
            raise UsageError("synth --kind case needs --buses and --gens")
        from .network import model_from_dict

        data = synth_case(args.buses, args.gens, seed=args.synth_seed, vmin=args.vmin, vmax=args.vmax)
        model_from_dict(data)
        Path(args.out).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
        print(f"wrote case with {args.buses} buses, {args.gens} generators to {args.out}")
        return EXIT_OK
    if not args.case:
        raise UsageError("synth --kind scenario needs --case")
    model = parse_case(args.case)
    scenario = synth_scenario(model, _spec(args))
    save_scenario(scenario, model, args.out)
    print(f"wrote {len(scenario)} samples at {scenario.data_hz} Hz to {args.out}")
    return EXIT_OK


COMMANDS = {
    "validate": _cmd_validate,
    "solve": _cmd_solve,
    "track": _cmd_track,
    "flops": _cmd_flops,
    "synth": _cmd_synth,
}


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, UnboundedSubproblemError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OPFError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
