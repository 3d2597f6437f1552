"""Command-line front end: ``aquarl <subcommand> ...``.

CSV goes to standard output, logs and diagnostics to standard error.
Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import experiment, growth_model as gm, metrics, qlearn
from .errors import AquaRLError, ConfigError

log = logging.getLogger("aquarl")

PARAM_HELP = {
    "m": "anabolism body-weight exponent",
    "n": "catabolism body-weight exponent",
    "h": "food consumption coefficient, g^(1-m)/day",
    "b": "food assimilation efficiency",
    "a": "fraction of assimilated food lost",
    "k_min": "fasting catabolism coefficient at T_min",
    "j": "catabolism temperature slope, 1/C",
    "kappa": "temperature response shape",
    "T_opt": "optimal water temperature, C",
    "T_min": "minimum water temperature, C",
    "T_max": "maximum water temperature, C",
    "UIA_crit": "critical un-ionised ammonia, mg/l",
    "UIA_max": "maximum un-ionised ammonia, mg/l",
    "DO_crit": "critical dissolved oxygen, mg/l",
    "DO_min": "minimum dissolved oxygen, mg/l",
    "rho": "photoperiod factor",
    "rm_fraction": "maximal daily ration as a fraction of body weight",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser, skip=()) -> None:
    defaults = experiment.ExperimentConfig()
    g = p.add_argument_group("experiment config keys (also settable in --config files)")
    for f in dataclasses.fields(experiment.ExperimentConfig):
        if f.name == "params" or f.name in skip:
            continue
        default = getattr(defaults, f.name)
        if isinstance(default, tuple):
            default = ",".join(map(str, default))
        g.add_argument(_flag(f.name), dest=f"cfg_{f.name}", metavar="V", default=None,
                       help=f"{experiment.KEY_HELP.get(f.name, f.name)} [default: {default}]")
    g = p.add_argument_group("growth model constants")
    for f in dataclasses.fields(gm.GrowthParams):
        g.add_argument(_flag(f.name), dest=f"cfg_{f.name}", metavar="V", default=None,
                       help=f"{PARAM_HELP[f.name]} [default: {getattr(defaults.params, f.name)}]")


def _config_from_args(args) -> experiment.ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        from .config import read_kv_file
        values.update(read_kv_file(args.config))
    for k, v in vars(args).items():
        if k.startswith("cfg_") and v is not None:
            values[k[4:]] = v
    return experiment.ExperimentConfig.from_mapping(values)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("AQUARL_SEED")
    if env is None:
        raise UsageError("--seed is required (or set AQUARL_SEED)")
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"AQUARL_SEED must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aquarl", description=(
        "Fish growth simulation and Q-learning feeding control. "
        "Config files hold one 'key = value' per line; command-line flags override them."))
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="integrate the growth model; CSV day,weight_g on stdout")
    p.add_argument("--days", type=int, default=120, help="days to simulate [default: 120]")
    p.add_argument("--feed", type=float, default=1.0, help="relative feeding rate [default: 1.0]")
    p.add_argument("--w0", type=float, default=6.0, help="initial weight, g [default: 6]")
    p.add_argument("--temperature", type=float, default=None,
                   help="water temperature, C [default: T_opt]")
    p.add_argument("--dissolved-oxygen", type=float, default=0.3, help="mg/l [default: 0.3]")
    p.add_argument("--uia", type=float, default=0.03, help="mg/l [default: 0.03]")
    p.add_argument("--substep", type=float, default=1.0, help="Euler sub-step, days [default: 1]")
    p.add_argument("--config", help="growth-model constants file (key = value)")

    p = sub.add_parser("reference", help="generate or inspect a reference trajectory")
    p.add_argument("--inspect", metavar="CSV", help="summarise an existing day,weight_g file")
    p.add_argument("--out", metavar="CSV", help="write the generated trajectory here instead of stdout")
    p.add_argument("--config", help="experiment config file")
    _add_config_flags(p)

    for name, text in (("train", "train a policy and write run artifacts"),
                       ("evaluate", "score the greedy policy of a saved Q-table")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (falls back to $AQUARL_SEED)" if name == "train"
                       else argparse.SUPPRESS)
        if name == "evaluate":
            p.add_argument("--qtable", required=True, help="Q-table CSV written by train")
        p.add_argument("--out-dir", required=(name == "train"), dest="out_dir_arg", metavar="DIR",
                       help="directory for CSV artifacts")
        _add_config_flags(p, skip=("seed", "out_dir"))

    p = sub.add_parser("sweep", help="cross-product sensitivity sweep")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2",
                   help="sweep axis; repeat for more axes")
    p.add_argument("--seed", type=int, default=None, help="first seed (falls back to $AQUARL_SEED)")
    p.add_argument("--n-seeds", type=int, default=10, help="seeds per cell [default: 10]")
    p.add_argument("--workers", type=int, default=1, help="parallel processes [default: 1]")
    p.add_argument("--max-cells", type=int, default=1000, help="cap on cross-product size")
    p.add_argument("--out-dir", required=True, dest="out_dir_arg", metavar="DIR",
                   help="directory for sweep CSVs")
    _add_config_flags(p, skip=("seed", "seeds", "out_dir"))
    return parser


def _cmd_simulate(args, out) -> int:
    params = gm.GrowthParams.from_file(args.config) if args.config else gm.GrowthParams()
    T = params.T_opt if args.temperature is None else args.temperature
    env = gm.EnvConditions(T, args.dissolved_oxygen, args.uia)
    state = gm.FishState(args.w0, 0)
    out.write("day,weight_g\n")
    for _ in range(args.days):
        state = gm.step(state, args.feed, env, params, 1.0, substep=args.substep)
        out.write(f"{int(state.day)},{state.weight:.6g}\n")
    return 0


def _cmd_reference(args, out) -> int:
    if args.inspect:
        ref = gm.Reference.from_csv(args.inspect)
        gain = ref.weights[-1] - ref.weights[0]
        out.write(f"samples: {len(ref.days)}\n")
        out.write(f"days: {ref.days[0]:.6g} .. {ref.days[-1]:.6g}\n")
        out.write(f"weight: {ref.weights[0]:.6g} -> {ref.weights[-1]:.6g} g\n")
        out.write(f"mean daily gain: {gain / max(ref.horizon - ref.days[0], 1):.6g} g/day\n")
        return 0
    cfg = _config_from_args(args)
    ref = cfg.make_reference()
    if args.out:
        ref.to_csv(args.out)
        log.info("wrote %s", args.out)
    else:
        gm.write_reference_csv(out, ref)
    return 0


def _summary(report: metrics.EvalReport, out) -> None:
    status = "converged" if report.converged else "NO CONVERGENCE"
    out.write(f"episodes:      {report.episodes_to_converge} ({status})\n")
    out.write(f"final weight:  {report.final_weight:.6g} g\n")
    out.write(f"total feed:    {report.total_feed:.6g} g\n")
    out.write(f"FCR:           {report.fcr:.6g}\n")
    out.write(f"MAPE:          {report.mape:.6g} %\n")
    out.write(f"MAE / RMSE:    {report.mae:.6g} / {report.rmse:.6g} g\n")


def _cmd_train(args, out) -> int:
    seed = _resolve_seed(args)
    cfg = _config_from_args(args)
    res = experiment.run(cfg, seed=seed, out_dir=args.out_dir_arg)
    _summary(res.report, out)
    out.write(f"artifacts:     {res.out_dir}\n")
    return 0


def _cmd_evaluate(args, out) -> int:
    cfg = _config_from_args(args)
    q = qlearn.QTable.from_csv(args.qtable)
    res = experiment.evaluate(cfg, q, out_dir=args.out_dir_arg)
    experiment.write_report(out, [({}, res.report)])
    return 0


def _cmd_sweep(args, out) -> int:
    first = _resolve_seed(args)
    if args.n_seeds < 1:
        raise UsageError("--n-seeds must be at least 1")
    cfg = _config_from_args(args)
    spec = experiment.SweepSpec.parse(args.axis, args.max_cells)
    unknown = set(spec.axes) - set(experiment.ExperimentConfig.flat_keys())
    if unknown:
        raise ConfigError(f"unknown sweep axis: {', '.join(sorted(unknown))}")
    seeds = range(first, first + args.n_seeds)
    result = experiment.sweep(spec, cfg, seeds=seeds, out_dir=args.out_dir_arg,
                              workers=args.workers)
    result.write_summary(out)
    return 0


COMMANDS = {"simulate": _cmd_simulate, "reference": _cmd_reference, "train": _cmd_train,
            "evaluate": _cmd_evaluate, "sweep": _cmd_sweep}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, ConfigError) as exc:
        print(f"aquarl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (AquaRLError, OSError, ValueError) as exc:
        print(f"aquarl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
