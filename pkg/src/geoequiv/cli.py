"""Command-line entry point: ``geoequiv <command> --config PATH [options]``.

Exit codes: 0 success, 2 verification/verdict or integration failure,
1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, model_text, parse_config
from .entropy import ENTROPY_CONFIG, entropy_report, pseudonorm_estimate
from .errors import ConfigError, DomainError, PreconditionError, ProfileError, StepFailure
from .flow import IntegratorConfig, integrate, trajectory_csv
from .integrals import (
    PhaseState,
    default_t_list,
    hamiltonian_observable,
    integral_observable,
    random_states,
    unit_speed,
)
from .singular import classify_singular
from .verification import run_battery

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
COMMANDS = ("lc-gen", "verify", "integrate", "scan-singular", "entropy", "pseudonorm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geoequiv", description="Checks and flows for geodesically equivalent metric pairs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="model/run configuration file")
        p.add_argument("--seed", type=int, help="random seed (unsigned)")
        p.add_argument("--depth", choices=("quick", "full"))
        p.add_argument("--out", help="output path (default: standard output)")
        p.add_argument("--steps", type=int)
        p.add_argument("--step-size", type=float, dest="step_size")
        p.add_argument("--horizon", type=float)
    return parser


def _options(args, cfg: RunConfig) -> dict:
    opts = dict(cfg.run)
    for key in ("seed", "depth", "out", "steps", "step_size", "horizon"):
        v = getattr(args, key)
        if v is not None:
            opts[key] = v
    if opts.get("seed", 0) < 0 or opts.get("seed", 0) >= 2 ** 64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    if opts.get("steps", 0) < 0:
        raise UsageError("--steps must be >= 0")
    if "step_size" in opts and not opts["step_size"] > 0:
        raise UsageError("--step-size must be > 0")
    if "horizon" in opts and not opts["horizon"] >= 1:
        raise UsageError("--horizon must be >= 1")
    return opts


def _emit(text: str, out, stdout):
    if out:
        Path(out).write_text(text)
    else:
        stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _initial_state(model, opts) -> PhaseState:
    rng = np.random.default_rng(opts.get("seed", 0))
    s = random_states(model, 1, rng)
    x = np.asarray(opts["x0"], dtype=float) if "x0" in opts else s.x[0]
    if "p0" in opts:
        return PhaseState(x, opts["p0"])
    if "xi0" in opts:
        return PhaseState.from_velocity(model, x, opts["xi0"])
    if "x0" in opts:
        return unit_speed(model, PhaseState.from_velocity(model, x, rng.standard_normal(model.dim)))
    return PhaseState(s.x[0], s.p[0])


def _cmd_lc_gen(model, cfg, opts, stdout):
    if cfg.variant != "lc":
        raise UsageError("lc-gen emits Levi-Civita models only (variant = lc)")
    _emit(model_text(model, cfg.allow_contact), opts.get("out"), stdout)
    return EXIT_OK


def _cmd_verify(model, cfg, opts, stdout):
    rep = run_battery(model, opts.get("seed", 0), opts.get("depth", "quick"))
    stdout.write(rep.summary() + "\n")
    if opts.get("out"):
        Path(opts["out"]).write_text(rep.to_json() + "\n")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _cmd_integrate(model, cfg, opts, stdout):
    base = IntegratorConfig()
    conf = IntegratorConfig(
        h=opts.get("step_size", base.h),
        steps=opts.get("steps", base.steps),
        tol=opts.get("tol", base.tol),
        max_iter=opts.get("max_iter", base.max_iter),
        record_stride=opts.get("record_stride", base.record_stride),
    )
    t_list = opts.get("t_list", default_t_list(model))
    obs = [hamiltonian_observable(model)] + [integral_observable(model, t) for t in t_list]
    state0 = _initial_state(model, opts)
    tr = integrate(model, state0, conf, obs)
    cols = [("H", obs[0].name)] + [(f"I_{j + 1}", o.name) for j, o in enumerate(obs[1:])]
    _emit(trajectory_csv(tr, cols), opts.get("out"), stdout)
    if not tr.ok:
        sys.stderr.write(f"integration stopped early: {tr.error}\n")
        return EXIT_FAIL
    return EXIT_OK


def _cmd_scan(model, cfg, opts, stdout):
    if not model.is_lc:
        raise PreconditionError("scan-singular needs a Levi-Civita model (variant = lc)")
    count = opts.get("samples", 100)
    seed = opts.get("seed", 0)
    s = random_states(model, count, np.random.default_rng(seed))
    reports = [classify_singular(model, PhaseState(s.x[k], s.p[k])) for k in range(count)]
    out = {
        "model": model.name,
        "seed": seed,
        "samples": count,
        "dependent": sum(r.dependent for r in reports),
        "reports": [r.to_dict() for r in reports],
    }
    _emit(_dumps(out), opts.get("out"), stdout)
    return EXIT_OK


def _entropy_config(opts) -> IntegratorConfig:
    return IntegratorConfig(h=opts.get("step_size", ENTROPY_CONFIG.h),
                            tol=opts.get("tol", ENTROPY_CONFIG.tol),
                            max_iter=opts.get("max_iter", ENTROPY_CONFIG.max_iter))


def _cmd_entropy(model, cfg, opts, stdout):
    rep = entropy_report(
        model,
        opts.get("ensemble", 32),
        opts.get("horizon", 1e4),
        opts.get("seed", 0),
        _entropy_config(opts),
        renorm_interval=opts.get("renorm_interval", 1.0),
    )
    _emit(_dumps(rep.to_dict()), opts.get("out"), stdout)
    return EXIT_OK if rep.verdict == "CONSISTENT_WITH_ZERO_ENTROPY" else EXIT_FAIL


def _cmd_pseudonorm(model, cfg, opts, stdout):
    t_list = opts.get("t_list", default_t_list(model).tolist())
    a = opts.get("a", [1.0] * len(t_list))
    T = opts.get("horizon", 1e4)
    conf = _entropy_config(opts)
    est = pseudonorm_estimate(model, a, t_list, T, conf, seed=opts.get("seed", 0),
                              renorm_interval=opts.get("renorm_interval", 1.0))
    out = {
        "model": model.name,
        "a": list(map(float, a)),
        "t_list": list(map(float, t_list)),
        "horizon": est.estimate.horizon,
        "exponent": est.exponent,
        "threshold": est.threshold,
        "below_threshold": est.below_threshold,
        "config": {"h": conf.h, "seed": opts.get("seed", 0)},
    }
    _emit(_dumps(out), opts.get("out"), stdout)
    return EXIT_OK if est.below_threshold else EXIT_FAIL


HANDLERS = {
    "lc-gen": _cmd_lc_gen,
    "verify": _cmd_verify,
    "integrate": _cmd_integrate,
    "scan-singular": _cmd_scan,
    "entropy": _cmd_entropy,
    "pseudonorm": _cmd_pseudonorm,
}


def dispatch(command: str, cfg: RunConfig, opts: dict, stdout=None) -> int:
    stdout = stdout or sys.stdout
    model = cfg.build_model()
    return HANDLERS[command](model, cfg, opts, stdout)


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        text = Path(args.config).read_text()
        cfg = parse_config(text)
        opts = _options(args, cfg)
        return dispatch(args.command, cfg, opts, stdout)
    except (UsageError, ConfigError, PreconditionError, DomainError, ProfileError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except StepFailure as exc:
        stderr.write(f"integration failure: {exc}\n")
        return EXIT_FAIL
    except Exception as exc:  # never crash on user input
        stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
