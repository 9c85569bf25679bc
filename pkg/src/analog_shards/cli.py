"""Command-line entry point: ``analog-shards <subcommand> [flags]``.

Flags may also come from ``--config FILE`` (``key = value`` lines, ``#``
comments); flags on the command line win. The seed falls back to the
ANALOG_SHARDS_SEED environment variable, then 0.

Exit codes: 0 success, 2 invalid input, 3 protocol failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import accuracy, privacy
from .errors import (
    AnalogShardsError,
    FormatError,
    InvalidArgumentError,
    ProtocolFailureError,
    TransportError,
)
from .shareio import shares_from_bytes, shares_to_bytes
from .sharing import ProtocolParams, decode_constant, decoder_weights, share_secret

SEED_ENV = "ANALOG_SHARDS_SEED"
EXIT_OK, EXIT_INVALID, EXIT_PROTOCOL = 0, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _complexes(text: str) -> list[complex]:
    try:
        return [complex(x.replace(" ", "")) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _addresses(text: str) -> list[tuple[str, int]]:
    from .runtime.worker import parse_address

    return [parse_address(a) for a in text.split(",") if a.strip()]


# ---------------------------------------------------------------------------
# parser


def _protocol_flags(p: argparse.ArgumentParser, N=None, t=1, D=None, sigma=1e5, r=255.0):
    g = p.add_argument_group("protocol parameters")
    g.add_argument("--n", dest="N", type=int, default=N, help="number of servers (default D*t+1)")
    g.add_argument("--t", type=int, default=t, help="colluding servers tolerated")
    if D is not False:
        g.add_argument("--D", type=int, default=D, help="degree of the evaluated polynomial")
    g.add_argument("--sigma", type=float, default=sigma, help="noise standard deviation")
    g.add_argument("--alpha", type=float, default=10.0, help="noise truncation multiplier")
    g.add_argument("--r", type=float, default=r, help="bound on secret magnitude")


def _runtime_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--workers", type=_addresses, help="comma-separated host:port of running workers")
    g.add_argument("--simulate", type=int, metavar="N", help="run N workers in this process (default)")
    p.add_argument("--timeout", type=float, default=30.0, help="seconds to wait for each worker reply")


def _training_flags(p: argparse.ArgumentParser):
    p.add_argument("--data-dir", help="directory with the MNIST IDX files")
    p.add_argument("--classes", type=_ints, default=[3, 7], help="digit labelled 1, digit labelled 0")
    p.add_argument("--scale", choices=("raw", "unit"), default="raw")
    p.add_argument("--beta", type=float, default=1e-6)
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--field-prime", type=int, default=2**61 - 1)
    p.add_argument("--frac-bits", type=int, default=24)
    p.add_argument("--prefix", default="run", help="output prefix for .report.json and .curve.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="analog-shards", description="Analog secret sharing toolkit")
    parser.add_argument("--config", help="key = value file providing defaults for flags")
    parser.add_argument("--seed", type=int, default=None, help=f"random seed (fallback: ${SEED_ENV}, then 0)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("share", help="write per-server share files for a value or CSV matrix")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--value", type=_floats, help="scalar or comma-separated vector")
    src.add_argument("--input", help="CSV file holding a matrix")
    _protocol_flags(p, D=1)
    p.add_argument("--prefix", required=True)

    p = sub.add_parser("reconstruct", help="decode per-server result or share files")
    p.add_argument("--prefix", required=True, help="reads <prefix>.server<i>.shares for i = 1..N")
    _protocol_flags(p, D=1)

    p = sub.add_parser("eval-poly", help="privately evaluate a polynomial on a secret")
    p.add_argument("--coeffs", type=_complexes, required=True, help="ascending coefficients c0,c1,...")
    p.add_argument("--secret", type=_floats, required=True, help="scalar or comma-separated vector")
    _protocol_flags(p, D=False)
    _runtime_flags(p)

    p = sub.add_parser("bounds", help="privacy bounds for one setting (JSON)")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--alpha", type=float, default=10.0)
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("tradeoff", help="accuracy/privacy trade-off table (CSV)")
    p.add_argument("--sigma-grid", type=_floats, required=True)
    _protocol_flags(p, D=1)
    p.add_argument("--a-d", dest="a_D", type=float, default=1.0, help="leading coefficient magnitude")
    p.add_argument("--v", type=int, default=52, help="mantissa bits")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("train", help="train one logistic-regression model on MNIST")
    p.add_argument("--trainer", choices=("analog", "centralized", "fixed-point"), default="analog")
    p.add_argument("--sigmoid", choices=("exact", "degree1"), default=None,
                   help="centralized only (analog and fixed-point always use degree1)")
    p.add_argument("--per-class", type=int, default=None, help="balanced subsample size per class")
    _training_flags(p)
    _protocol_flags(p, N=4, D=False)
    _runtime_flags(p)

    p = sub.add_parser("compare", help="all three trainers across a dataset-size grid")
    p.add_argument("--sizes", type=_ints, required=True, help="total samples per draw, e.g. 100,200,1000")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--trainers", default="analog,centralized,fixed-point")
    _training_flags(p)
    _protocol_flags(p, N=4, D=False)
    return parser


# ---------------------------------------------------------------------------
# config file


def read_config(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("_", "-").lower()] = value.strip()
    return values


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    return None


def _config_argv(parser, command, values: dict[str, str]) -> tuple[list[str], list[str]]:
    """Translate config entries into flags placed before the command-line ones."""
    sub = _subparser(parser, command)
    options = {}
    for act in list(parser._actions) + (list(sub._actions) if sub else []):
        for opt in act.option_strings:
            options[opt.lstrip("-").lower()] = (opt, act)
    head, tail = [], []
    for key, value in values.items():
        if key in ("config", "command"):
            continue
        if key not in options:
            raise UsageError(f"unknown config key {key!r}")
        opt, act = options[key]
        target = head if act in parser._actions else tail
        if isinstance(act, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                target.append(opt)
        else:
            target.extend([opt, value])
    return head, tail


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in rest if not a.startswith("-") and _subparser(parser, a)), None)
        head, tail = _config_argv(parser, command, read_config(known.config))
        if command is not None:
            i = rest.index(command)
            rest = rest[:i] + head + [command] + tail + rest[i + 1 :]
        else:
            rest = head + rest
        argv = ["--config", known.config] + rest
    args = parser.parse_args(argv)
    if args.seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            args.seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return args


# ---------------------------------------------------------------------------
# commands


def _params(args, D: int) -> ProtocolParams:
    N = args.N if args.N is not None else D * args.t + 1
    return ProtocolParams(N=N, t=args.t, D=D, sigma_n=args.sigma, alpha=args.alpha, r=args.r, seed=args.seed)


def _secret(values):
    arr = np.asarray(values, dtype=float)
    return arr[0] if arr.size == 1 else arr


def _transport(args, N):
    from .runtime.transport import InProcessTransport, SocketTransport

    if getattr(args, "workers", None):
        if len(args.workers) != N:
            raise InvalidArgumentError(f"{len(args.workers)} worker addresses given, N={N}")
        return SocketTransport(args.workers, timeout=args.timeout)
    if getattr(args, "simulate", None) not in (None, N):
        raise InvalidArgumentError(f"--simulate {args.simulate} disagrees with N={N}")
    return InProcessTransport(N)


def _emit(doc) -> None:
    from .learning.experiments import dumps

    print(dumps(doc))


def cmd_share(args) -> int:
    params = _params(args, args.D)
    secret = np.loadtxt(args.input, delimiter=",", ndmin=2) if args.input else _secret(args.value)
    shares = share_secret(secret, params, np.random.default_rng(args.seed))
    paths = []
    for i in range(1, params.N + 1):
        path = Path(f"{args.prefix}.server{i}.shares")
        path.write_bytes(shares_to_bytes(shares.for_server(i)))
        paths.append(str(path))
    _emit({"seed": args.seed, "N": params.N, "shape": list(np.shape(secret)), "files": paths})
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    params = _params(args, args.D)
    rows = []
    for i in range(1, params.N + 1):
        path = Path(f"{args.prefix}.server{i}.shares")
        if not path.exists():
            raise FormatError(f"missing share file {path}")
        ss = shares_from_bytes(path.read_bytes(), (i,))
        if ss.params_digest != params.digest():
            raise FormatError(f"{path} was written under different protocol parameters")
        rows.append(ss.shares[0])
    value = decode_constant(np.stack(rows), decoder_weights(params))
    value = np.asarray(value)
    bound = None
    try:
        bound = accuracy.accuracy_bound(1.0, params).delta_f
    except AnalogShardsError:
        pass
    _emit({"seed": args.seed, "value": np.real(value).tolist(),
           "residue_max": float(np.max(np.abs(np.imag(value)))), "error_bound": bound})
    return EXIT_OK


def cmd_eval_poly(args) -> int:
    from .runtime.master import run_protocol

    if len(args.coeffs) < 2:
        raise InvalidArgumentError("need at least two coefficients (degree >= 1)")
    params = _params(args, len(args.coeffs) - 1)
    secret = _secret(args.secret)
    transport = _transport(args, params.N)
    try:
        result = run_protocol(secret, args.coeffs, params, transport, np.random.default_rng(args.seed))
    finally:
        transport.close()
    exact = np.polynomial.polynomial.polyval(secret, np.asarray(args.coeffs))
    err = float(np.max(np.abs(np.asarray(result.value) - exact)))
    _emit({
        "seed": args.seed,
        "value": np.asarray(result.real).tolist(),
        "residue_max": float(np.max(result.residue)),
        "error": err,
        "error_bound": result.error_bound,
        "within_bound": None if result.error_bound is None else err <= result.error_bound,
        "messages": result.counts.messages,
        "bytes": result.counts.bytes,
    })
    return EXIT_OK


def cmd_bounds(args) -> int:
    report = privacy.privacy_report(args.r, args.sigma, args.t, args.alpha)
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        _emit(report.to_dict())
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    template = _params(args, args.D)
    rows = accuracy.tradeoff_table(args.sigma_grid, template, accuracy.FloatModel(v=args.v), args.a_D)
    sys.stdout.write(accuracy.tradeoff_csv(rows) if args.format == "csv" else accuracy.tradeoff_json(rows) + "\n")
    return EXIT_OK


def _load_data(args, per_class=None):
    from .learning.mnist import filter_binary, load_mnist_split

    if len(args.classes) != 2:
        raise InvalidArgumentError("--classes takes exactly two digits")
    a, b = args.classes
    train = filter_binary(load_mnist_split("train", args.data_dir), a, b, per_class, args.seed, args.scale)
    test = filter_binary(load_mnist_split("test", args.data_dir), a, b, scale=args.scale)
    return train, test


def _fxp(args):
    from .learning.fixed_point import FixedPointConfig

    return FixedPointConfig(field_prime=args.field_prime, frac_bits=args.frac_bits, N=args.N, t=args.t)


def cmd_train(args) -> int:
    from .learning import experiments
    from .learning.fixed_point import train_fixed_point
    from .learning.training import TrainingConfig, evaluate, train_analog, train_centralized

    train, test = _load_data(args, args.per_class)
    rng = np.random.default_rng(args.seed)
    fxp = None
    if args.trainer == "analog":
        params = ProtocolParams(N=args.N, t=args.t, D=3, sigma_n=args.sigma, alpha=args.alpha, r=args.r,
                                seed=args.seed)
        config = TrainingConfig(args.beta, args.k, params, "degree1")
        transport = _transport(args, params.N)
        try:
            state = train_analog(train, config, transport, test, rng)
        finally:
            transport.close()
    elif args.trainer == "centralized":
        config = TrainingConfig(args.beta, args.k, None, args.sigmoid or "exact")
        state = train_centralized(train, config, test)
    else:
        config = TrainingConfig(args.beta, args.k, None, "degree1")
        fxp = _fxp(args)
        state = train_fixed_point(train, config, fxp, test, rng, certify=True)
    acc = evaluate(state, test)
    report = experiments.run_report(state, args.trainer, config, args.seed, acc, fxp)
    Path(f"{args.prefix}.report.json").write_text(experiments.dumps(report))
    Path(f"{args.prefix}.curve.csv").write_text(experiments.curve_csv(state))
    _emit({"seed": args.seed, "trainer": args.trainer, "test_accuracy": acc,
           "outputs": [f"{args.prefix}.report.json", f"{args.prefix}.curve.csv"]})
    return EXIT_OK


def cmd_compare(args) -> int:
    from .learning import experiments
    from .learning.fixed_point import overflow_threshold
    from .learning.training import TrainingConfig

    trainers = tuple(t.strip() for t in args.trainers.split(",") if t.strip())
    pool, test = _load_data(args)
    params = ProtocolParams(N=args.N, t=args.t, D=3, sigma_n=args.sigma, alpha=args.alpha, r=args.r,
                            seed=args.seed)
    analog = TrainingConfig(args.beta, args.k, params, "degree1")
    central = TrainingConfig(args.beta, args.k, None, "exact")
    fixed = TrainingConfig(args.beta, args.k, None, "degree1")
    fxp = _fxp(args)
    try:
        result = experiments.compare(pool, test, args.sizes, args.repeats, analog, central, fixed, fxp,
                                     args.seed, trainers)
    except ValueError as exc:
        if isinstance(exc, AnalogShardsError):
            raise
        raise InvalidArgumentError(str(exc)) from exc
    summary = result.summary()
    summary.update({
        "seed": args.seed,
        "fixed_point_overflow_threshold": overflow_threshold(pool, fixed, fxp),
        "fixed_point": {"field_prime": fxp.field_prime, "frac_bits": fxp.frac_bits},
        "privacy": experiments.privacy_accounting(params, args.k),
    })
    Path(f"{args.prefix}.report.json").write_text(experiments.dumps(summary))
    Path(f"{args.prefix}.curve.csv").write_text(result.to_csv())
    _emit({"seed": args.seed, "final_mean_accuracy": summary["final_mean_accuracy"],
           "outputs": [f"{args.prefix}.report.json", f"{args.prefix}.curve.csv"]})
    return EXIT_OK


COMMANDS = {
    "share": cmd_share,
    "reconstruct": cmd_reconstruct,
    "eval-poly": cmd_eval_poly,
    "bounds": cmd_bounds,
    "tradeoff": cmd_tradeoff,
    "train": cmd_train,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"analog-shards: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except (ProtocolFailureError, TransportError) as exc:
        print(f"analog-shards: protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (AnalogShardsError, ValueError, OSError) as exc:
        print(f"analog-shards: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
