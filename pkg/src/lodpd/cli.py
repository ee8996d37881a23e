"""Command-line front end.

Every subcommand writes space-separated text files into the output directory
(``--out-dir``, else ``$LODPD_OUTPUT_DIR``, else the working directory).  Each
file starts with ``#`` lines holding the resolved configuration.  A JSON
experiment record is written alongside, with timestamps, so the data files
themselves are reproducible byte for byte.

Configuration precedence: command-line flags, then ``--config FILE`` (lines of
``flag-name = value``), then built-in defaults.

Exit status: 0 success, 1 a checked property failed, 2 usage or parameter error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .combinatorics import partitions_of
from .errors import LodpdError
from .pd_measures import RankedMass, p_eta_from_power_sums, power_sum_matrix, sample_pd, sampling_formula_mean

OUTPUT_ENV = "LODPD_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def float_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


@dataclass
class ExperimentRecord:
    subcommand: str
    config: dict
    seed: int | None
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    def header(self) -> str:
        cfg = json.dumps(self.config, sort_keys=True, default=str)
        return f"# lodpd {self.version} {self.subcommand} seed={self.seed}\n# config {cfg}\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2, default=str)


class Output:
    """Collects output files for one run."""

    def __init__(self, directory: Path, record: ExperimentRecord):
        self.dir = directory
        self.record = record
        self.dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, columns: list[str], rows) -> Path:
        path = self.dir / name
        with open(path, "w") as fh:
            fh.write(self.record.header())
            fh.write("# " + " ".join(columns) + "\n")
            for row in rows:
                fh.write(" ".join(fmt(v) for v in row) + "\n")
        self.record.outputs.append(str(path))
        return path

    def lines(self, name: str, lines) -> Path:
        path = self.dir / name
        with open(path, "w") as fh:
            fh.write(self.record.header())
            for line in lines:
                fh.write(line + "\n")
        self.record.outputs.append(str(path))
        return path

    def finish(self) -> Path:
        self.record.finished = _now()
        path = self.dir / f"{self.record.subcommand}_record.json"
        path.write_text(self.record.to_json() + "\n")
        return path


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _parse_x0(text: str) -> RankedMass:
    atoms = float_list(text)
    return RankedMass.from_atoms(atoms, remainder=max(0.0, 1.0 - math.fsum(atoms)))


# subcommands


def cmd_coeffs(args, out: Output) -> int:
    from .lod_coefficients import d_vector

    c = d_vector(args.theta, args.t, args.tol)
    out.table("coeffs.txt", ["n", "d_n"], enumerate(c.d))
    print(f"coeffs theta={fmt(args.theta)} t={fmt(args.t)} N={c.truncation_N} "
          f"tail<={fmt(c.tail_mass_bound)} residual={fmt(c.residual)}")
    return EXIT_OK


def cmd_tail_check(args, out: Output) -> int:
    from .lod_coefficients import d_vector, tail_bounds

    rows, ok = [], True
    for t in args.t_grid:
        c = d_vector(args.theta, t, args.tol)
        for n in range(1 if args.theta >= 0 else 2, args.n_max + 1):
            lo, hi = tail_bounds(args.theta, n, t)
            s = c.tail_from(n)
            good = lo * (1 - 1e-9) - 1e-12 <= s <= hi * (1 + 1e-9) + 1e-12
            ok &= good
            rows.append((n, t, lo, s, hi, int(good)))
            print(f"{'PASS' if good else 'FAIL'} n={n} t={fmt(t)} lower={fmt(lo)} sum={fmt(s)} upper={fmt(hi)}")
    out.table("tail_check.txt", ["n", "t", "lower", "tail_sum", "upper", "pass"], rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sample_pd(args, out: Output) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.size):
        x = sample_pd(args.theta, args.alpha, args.eps, rng)
        top = list(x.atoms[: args.top]) + [0.0] * max(0, args.top - x.atoms.size)
        rows.append([i, x.phi2, x.remainder, *top])
    out.table("sample_pd.txt", ["index", "phi2", "remainder"] + [f"y{k + 1}" for k in range(args.top)], rows)
    mean_phi2 = float(np.mean([r[1] for r in rows]))
    print(f"sample-pd theta={fmt(args.theta)} alpha={fmt(args.alpha)} size={args.size} mean_phi2={fmt(mean_phi2)}")
    return EXIT_OK


def cmd_moments(args, out: Output) -> int:
    rng = np.random.default_rng(args.seed)
    samples = [sample_pd(args.theta, args.alpha, args.eps, rng) for _ in range(args.size)]
    P = power_sum_matrix(samples, args.n_max)
    rows, ok = [], True
    for n in range(1, args.n_max + 1):
        for eta in partitions_of(n):
            vals = p_eta_from_power_sums(P, eta)
            mc, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))
            exact = sampling_formula_mean(args.theta, args.alpha, eta)
            z = (mc - exact) / se if se > 0 else 0.0
            good = abs(z) <= args.z_max
            ok &= good
            rows.append((n, str(eta), exact, mc, se, z))
            print(f"{'PASS' if good else 'FAIL'} eta={eta} exact={fmt(exact)} mc={fmt(mc)} se={fmt(se)} z={z:.2f}")
    out.lines("moments.txt", ["# n eta exact mc stderr z"]
              + [" ".join([str(r[0]), r[1].replace(",", "_")] + [fmt(v) for v in r[2:]]) for r in rows])
    return EXIT_OK if ok else EXIT_FAIL


def _transition_chunk(task):
    from .transition import sample_transition

    x0, theta, alpha, t, size, seed, eps = task
    rng = np.random.default_rng(seed)
    return [sample_transition(x0, theta, alpha, t, rng, eps).to_json() for _ in range(size)]


def cmd_transition_sample(args, out: Output) -> int:
    from concurrent.futures import ProcessPoolExecutor

    from .ergodic import CHUNK

    x0 = _parse_x0(args.x0)
    sizes = [min(CHUNK, args.size - s) for s in range(0, args.size, CHUNK)]
    tasks = [(x0, args.theta, args.alpha, args.t, k, np.random.SeedSequence((args.seed, i)), args.eps)
             for i, k in enumerate(sizes)]
    if args.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            chunks = list(pool.map(_transition_chunk, tasks))
    else:
        chunks = [_transition_chunk(task) for task in tasks]
    records = [r for chunk in chunks for r in chunk]
    out.lines("transitions.jsonl", records)
    counts = np.bincount([json.loads(r)["chosen_n"] for r in records])
    print(f"transition-sample size={len(records)} mean_chosen_n={fmt(np.dot(np.arange(counts.size), counts) / len(records))}")
    return EXIT_OK


def cmd_wf_simulate(args, out: Output) -> int:
    from .ergodic import phi2_relaxation
    from .wf_sim import SimConfig, simulate_path, time_average

    cfg = SimConfig(K=args.K, theta=args.theta, sigma=args.sigma, dt=args.dt, horizon=args.horizon,
                    seed=args.seed, record_stride=args.record_stride, paths=args.paths, start=args.start,
                    burn_in=args.burn_in, scheme=args.scheme)
    rec = simulate_path(cfg, ("phi2",))
    out.table("phi2_mean.txt", ["t", "mean_phi2"], zip(rec.times, rec.mean("phi2")))
    out.table("phi2_stderr.txt", ["t", "stderr_phi2"], zip(rec.times, rec.stderr("phi2")))
    avg, se = time_average(rec, "phi2", args.skip)
    msg = f"wf-simulate paths={cfg.paths} time_avg_phi2={fmt(avg)} se={fmt(se)}"
    if args.target is not None:
        fit = phi2_relaxation(cfg, args.target, (args.fit_min, args.fit_max), record=rec)
        out.table("phi2_deviation.txt", ["t", "abs_deviation"], zip(fit.times, fit.deviation))
        msg += f" rate={fmt(fit.rate)} r2={fmt(fit.r_squared)}"
    print(msg)
    return EXIT_OK


def cmd_tv_decay(args, out: Output) -> int:
    from .ergodic import certify_two_parameter

    rng = np.random.default_rng(args.seed)
    rep = certify_two_parameter(args.theta, args.alpha, _parse_x0(args.x0), args.t_grid, args.reps, rng,
                                statistic=args.statistic, bins=args.bins, eps=args.eps,
                                workers=args.workers, min_reps=1)
    rows = list(rep.rows())
    out.table("tv_decay.txt", ["t", "tv_plugin", "noise_floor", "tv_lower", "bound"], rows)
    out.table("tv_lower.txt", ["t", "tv_lower"], [(r[0], r[3]) for r in rows])
    out.table("tv_bound.txt", ["t", "bound"], [(r[0], r[4]) for r in rows])
    for t, plug, floor, low, bound in rows:
        print(f"{'PASS' if low <= bound else 'FAIL'} t={fmt(t)} tv_lower={fmt(low)} "
              f"(plugin={fmt(plug)} floor={fmt(floor)}) bound={fmt(bound)}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_selftest(args, out: Output) -> int:
    from .selftest import run_checks

    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    out.lines("selftest.txt", [f"{'PASS' if ok else 'FAIL'} {name} {detail}" for name, ok, detail in results])
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


COMMANDS = {
    "coeffs": cmd_coeffs,
    "tail-check": cmd_tail_check,
    "sample-pd": cmd_sample_pd,
    "moments": cmd_moments,
    "transition-sample": cmd_transition_sample,
    "wf-simulate": cmd_wf_simulate,
    "tv-decay": cmd_tv_decay,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    from .ergodic import default_workers

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")
    common.add_argument("--config", default=None, help="file of 'flag-name = value' lines")
    common.add_argument("--workers", type=int, default=default_workers())

    parser = argparse.ArgumentParser(prog="lodpd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lodpd {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("coeffs", "lines-of-descent coefficients d_n(t)")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-10)

    p = add("tail-check", "tail sums against their sandwich bounds")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n-max", type=int, default=6)
    p.add_argument("--t-grid", type=float_list, default=[0.2, 1.0, 3.0])
    p.add_argument("--tol", type=float, default=1e-12)

    p = add("sample-pd", "Poisson-Dirichlet draws")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--top", type=int, default=5)

    p = add("moments", "Monte Carlo sampling-formula means")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--size", type=int, default=100_000)
    p.add_argument("--n-max", type=int, default=5)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--z-max", type=float, default=3.0)

    p = add("transition-sample", "exact transition draws as JSON lines")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x0", default="1", help="comma-separated atoms")
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--eps", type=float, default=None)

    p = add("wf-simulate", "K-allele Wright-Fisher paths")
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--record-stride", type=int, default=100)
    p.add_argument("--start", choices=["monomorphic", "uniform", "stationary"], default="monomorphic")
    p.add_argument("--burn-in", type=float, default=0.0)
    p.add_argument("--scheme", choices=["cir", "euler"], default="cir")
    p.add_argument("--skip", type=float, default=0.0, help="time-average only over t >= skip")
    p.add_argument("--target", type=float, default=None, help="fit the decay of E phi2 towards this value")
    p.add_argument("--fit-min", type=float, default=0.05)
    p.add_argument("--fit-max", type=float, default=1.0)

    p = add("tv-decay", "empirical TV lower bound against the ergodic bound")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--x0", default="1")
    p.add_argument("--t-grid", type=float_list, default=[0.25, 0.5, 1.0, 2.0, 4.0])
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--statistic", choices=["phi2", "y1", "p3"], default="phi2")
    p.add_argument("--eps", type=float, default=None)

    add("selftest", "fast invariant checks")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-")] = value
    return values


def apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install config-file values as parser defaults, so explicit flags still win."""
    by_flag = {opt[2:]: a for a in sub._actions for opt in a.option_strings if opt.startswith("--")}
    defaults = {}
    for key, raw in values.items():
        action = by_flag.get(key)
        if action is None or key in ("config", "help"):
            raise ValueError(f"unknown config key {key!r}")
        value = action.type(raw) if action.type else raw
        if action.choices is not None and value not in action.choices:
            raise ValueError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
        defaults[action.dest] = value
    sub.set_defaults(**defaults)


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.config:
            sub = _subparser(parser, args.command)
            apply_config(sub, read_config(args.config))
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    except (OSError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"lodpd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    config = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out_dir", "workers")}
    record = ExperimentRecord(args.command, config, args.seed, started=_now())
    out_dir = Path(args.out_dir or os.environ.get(OUTPUT_ENV, "."))
    try:
        out = Output(out_dir, record)
        status = COMMANDS[args.command](args, out)
    except (LodpdError, ValueError) as exc:
        print(f"lodpd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out.finish()
    return status


def main() -> None:
    sys.exit(run())
