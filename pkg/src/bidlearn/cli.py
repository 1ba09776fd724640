"""Command-line entry point: ``bidlearn <subcommand> ...``.

Every subcommand writes into a fresh output directory (``--out``, or
``$BIDLEARN_OUTPUT_ROOT/<subcommand>-<name>``) that is assembled in a
temporary sibling and renamed into place once complete. An existing
directory is replaced only with ``--overwrite``.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .analysis import (PreconditionError, convergence_probability, episode_schedule, exact_expected_utility_uniform,
                       fpa_closed_form, reference_strategy, t0_threshold)
from .config import _number, dump_config, load_config
from .engine import TrajectoryLog, reference_table, run_simulation, run_trials
from .grid import ConfigurationError
from .learners import ComplianceReport, ConstantGamma, DecisionLog, FeedbackError, PowerGamma, compliance_check
from .mechanisms import Mechanism, MechanismKind
from .report import build_report, export_report, summarize

OUTPUT_ROOT_ENV = "BIDLEARN_OUTPUT_ROOT"


class CommandError(Exception):
    pass


def round_count(text: str) -> int:
    """Integer argument that also accepts ``1e9`` and ``1_000_000``."""
    try:
        val = _number(text, "value")
    except ConfigurationError:
        val = None
    if not isinstance(val, int):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    return val


def parse_seeds(text: str) -> list[int]:
    """``"1..10"``, ``"3,5,8"`` or a mix such as ``"1..3,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("..")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise CommandError(f"empty seed range {part!r}")
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise CommandError(f"bad seed list {text!r}") from None
    if not seeds:
        raise CommandError("no seeds given")
    return seeds


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or "." not in key:
            raise CommandError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = val.strip()
    return out


# --- output directory handling -----------------------------------------------

class OutputDir:
    """Build outputs in a temp dir, then rename into place on success."""

    def __init__(self, target: Path, overwrite: bool):
        self.target = target
        self.overwrite = overwrite
        if target.exists() and not overwrite:
            raise CommandError(f"output directory {target} exists; pass --overwrite to replace it")
        self.tmp = None

    def __enter__(self) -> Path:
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.target.exists():
            shutil.rmtree(self.target)
        os.replace(self.tmp, self.target)
        return False


def output_path(args, name: str) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{args.command}-{name}"


def write_manifest(dest: Path, args, argv, config=None, extra=None):
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "version": __version__,
        "backend": backend_name(),
        "numpy": np.__version__,
        "parameters": {k: v for k, v in vars(args).items() if k not in ("func",)},
    }
    if config is not None:
        manifest["config"] = config.to_dict()
        (dest / "config.cfg").write_text(dump_config(config), encoding="utf-8")
    if extra:
        manifest.update(extra)
    with open(dest / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


# --- subcommands ---------------------------------------------------------------

def _load(args):
    return load_config(args.config, parse_overrides(args.set))


def _seeds(args, config) -> list[int]:
    return parse_seeds(args.seeds) if args.seeds else [int(config.seed)]


def _rollout_rows(seed, log: TrajectoryLog, ref):
    table = log.greedy_table()
    rows = []
    for i in range(table.shape[0]):
        for v in range(1, table.shape[1] + 1):
            b = int(table[i, v - 1])
            hit = "" if ref is None or b == 0 else int(bool(ref[v - 1, b - 1]))
            rows.append((seed, i, v, b, hit))
    return rows


def _rollout_summary(seed, log: TrajectoryLog, ref) -> dict:
    table = log.greedy_table()
    out = {"seed": seed, "bids": table.tolist()}
    if ref is not None:
        hits = [[bool(b) and bool(ref[v, b - 1]) for v, b in enumerate(row)] for row in table]
        out["contexts_in_reference"] = [int(sum(h)) for h in hits]
    return out


def _save_decisions(path: Path, parts):
    fields = ("t", "context", "estimates", "distribution", "bidder")
    np.savez_compressed(path, **{f: np.concatenate([getattr(p, f) for p in parts]) for f in fields})


def cmd_simulate(args, argv):
    config = _load(args)
    seeds = _seeds(args, config)
    if config.rollout_rounds == 0 and args.command == "rollout":
        raise CommandError("rollout needs experiment.rollout_rounds > 0")
    target = output_path(args, Path(args.config).stem)
    ref = reference_table(config)
    ref_strategy = reference_strategy(config.mechanism, config.grid) if ref is not None else None
    with OutputDir(target, args.overwrite) as dest:
        record = args.command == "simulate" and args.decisions
        if record:
            logs = []
            for seed in seeds:
                parts = []
                logs.append(run_simulation(config.replace(seed=seed), monitor=parts.append))
                _save_decisions(dest / f"decisions_seed_{seed}.npz", parts)
        else:
            logs = run_trials(config, seeds, workers=args.workers)
        rows, summary = [], []
        for seed, log in zip(seeds, logs):
            rows.extend(_rollout_rows(seed, log, ref))
            entry = _rollout_summary(seed, log, ref)
            if args.command == "simulate":
                sub = dest / f"seed_{seed}"
                sub.mkdir()
                if args.trajectory:
                    log.write_jsonl(sub / "trajectory.jsonl")
                if log.snapshots:
                    log.write_sigma_csv(sub / "sigma.csv")
                rep = build_report(log, ref_strategy)
                export_report(rep, sub / "report.jsonl", "jsonl")
                export_report(rep, sub / "report.csv", "csv")
                entry.update(summarize(rep))
            summary.append(entry)
        if config.rollout_rounds:
            write_csv(dest / "rollout.csv", ("seed", "bidder", "value", "bid", "in_reference"), rows)
        with open(dest / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
        write_manifest(dest, args, argv, config, {"seeds": seeds})
    print(f"wrote {len(seeds)} run(s) to {target}")
    return 0


def cmd_oracle(args, argv):
    kind = MechanismKind.parse(args.mech)
    mults = tuple(float(x) for x in args.multipliers.split(",")) if args.multipliers else (1.0,)
    mech = Mechanism(kind, mults)
    mech.validate(args.n)
    H = args.H
    closed = kind == MechanismKind.FPA and args.n == 2
    header = ["v", "b", "value", "bid", "expected_utility", "exact"]
    if closed:
        header += ["closed_form", "abs_diff"]
    rows = []
    for v in range(1, H + 1):
        for b in range(1, H + 1):
            u = exact_expected_utility_uniform(mech, args.n, H, v, b)
            row = [v, b, repr(v / H), repr(b / H), repr(float(u)), str(u)]
            if closed:
                c = fpa_closed_form(H, v, b)
                row += [repr(float(c)), repr(float(abs(u - c)))]
            rows.append(row)
    target = output_path(args, f"{kind.name.lower()}-n{args.n}-H{H}")
    with OutputDir(target, args.overwrite) as dest:
        write_csv(dest / "oracle.csv", header, rows)
        write_manifest(dest, args, argv)
    print(f"wrote {len(rows)} rows to {target / 'oracle.csv'}")
    return 0


def _default_gamma(theorem, n, H, tau, rho):
    if theorem == "fpa":
        return 1.0 / (4 * H ** 3)
    return tau * (rho if theorem == "vcg" else 1.0) / (8 * n * H)


def cmd_bounds(args, argv):
    theorem = args.theorem.lower()
    n, H, rho = args.n, args.H, args.rho
    tau = args.tau
    if theorem != "fpa" and tau is None:
        raise CommandError(f"--tau is required for the {theorem} bound")
    if theorem == "fpa" and (n != 2 or H % 2):
        raise PreconditionError([c for c, bad in ((f"two bidders (n={n})", n != 2), (f"H even (H={H})", H % 2)) if bad])
    rows = []
    if theorem != "fpa":
        T0_min, cap = t0_threshold(n, H, tau, rho if theorem == "vcg" else 1.0)
        rows.append(("threshold", T0_min, repr(cap), "", "", "", ""))
        T0 = args.T0 or T0_min
    else:
        T0 = args.T0 or 10_000
    gamma = args.gamma if args.gamma is not None else _default_gamma(theorem, n, H, tau or 0.0, rho)
    t_max = args.t_max or 100 * T0
    ts = np.unique(np.geomspace(T0 + 1, max(t_max, T0 + 2), args.points).astype(np.int64))
    for t in ts:
        r = convergence_probability(theorem, int(t), gamma, T0, n, H, tau, rho, strict=False)
        rows.append(("bound", int(t), repr(gamma), repr(r.value), repr(r.raw), int(r.vacuous),
                     "; ".join(r.violations)))
    target = output_path(args, f"{theorem}-n{n}-H{H}")
    with OutputDir(target, args.overwrite) as dest:
        write_csv(dest / "bounds.csv", ("row", "t", "gamma", "p", "raw", "vacuous", "violations"), rows)
        write_manifest(dest, args, argv, extra={"T0": T0})
    print(f"wrote {len(rows)} rows to {target / 'bounds.csv'}")
    return 0


def cmd_schedule(args, argv):
    kind = args.kind.lower()
    n, H, rho, tau = args.n, args.H, args.rho, args.tau
    if args.gamma_power:
        g0, p = (float(x) for x in args.gamma_power.split(","))
        gamma = PowerGamma(g0, p)
    else:
        g = args.gamma if args.gamma is not None else _default_gamma(kind, n, H, tau or 0.0, rho)
        gamma = ConstantGamma(g)
    if kind != "fpa" and tau is None:
        raise CommandError(f"--tau is required for the {kind} schedule")
    sched = episode_schedule(kind, args.T0, gamma, n, H, tau or 0.0, args.horizon, rho)
    b = sched.boundaries
    rows = [(k, T, "" if k == 0 else repr(T / b[k - 1])) for k, T in enumerate(b)]
    target = output_path(args, f"{kind}-n{n}-H{H}")
    with OutputDir(target, args.overwrite) as dest:
        write_csv(dest / "schedule.csv", ("k", "T_k", "ratio"), rows)
        write_manifest(dest, args, argv, extra={"truncated": sched.truncated, "levels": len(b) - 1})
    flag = " (truncated)" if sched.truncated else ""
    print(f"wrote {len(b) - 1} levels{flag} to {target / 'schedule.csv'}")
    return 0


def _gamma_for(text: str, spec):
    if text == "epsilon":
        return spec.epsilon_schedule()
    kind, _, rest = text.partition(":")
    if kind == "constant":
        return ConstantGamma(float(rest))
    if kind == "power":
        g0, _, p = rest.partition(",")
        return PowerGamma(float(g0), float(p or 0.5))
    raise CommandError(f"--gamma must be epsilon, constant:G or power:G0,P (got {text!r})")


class _Monitor:
    def __init__(self, schedules, max_report):
        self.schedules = schedules
        self.max_report = max_report
        self.report = ComplianceReport(0)

    def check(self, log: DecisionLog):
        for i, sched in enumerate(self.schedules):
            mask = log.bidder == i
            part = DecisionLog(log.t[mask], log.context[mask], log.estimates[mask], log.distribution[mask],
                               log.bidder[mask])
            self.report = self.report.merge(compliance_check(part, sched, self.max_report), self.max_report)

    __call__ = check


def cmd_compliance(args, argv):
    config = _load(args)
    if args.seed is not None:
        config = config.replace(seed=args.seed).validate()
    schedules = [_gamma_for(args.gamma, spec) for spec in config.learners]
    mon = _Monitor(schedules, args.max_report)
    if args.decisions:
        with np.load(args.decisions) as z:
            mon(DecisionLog(z["t"], z["context"], z["estimates"], z["distribution"], z["bidder"]))
    else:
        run_simulation(config, monitor=mon)
    rep = mon.report
    target = output_path(args, Path(args.config).stem)
    cols = ("t", "bidder", "context", "bid", "gap", "threshold", "probability", "gamma")
    with OutputDir(target, args.overwrite) as dest:
        write_csv(dest / "violations.csv", cols,
                  [[repr(v[c]) if isinstance(v[c], float) else v[c] for c in cols] for v in rep.violations])
        with open(dest / "compliance.json", "w", encoding="utf-8") as fh:
            json.dump({"checked": rep.checked, "violations": rep.count, "ok": rep.ok,
                       "reported": len(rep.violations), "gamma": args.gamma}, fh, indent=2)
            fh.write("\n")
        write_manifest(dest, args, argv, config)
    print(f"checked {rep.checked} decisions: {rep.count} violation(s); wrote {target}")
    return 0 if rep.ok else 1


def cmd_report(args, argv):
    config = _load(args)
    log = TrajectoryLog.read_jsonl(args.log, config)
    if len(log) != config.total_rounds:
        raise CommandError(f"log has {len(log)} rounds but the config describes {config.total_rounds}")
    ref = reference_table(config)
    ref_strategy = reference_strategy(config.mechanism, config.grid) if ref is not None else None
    rep = build_report(log, ref_strategy, window=args.window)
    target = output_path(args, Path(args.log).stem)
    with OutputDir(target, args.overwrite) as dest:
        for fmt in args.format:
            export_report(rep, dest / f"report.{fmt}", fmt)
        write_manifest(dest, args, argv, config)
    print(f"wrote report to {target}")
    return 0


# --- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bidlearn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({backend_name()})")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<command>-<name>)")
        sp.add_argument("--overwrite", action="store_true", help="replace an existing output directory")

    def with_config(sp):
        sp.add_argument("--config", required=True, help="experiment file (.cfg)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config entry")

    for name, helptext in (("simulate", "run trials and write logs plus reports"),
                           ("rollout", "run trials and write only the greedy rollout tables")):
        sp = sub.add_parser(name, help=helptext)
        with_config(sp)
        common(sp)
        sp.add_argument("--seeds", help="e.g. 1..10 or 1,4,7 (default: the config seed)")
        sp.add_argument("--workers", type=int, default=1, help="parallel trial processes")
        if name == "simulate":
            sp.add_argument("--no-trajectory", dest="trajectory", action="store_false",
                            help="skip the per-round JSONL log")
            sp.add_argument("--decisions", action="store_true",
                            help="also save exploitation decisions for the compliance subcommand")
        sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", help="exact expected-utility table under uniform opponents")
    sp.add_argument("--mech", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--multipliers", help="comma-separated position multipliers (vcg)")
    common(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("bounds", help="convergence lower bound p(t) and the T0 / gamma cap row")
    sp.add_argument("--theorem", required=True, choices=("spa", "fpa", "vcg"))
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--T0", type=round_count, help="exploration length (default: the minimal threshold)")
    sp.add_argument("--gamma", type=float, help="gamma_t held constant (default: the cap)")
    sp.add_argument("--t-max", type=round_count)
    sp.add_argument("--points", type=int, default=50)
    common(sp)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("schedule", help="episode boundaries T_k for a gamma schedule")
    sp.add_argument("--kind", required=True, choices=("spa", "fpa", "vcg"))
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--H", type=int, required=True)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--T0", type=round_count, required=True)
    sp.add_argument("--horizon", type=round_count, required=True)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float, help="constant gamma (default: the cap)")
    g.add_argument("--gamma-power", metavar="G0,P", help="gamma_t = min(1, G0 * t^-P)")
    common(sp)
    sp.set_defaults(func=cmd_schedule)

    sp = sub.add_parser("compliance", help="check the mean-based property on exploitation decisions")
    with_config(sp)
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--gamma", default="epsilon", help="epsilon | constant:G | power:G0,P")
    sp.add_argument("--decisions", help="decision log (.npz) to check instead of running the config")
    sp.add_argument("--max-report", type=int, default=1000)
    sp.set_defaults(func=cmd_compliance)

    sp = sub.add_parser("report", help="rebuild the convergence report from a JSONL trajectory")
    with_config(sp)
    common(sp)
    sp.add_argument("--log", required=True)
    sp.add_argument("--window", type=round_count)
    sp.add_argument("--format", nargs="+", choices=("jsonl", "csv"), default=["jsonl", "csv"])
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except PreconditionError as exc:
        print(f"bidlearn {args.command}: precondition failed: {'; '.join(exc.violations)}", file=sys.stderr)
    except (ConfigurationError, FeedbackError, CommandError) as exc:
        print(f"bidlearn {args.command}: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"bidlearn {args.command}: {exc}", file=sys.stderr)
    return 2
