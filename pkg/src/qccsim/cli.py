"""Batch experiment runner for the shipped protocols.

Three subcommands:

* ``run``          build one protocol, execute seeded trials against the
                   predicate oracle, and report outputs, empirical error,
                   cost, and the per-run ledger hash (which must not vary —
                   that constancy is the obliviousness witness).
* ``scale-table``  cost table over an (n, k) grid.  Schedules are
                   input-independent, so the default schedule-only mode
                   checks cost formulas far past simulable sizes; execute
                   mode also runs trials per cell.
* ``reduce``       merge a k-party protocol to two parties via an embedding
                   and report the cost bound arithmetic.

Exit status: 0 when every assertion the command makes holds, 1 when one
fails, 2 on usage errors, 3 when the simulation would need a wider state
factor than the qubit cap allows (the refusal names the width).  Output is
deterministic for a fixed seed; a machine-readable summary line is always
emitted (JSON object, last line).
"""

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import engine
from . import netmodel as nm
from . import protocols as pr
from . import reduction as rd
from .statevec import QubitCapError
from .functions import (SymmetricSpec, eval_disj, eval_equality, eval_ip,
                        eval_symmetric, ip_spec)

RUN_COLUMNS = ("trial", "seed", "truth", "output", "correct")
SCALE_COLUMNS = ("family", "n", "k", "M", "qcc", "rounds", "empirical_error")
REDUCE_COLUMNS = ("family", "n", "k", "pivot", "qcc_original", "qcc_reduced",
                  "bound_2qcc_over_k", "rounds_original", "rounds_reduced",
                  "empirical_error")

EXIT_ASSERTION = 1
EXIT_CAP = 3


@dataclass
class ExperimentConfig:
    command: str
    family: str
    n: int
    k: int
    M: int | None
    eps: float
    trials: int
    seed: int
    fmt: str
    c: int = 2
    method: str = "ip"
    c_aa: float = 1.0
    spec: SymmetricSpec | None = None

    @classmethod
    def from_args(cls, args, command):
        spec = None
        if args.family == "symmetric-from-file":
            if not getattr(args, "spec_file", None):
                print("--spec-file is required with symmetric-from-file",
                      file=sys.stderr)
                raise SystemExit(2)
            spec = SymmetricSpec.from_file(args.spec_file)
        elif not getattr(args, "n", None):
            print(f"--n is required with family {args.family}",
                  file=sys.stderr)
            raise SystemExit(2)
        n = getattr(args, "n", None) or spec.n
        k = getattr(args, "k", None) or (spec.k if spec else 3)
        if spec is not None:
            if n != spec.n:
                print(f"table file fixes n = {spec.n}", file=sys.stderr)
                raise SystemExit(2)
            if k != spec.k:
                spec = SymmetricSpec(spec.n, k, spec.d)
        return cls(command, args.family, n, k,
                   getattr(args, "M", None), args.eps,
                   getattr(args, "trials", 0), args.seed, args.format,
                   getattr(args, "c", 2), getattr(args, "method", "ip"),
                   getattr(args, "c_aa", 1.0), spec)


def _build(cfg: ExperimentConfig):
    """Program, oracle, and peak simulator factor width for one config."""
    if cfg.M and cfg.family != "disj":
        print("--M selects the bounded-round search and needs --family disj",
              file=sys.stderr)
        raise SystemExit(2)
    if cfg.family == "disj" and cfg.M:
        prog = pr.build_bounded_round_disj(cfg.n, cfg.k, cfg.M, cfg.eps)
        return prog, eval_disj, pr.disj_peak_width(cfg.n, cfg.k, cfg.M)
    if cfg.family == "disj":
        prog = pr.build_disj_grover(cfg.n, cfg.k, cfg.eps)
        return prog, eval_disj, pr.disj_peak_width(cfg.n, cfg.k)
    if cfg.family == "ip":
        spec = ip_spec(cfg.n, cfg.k)
        prog = pr.build_symmetric(spec, cfg.eps)
        return prog, eval_ip, pr.symmetric_peak_width(spec)
    if cfg.family == "equality":
        prog = pr.build_equality(cfg.n, cfg.k, cfg.c, cfg.method)
        return prog, eval_equality, pr.equality_peak_width(cfg.n, cfg.c,
                                                           cfg.method)
    if cfg.family == "symmetric-from-file":
        spec = cfg.spec
        prog = pr.build_symmetric(spec, cfg.eps)
        oracle = lambda xs: eval_symmetric(spec, xs)
        return prog, oracle, pr.symmetric_peak_width(spec)
    raise SystemExit(2)


def _cap_or_refuse(peak, args):
    cap = engine._resolve_cap(getattr(args, "qubit_cap", None))
    if peak > cap:
        print(f"refusing: this run needs a {peak}-qubit state factor but the "
              f"cap is {cap} (raise --qubit-cap or QCCSIM_QUBIT_CAP)",
              file=sys.stderr)
        raise SystemExit(EXIT_CAP)
    return cap


def _rand_inputs(rng, n, k, equal=False):
    if equal:
        x = "".join(rng.choice(["0", "1"], size=n))
        return {g: x for g in range(1, k + 1)}
    return {g: "".join(rng.choice(["0", "1"], size=n))
            for g in range(1, k + 1)}


def _emit(rows, columns, summary, fmt, out=None):
    """Rows in the chosen format, then one JSON summary line (always)."""
    out = out if out is not None else sys.stdout
    sline = json.dumps(summary, sort_keys=True, separators=(", ", ": "))
    if fmt == "json":
        out.write(json.dumps({"rows": rows, "summary": summary},
                             indent=2, sort_keys=True) + "\n")
        return
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else r.get(c) for c in columns])
        out.write(f"# summary {sline}\n")
        return
    # markdown
    out.write("| " + " | ".join(columns) + " |\n")
    out.write("|" + "|".join("---" for _ in columns) + "|\n")
    for r in rows:
        out.write("| " + " | ".join(
            "" if r.get(c) is None else str(r.get(c)) for c in columns) + " |\n")
    out.write(f"\nsummary: {sline}\n")


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_args(args, "run")
    if cfg.family == "aa":
        print("family 'aa' is a cost model without an executable program; "
              "use scale-table", file=sys.stderr)
        return 2
    prog, oracle, peak = _build(cfg)
    cap = _cap_or_refuse(peak, args)
    led = nm.derive_schedule(prog).ledger()

    rng = np.random.default_rng(cfg.seed)
    rows, hashes = [], set()
    wrong = false_pos = 0
    for t in range(cfg.trials):
        xs = _rand_inputs(rng, cfg.n, cfg.k,
                          equal=(cfg.family == "equality" and t % 2 == 0))
        truth = oracle([xs[g] for g in range(1, cfg.k + 1)])
        run_seed = cfg.seed * 100003 + t
        res = engine.execute(prog, xs, seed=run_seed, cap=cap)
        outs = set(res.outputs.values())
        got = res.outputs[min(res.outputs)]
        hashes.add(res.ledger().fingerprint())
        ok = int(got == truth) if len(outs) == 1 else 0
        wrong += 1 - ok
        if cfg.family == "disj" and truth == 0 and got == 1:
            false_pos += 1
        rows.append({"trial": t, "seed": run_seed, "truth": truth,
                     "output": got, "correct": ok})
    err = wrong / cfg.trials if cfg.trials else 0.0

    checks = {
        "ledger_hash_constant": len(hashes) <= 1,
        "ledger_matches_schedule": hashes <= {led.fingerprint()},
        "error_within_eps": err <= cfg.eps,
    }
    if cfg.family == "disj":
        checks["no_false_positives"] = false_pos == 0
    summary = {
        "command": "run", "family": cfg.family, "n": cfg.n, "k": cfg.k,
        "M": cfg.M, "trials": cfg.trials, "seed": cfg.seed,
        "qcc": led.qcc, "rounds": led.rounds,
        "ledger_hash": led.fingerprint(),
        "empirical_error": err, "false_positives": false_pos,
        "checks": checks, "ok": all(checks.values()),
    }
    _emit(rows, RUN_COLUMNS, summary, cfg.fmt)
    return 0 if summary["ok"] else EXIT_ASSERTION


def _scale_cell(args, family, n, k, M, base_spec=None):
    """One grid cell: schedule cost plus closed-form check, trials if asked."""
    if family == "aa":
        led = pr.build_aa_cost_model(n, k, args.c_aa).ledger()
        return led, pr.aa_cost(n, k, args.c_aa), None
    spec = None
    if base_spec is not None:
        spec = SymmetricSpec(base_spec.n, k, base_spec.d)
    cfg = ExperimentConfig(command="scale", family=family, n=n, k=k, M=M,
                           eps=args.eps, trials=args.trials, seed=args.seed,
                           fmt=args.format, c=args.c, method=args.method,
                           spec=spec)
    prog, oracle, peak = _build(cfg)
    led = nm.derive_schedule(prog).ledger()
    if family == "disj" and M:
        formula = pr.bounded_round_cost(n, k, M, args.eps)
    elif family == "disj":
        formula = pr.disj_cost(n, k, args.eps)
    elif family == "equality":
        formula = pr.equality_cost(k, args.c)
    elif family in ("ip", "symmetric-from-file"):
        formula = pr.symmetric_cost(
            cfg.spec if cfg.spec else ip_spec(n, k), args.eps)
    err = None
    if args.mode == "execute":
        _cap_or_refuse(peak, args)
        rng = np.random.default_rng(args.seed)
        wrong = 0
        for t in range(args.trials):
            xs = _rand_inputs(rng, n, k)
            truth = oracle([xs[g] for g in range(1, k + 1)])
            res = engine.execute(prog, xs, seed=args.seed * 7919 + t,
                                 cap=getattr(args, "qubit_cap", None))
            wrong += res.outputs[min(res.outputs)] != truth
        err = wrong / args.trials if args.trials else 0.0
    return led, formula, err


def cmd_scale(args) -> int:
    if args.family == "aa" and args.mode == "execute":
        print("family 'aa' is schedule-only", file=sys.stderr)
        return 2
    base_spec = None
    if args.family == "symmetric-from-file":
        if not args.spec_file:
            print("--spec-file is required with symmetric-from-file",
                  file=sys.stderr)
            return 2
        base_spec = SymmetricSpec.from_file(args.spec_file)
        if args.n and args.n != [base_spec.n]:
            print(f"table file fixes n = {base_spec.n}", file=sys.stderr)
            return 2
        args.n = [base_spec.n]
    elif not args.n:
        print(f"--n is required with family {args.family}", file=sys.stderr)
        return 2
    ms = args.M or [None]
    rows, all_ok = [], True
    for n in args.n:
        for k in args.k:
            for M in ms:
                led, formula, err = _scale_cell(args, args.family, n, k, M,
                                                base_spec)
                ok = led.qcc == formula
                all_ok &= ok
                rows.append({"family": args.family, "n": n, "k": k, "M": M,
                             "qcc": led.qcc, "rounds": led.rounds,
                             "empirical_error": err})
    summary = {"command": "scale-table", "family": args.family,
               "mode": args.mode, "cells": len(rows), "seed": args.seed,
               "formula_match": all_ok, "ok": all_ok}
    _emit(rows, SCALE_COLUMNS, summary, args.format)
    return 0 if all_ok else EXIT_ASSERTION


def _reduced_error(red, family, n, trials, seed, spec=None):
    """Monte-Carlo error of the two-party program against the 2-ary oracle
    (exhaustive over shared randomness for the fingerprinting protocol)."""
    rng = np.random.default_rng(seed)
    if family == "equality":
        wrong = total = 0
        for t in range(trials):
            x1 = "".join(rng.choice(["0", "1"], size=n))
            x2 = x1 if t % 2 == 0 else "".join(rng.choice(["0", "1"], size=n))
            truth = eval_equality([x1, x2])
            for r1 in range(1 << n):
                for r2 in range(1 << n):
                    res = engine.execute(red, {1: x1, 2: x2},
                                         shared_randomness=[r1, r2])
                    total += 1
                    wrong += res.outputs[1] != truth
        return wrong / total
    oracle = {"disj": eval_disj, "ip": eval_ip}.get(family)
    if oracle is None:
        oracle = lambda xs: eval_symmetric(spec, xs)
    wrong = 0
    for t in range(trials):
        x1 = "".join(rng.choice(["0", "1"], size=n))
        x2 = "".join(rng.choice(["0", "1"], size=n))
        res = engine.execute(red, {1: x1, 2: x2}, seed=seed * 4409 + t)
        wrong += res.outputs[1] != oracle([x1, x2])
    return wrong / trials if trials else 0.0


def cmd_reduce(args) -> int:
    cfg = ExperimentConfig.from_args(args, "reduce")
    if cfg.family == "aa":
        print("family 'aa' has no program to reduce", file=sys.stderr)
        return 2
    prog, _, peak = _build(cfg)
    _cap_or_refuse(peak, args)
    family = "symmetric" if cfg.family == "symmetric-from-file" else cfg.family
    pivot = args.pivot or rd.select_pivot(nm.derive_schedule(prog))
    red = rd.reduce_via_embedding(prog, family, pivot, spec=cfg.spec)
    err = _reduced_error(red, family, cfg.n, cfg.trials, cfg.seed,
                         spec=cfg.spec)
    report = rd.reduction_report(prog, family=family, pivot=pivot,
                                 spec=cfg.spec, empirical_error=err)
    ok = (report["qcc_reduced"] <= int(report["bound_2qcc_over_k"])
          and report["rounds_reduced"] <= report["rounds_original"]
          and err <= cfg.eps)
    row = {"family": cfg.family, "n": cfg.n, "k": cfg.k, **report}
    summary = {"command": "reduce", **row, "ok": ok}
    _emit([row], REDUCE_COLUMNS, summary, cfg.fmt)
    return 0 if ok else EXIT_ASSERTION


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qccsim",
        description="Simulate oblivious multiparty protocols and check their "
                    "communication-cost claims.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, families):
        sp.add_argument("--family", required=True, choices=families)
        sp.add_argument("--eps", type=float, default=1 / 3,
                        help="error budget for randomized protocols")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("csv", "json", "markdown"),
                        default="json")
        sp.add_argument("--c", type=int, default=2,
                        help="fingerprint repetitions (equality)")
        sp.add_argument("--method", choices=("ip", "polynomial"), default="ip",
                        help="equality fingerprint kind")
        sp.add_argument("--c-aa", dest="c_aa", type=float, default=1.0,
                        help="round constant of the amplification cost model")
        sp.add_argument("--spec-file", help="table file for symmetric-from-file")
        sp.add_argument("--qubit-cap", dest="qubit_cap", type=int,
                        help="largest allowed state factor (default 26 or "
                             "QCCSIM_QUBIT_CAP)")

    run = sub.add_parser("run", help="execute one protocol over seeded trials")
    run.add_argument("--n", type=int, help="input length (taken from the "
                     "table file for symmetric-from-file)")
    run.add_argument("--k", type=int, help="number of players (default 3, or the table file's k)")
    run.add_argument("--M", type=int, help="round budget: use the "
                     "ceil(n/M^2)-block bounded-round variant (disj only)")
    run.add_argument("--trials", type=int, default=100)
    common(run, ("disj", "ip", "equality", "symmetric-from-file", "aa"))

    sc = sub.add_parser("scale-table", help="cost table over an (n, k) grid")
    sc.add_argument("--n", type=_int_list,
                    help="comma-separated input lengths")
    sc.add_argument("--k", type=_int_list, default=[3],
                    help="comma-separated player counts")
    sc.add_argument("--M", type=_int_list,
                    help="comma-separated round budgets (disj only)")
    sc.add_argument("--mode", choices=("schedule-only", "execute"),
                    default="schedule-only")
    sc.add_argument("--trials", type=int, default=20,
                    help="trials per cell in execute mode")
    common(sc, ("disj", "ip", "equality", "symmetric-from-file", "aa"))

    rc = sub.add_parser("reduce", help="merge a k-party protocol to 2 parties")
    rc.add_argument("--n", type=int, help="input length (from the table file "
                    "for symmetric-from-file)")
    rc.add_argument("--k", type=int, help="number of players (default 3, or the table file's k)")
    rc.add_argument("--trials", type=int, default=50,
                    help="input pairs for the empirical error estimate")
    rc.add_argument("--pivot", type=int, help="player Alice takes over "
                    "(default: cheapest boundary)")
    common(rc, ("disj", "ip", "equality", "symmetric-from-file"))
    return p


def main(argv=None) -> int:
    p = build_parser()
    args = p.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "scale-table":
            return cmd_scale(args)
        return cmd_reduce(args)
    except QubitCapError as e:
        print(f"refusing: {e}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
