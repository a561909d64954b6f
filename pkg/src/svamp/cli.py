"""Command-line entry point: ``svamp <command> [options]``.

Every command prints one JSON document ``{command, version, parameters,
result}``; floats carry 15 significant digits.  Exit status is 0 on success,
1 when a computation precondition fails, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .amplification_bounds import bound_chain, solve_entropy_constant, threshold_epsilon1, threshold_ky_fan
from .attack_lp import (
    AttackEnsemble,
    AttackParams,
    brute_force_cloud_oracle,
    closed_form_optimum,
    derive_attack_params,
    dual_certificate,
    solve_lp,
    threshold_epsilon2,
)
from .boxes import (
    CHSH_INPUTS,
    CHSH_N,
    check_no_signaling,
    deterministic_boxes,
    edge_of,
    pr_consistent,
    true_bell_value,
    canonical_toy_scenario,
    toy_attack,
)
from .protocol_sim import ProtocolConfig, cardinality_window, run_protocol, run_trials, summarize
from .sv_source import SvParameter, c_plus, ky_fan_bounds, setting_prob_bounds

SEED_ENV = "SVAMP_SEED"
SIG_DIGITS = 15


class ComputationError(Exception):
    pass


class UsageError(Exception):
    pass


def round_sig(obj):
    """Recursively round floats to 15 significant digits; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): round_sig(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{SIG_DIGITS}g}") if math.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist())
    return obj


def dumps(doc) -> str:
    return json.dumps(round_sig(doc), indent=2, sort_keys=True) + "\n"


# --- commands --------------------------------------------------------------


def cmd_threshold(args) -> dict:
    e1 = threshold_epsilon1()
    c = solve_entropy_constant(args.tol)
    ek = threshold_ky_fan(args.tol)
    e2 = threshold_epsilon2(args.m_exponent)
    return {
        "epsilon1": e1, "epsilon_kyfan": ek, "epsilon2": e2, "entropy_constant": c,
        "rounded": {"epsilon1": round(e1, 4), "epsilon_kyfan": round(ek, 4), "epsilon2": round(e2, 4)},
    }


def _r_values(args) -> list[int]:
    if args.r_bits is not None:
        return [args.r_bits]
    if args.r_min is None or args.r_max is None:
        raise UsageError("give --r-bits or both --r-min and --r-max")
    if args.r_min > args.r_max:
        raise UsageError("--r-min exceeds --r-max")
    return list(range(args.r_min, args.r_max + 1))


def _gnuplot(rows: list[dict], x: str, ys: list[str], title: str) -> str:
    lines = [f"# {title}", "set logscale y", f"set xlabel '{x}'", "$data << EOD"]
    lines += [" ".join(f"{row[k]:.15g}" for k in [x, *ys]) for row in rows]
    lines.append("EOD")
    plots = ", ".join(f"$data using 1:{i + 2} with linespoints title '{y}'" for i, y in enumerate(ys))
    lines.append(f"plot {plots}")
    return "\n".join(lines) + "\n"


def cmd_bounds(args) -> dict:
    sv = SvParameter(args.epsilon)
    rows = []
    for r in _r_values(args):
        if args.kind == "ky_fan":
            b = ky_fan_bounds(sv, r)
        else:
            b = setting_prob_bounds(sv, r)
        chain = bound_chain(sv, r, b)
        rows.append({**chain.to_dict(), "bounds": b.to_dict()})
    if args.gnuplot_script:
        flat = [{"r_bits": row["r_bits"], "d_upper": row["d_upper"], "delta_big": row["delta_big"]} for row in rows]
        Path(args.gnuplot_script).write_text(_gnuplot(flat, "r_bits", ["d_upper", "delta_big"],
                                                      f"bound chain at epsilon={args.epsilon}"))
    return {"rows": rows}


def _attack_params(args) -> AttackParams:
    sv = SvParameter(args.epsilon)
    return derive_attack_params(sv, args.r_bits, args.m_exponent, args.m)


def cmd_lp(args) -> dict:
    p = _attack_params(args)
    sol = solve_lp(p, args.method, args.include_lower)
    opt = closed_form_optimum(p)
    out = {
        "attack_params": p.to_dict(),
        "lp": sol.to_dict() if args.vector else {k: v for k, v in sol.to_dict().items() if k not in ("primal", "dual")},
        "closed_form": {"value": opt.value, "support": {str(k): v for k, v in opt.support.items()},
                        "power_bound": opt.power_bound},
        "primal_dual_gap": None if sol.dual_value is None else abs(sol.dual_value - sol.optimal_value),
        "closed_form_gap": None if sol.optimal_value is None else abs(sol.optimal_value - opt.value),
    }
    if args.oracle:
        ens = opt.ensemble(p.n)
        out["oracle"] = brute_force_cloud_oracle(p, ens).to_dict()
    if sol.status != "optimal":
        raise ComputationError(f"LP status {sol.status}: {json.dumps(round_sig(out))}")
    return out


def cmd_dual_check(args) -> dict:
    p = _attack_params(args)
    if not p.dual_precondition:
        raise ComputationError(f"precondition (1 - a) <= 1/n violated: 1 - a = {p.detect:.15g}, 1/n = {1 / p.n:.15g}")
    cert = dual_certificate(p, args.form)
    out = {"attack_params": p.to_dict(), "certificate": cert.to_dict(),
           "closed_form_value": closed_form_optimum(p).value}
    if not cert.feasible:
        raise ComputationError(
            f"dual vector infeasible: min slack {cert.min_slack:.6g} at k={cert.argmin_k}; "
            f"violated constraints {cert.violations[:20]}"
        )
    return out


def cmd_cloud_verify(args) -> dict:
    sv = SvParameter(args.epsilon)
    rng = np.random.default_rng(args.seed)
    m, n = args.m, args.n
    p = AttackParams(m, n, 1.0 - 1.0 / n, c_plus(sv, m), epsilon=args.epsilon)
    reports = []
    for trial in range(args.vectors):
        r = np.ones(m) if trial == 0 and args.weights == "uniform" else rng.random(m)
        mult = np.array([math.comb(m, j) * n**j for j in range(1, m + 1)], dtype=float)
        ens = AttackEnsemble(n, r * mult / (r * mult).sum())
        rep = brute_force_cloud_oracle(p, ens)
        reports.append({"type_probs": ens.type_probs, **rep.to_dict()})
    worst = max(max(r["max_q_error"], r["max_residual_error"]) for r in reports)
    out = {"attack_params": p.to_dict(), "reports": reports, "max_error": worst}
    if worst > args.tol:
        raise ComputationError(f"oracle disagrees with the cloud formulas: max error {worst:.3g} > {args.tol:g}")
    return out


def _ensemble_for(args, n: int, M: int):
    if args.supplier != "attack":
        return None
    m = args.attack_m if args.attack_m is not None else cardinality_window(n, M)[0]
    if args.attack_probs:
        try:
            probs = np.array([float(t) for t in args.attack_probs.split(",")])
        except ValueError:
            raise UsageError(f"--attack-probs must be comma-separated numbers, got {args.attack_probs!r}")
        return AttackEnsemble(n, probs)
    if args.attack_optimal:
        r = int(math.log2(n)) - 1
        p = derive_attack_params(SvParameter(args.epsilon), r, m=m)
        return closed_form_optimum(p).ensemble(n)
    return AttackEnsemble.single_type(m, args.attack_type, n)


def _write_csv(path: str, config: ProtocolConfig, count: int):
    fields = ["trial", "run_index", "alice_setting", "bob_setting", "in_S", "edge", "x", "y", "consistent", "box"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for t in range(count):
            out = run_protocol(config, t)
            for rec in out.transcript.records(config.n):
                w.writerow([t, rec.run_index, rec.alice_setting, rec.bob_setting, int(rec.in_S), rec.edge,
                            rec.outcomes[0], rec.outcomes[1], int(rec.consistent), rec.box])


def cmd_simulate(args) -> dict:
    M = args.M
    n = args.n
    cfg_probe = ProtocolConfig(n=n, M=M, epsilon=args.epsilon)  # validates n, resolves M
    config = ProtocolConfig(
        n=n, M=cfg_probe.M, epsilon=args.epsilon, source_strategy=args.source_strategy,
        supplier=args.supplier, ensemble=_ensemble_for(args, n, cfg_probe.M),
        bad_output=args.bad_output, seed=args.seed,
    )
    tally = run_trials(config, args.trials, args.workers)
    summary = summarize(config, tally)
    if args.csv:
        _write_csv(args.csv, config, min(args.csv_trials, args.trials))
        summary["csv"] = {"path": args.csv, "trials": min(args.csv_trials, args.trials)}
    return summary


def cmd_toy_example(args) -> dict:
    sc = canonical_toy_scenario()
    witness, posteriors = [], []
    for s in CHSH_INPUTS:
        edge = edge_of(CHSH_N, *s)
        for o in ((0, 0), (0, 1), (1, 0), (1, 1)):
            try:
                post = toy_attack(sc, s, o)
            except ValueError:
                continue
            posteriors.append({"tester_input": s, "edge": edge, "observed": o,
                               "pr_consistent": pr_consistent(s, o),
                               "posterior": {f"{k[0]},{k[1]}": v for k, v in post.items()}})
            if not pr_consistent(s, o):
                witness.append({"tester_input": s, "observed": o, "p_source_equals_input": post[s]})
    mixture = sc.mixture
    two_chain = sorted({true_bell_value(b) for _, b in deterministic_boxes(2)})
    return {
        "witness": witness,
        "witness_max": max(w["p_source_equals_input"] for w in witness),
        "posteriors": posteriors,
        "local_boxes_no_signaling": all(bool(check_no_signaling(b)) for b in sc.local_boxes.values()),
        "mixture_true_bell_value": true_bell_value(mixture),
        "mixture_error_masses": mixture.error_masses(),
        "classical_floor": 1.0 / CHSH_N,
        "n2_deterministic_values": two_chain,
    }


COMMANDS = {
    "threshold": cmd_threshold,
    "bounds": cmd_bounds,
    "lp": cmd_lp,
    "dual-check": cmd_dual_check,
    "cloud-verify": cmd_cloud_verify,
    "simulate": cmd_simulate,
    "toy-example": cmd_toy_example,
}


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: {SEED_ENV}={raw!r} is not an integer")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svamp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-o", "--output", help="write JSON here instead of stdout")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="epsilon thresholds")
    p.add_argument("--m-exponent", type=float, default=1.99)
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("bounds", help="conditional setting bounds and the bound chain")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--r-bits", type=_positive_int)
    p.add_argument("--r-min", type=_positive_int)
    p.add_argument("--r-max", type=_positive_int)
    p.add_argument("--kind", choices=("plain", "ky_fan"), default="plain")
    p.add_argument("--gnuplot-script", metavar="PATH")

    for name, helptext in (("lp", "solve the attack LP"), ("dual-check", "check the dual certificate")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--epsilon", type=float, required=True)
        p.add_argument("--r-bits", type=_positive_int, required=True)
        p.add_argument("--m", type=_positive_int, help="number of attacked runs (default round((n/2)^m_exponent))")
        p.add_argument("--m-exponent", type=float, default=1.99)
        if name == "lp":
            p.add_argument("--method", choices=("auto", "simplex", "certificate"), default="auto")
            p.add_argument("--include-lower", action="store_true", help="add the lower SV rows")
            p.add_argument("--oracle", action="store_true", help="cross-check with exhaustive cloud enumeration")
            p.add_argument("--vector", action="store_true", help="include full primal and dual vectors")
        else:
            p.add_argument("--form", choices=("corrected", "proof", "displayed"), default="corrected")

    p = sub.add_parser("cloud-verify", help="exhaustive check of cloud probabilities and LP rows")
    p.add_argument("--m", type=_positive_int, default=4)
    p.add_argument("--n", type=int, choices=(2, 4), default=4)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--weights", choices=("uniform", "random"), default="uniform")
    p.add_argument("--vectors", type=_positive_int, default=3, help="uniform first (if chosen), then random")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=_default_seed())

    p = sub.add_parser("simulate", help="Monte Carlo protocol runs")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--M", type=_positive_int)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--supplier", choices=("honest_quantum", "honest_ideal", "attack", "toy"), default="honest_quantum")
    p.add_argument("--source-strategy", choices=("uniform", "extremal_bernoulli"), default="uniform")
    p.add_argument("--trials", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--workers", type=_positive_int)
    p.add_argument("--attack-m", type=_positive_int, help="length of the attacked box sequence")
    p.add_argument("--attack-type", type=_positive_int, default=1, help="single-type ensemble with this many bad boxes")
    p.add_argument("--attack-probs", help="comma-separated P_1..P_m")
    p.add_argument("--attack-optimal", action="store_true", help="use the LP-optimal two-point ensemble")
    p.add_argument("--bad-output", choices=("uniform", "fixed"), default="uniform")
    p.add_argument("--csv", metavar="PATH", help="write run transcripts as CSV")
    p.add_argument("--csv-trials", type=_positive_int, default=1)

    sub.add_parser("toy-example", help="the CHSH toy attack and its witness")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    params = {k: v for k, v in vars(args).items() if k not in ("output",)}
    try:
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(f"{args.command}: {exc}")
    except (ComputationError, ValueError, ArithmeticError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1
    text = dumps({"command": args.command, "version": __version__, "parameters": params, "result": result})
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
