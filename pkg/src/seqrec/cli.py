"""Command-line surface: plan, simulate, recommend, bandit, inspect,
resource-experiment.

Every command is deterministic given its flags and seed; artifacts are
emitted as JSON/CSV under --out-dir.  Exit codes: 0 success, 2 validation
error, 3 infeasible, 4 resource cap, 5 IO/parse error.

Curriculum and table paths may use the form ``bundled:<name>`` to refer to
the data files shipped with the package (see ``seqrec.data``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bandit, planner, simulate, synth
from .curriculum import CourseState, RewardKind, load_curriculum
from .errors import (
    Infeasible,
    ParseError,
    SeqRecError,
    SizeLimitExceeded,
    ValidationError,
)

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_SIZE_CAP = 4
EXIT_IO = 5


def _resolve(path: str) -> str:
    if path.startswith("bundled:"):
        from . import data

        return str(data.path(path[len("bundled:"):]))
    return path


def _reward_kind(name: str) -> RewardKind:
    return RewardKind.TIME_TO_GRADUATION if name == "time-to-grad" else RewardKind.ON_TIME


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_plan(args) -> int:
    cur = load_curriculum(_resolve(args.curriculum))
    kind = _reward_kind(args.reward)
    graph = planner.forward_search(cur, max_nodes=args.max_nodes)
    table = planner.backward_induction(graph, kind)
    out = _out_dir(args)
    policy_path = out / (args.out_policy or "policy.json")
    planner.write_policy_json(policy_path, table, cur)
    (out / "graph_stats.csv").write_text(planner.graph_stats_csv(graph))

    counts = planner.state_counts(graph)
    print(f"root value V(s0) = {table.root_value!r} [{kind.value}]")
    first = planner.recommend(table, CourseState.empty(cur.n_courses), 1)
    codes = [cur.courses[c].code for c in first]
    print(f"first-quarter recommendation: {{{', '.join(codes)}}}" if codes
          else "first-quarter recommendation: {} (idle)")
    try:
        seq = planner.best_failfree_sequence(cur, max_nodes=args.max_nodes)
        print(f"fail-free best sequence: {len(seq)} quarters")
        for t, ids in seq:
            print(f"  quarter {t}: {', '.join(cur.courses[c].code for c in ids) or '-'}")
    except Infeasible as exc:
        print(f"fail-free best sequence: infeasible ({exc})")
        raise
    print("state counts per quarter: " + " ".join(str(c) for c in counts))
    print(f"policy written to {policy_path}")
    return 0


def cmd_simulate(args) -> int:
    cur = load_curriculum(_resolve(args.curriculum))
    pol = planner.load_policy_json(_resolve(args.policy))
    planner.check_policy_matches(pol, cur)
    report = simulate.graduation_stats(cur, pol, args.n, args.seed)
    out = _out_dir(args)
    (out / "grad_report.json").write_text(
        json.dumps(report.to_json_dict(), indent=1, sort_keys=True) + "\n")
    (out / "grad_histogram.csv").write_text(simulate.histogram_csv(report))
    print(f"n = {report.n}")
    print(f"on_time_prob = {report.on_time_prob!r} +/- {report.ci_halfwidth!r}")
    print(f"expected_time (graduates) = {report.expected_time!r}")
    print(f"did not graduate: {report.n_failed}")
    print(f"report written to {out / 'grad_report.json'}")
    return 0


def cmd_recommend(args) -> int:
    pol = planner.load_policy_json(_resolve(args.policy))
    ids = {code: i for i, code in enumerate(pol.codes)}
    bits = 0
    if args.state:
        for code in args.state.split(","):
            code = code.strip()
            if code not in ids:
                raise ParseError(f"unknown course code {code!r}")
            bits |= 1 << ids[code]
    state = CourseState(bits, pol.n_courses)
    action = planner.recommend(pol, state, args.quarter)
    if pol.is_terminal_bits(bits):
        print("terminal")
    print(", ".join(pol.codes[c] for c in action) if action else "(take no course)")
    return 0


def cmd_bandit(args) -> int:
    table = synth.load_gpa_table(_resolve(args.gpa_table))
    env_kw = {"sigma": args.sigma, "unavailable": args.unavailable,
              "context_dist": "counts"}
    if args.env_config:
        try:
            with open(args.env_config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read env config: {exc}") from exc
        env_kw["sigma"] = doc.get("sigma", env_kw["sigma"])
        env_kw["context_dist"] = doc.get("context_dist", env_kw["context_dist"])
        env_kw["unavailable"] = doc.get("unavailable_policy", env_kw["unavailable"])
    env = synth.EnvModel(table=table, **env_kw)
    config = bandit.BanditConfig(
        n_arms=env.n_arms, alpha=args.alpha,
        split_scale=args.split_scale, split_exponent=args.split_exponent)
    schemes = ([bandit.Scheme(args.scheme)] if args.scheme != "all"
               else list(bandit.Scheme))
    out = _out_dir(args)
    results = []
    for scheme in schemes:
        res = bandit.benchmark(scheme, env, args.n, args.seed, config)
        results.append(res)
        tag = scheme.value.replace("-", "_")
        (out / f"history_{tag}.csv").write_text(bandit.history_csv(res.history))
        if res.history.best_mean is not None:
            series = bandit.regret(res.history)
            (out / f"regret_{tag}.csv").write_text(bandit.regret_csv(series))
            print(f"{scheme.value}: final avg GPA {res.curve[-1]:.4f}, "
                  f"cumulative regret {series.cumulative[-1]:.1f}")
        else:
            print(f"{scheme.value}: final avg GPA {res.curve[-1]:.4f}")
    (out / "avg_gpa_curves.csv").write_text(bandit.curve_csv(results))
    print(f"curves written to {out / 'avg_gpa_curves.csv'}")
    return 0


def cmd_inspect(args) -> int:
    cur = load_curriculum(_resolve(args.curriculum))
    graph = planner.forward_search(cur, max_nodes=args.max_nodes)
    counts = planner.state_counts(graph)
    out = _out_dir(args)
    lines = ["quarter,num_states"] + [f"{t},{c}" for t, c in enumerate(counts)]
    (out / "state_counts.csv").write_text("\n".join(lines) + "\n")
    saturation = next(t for t, c in enumerate(counts) if c == counts[-1])
    for t, c in enumerate(counts):
        print(f"quarter {t}: {c} states")
    print(f"saturation quarter: {saturation} (|L(t)| constant from there on)")
    return 0


def cmd_resource_experiment(args) -> int:
    mean1, mean2 = simulate.resource_experiment(
        args.n_courses, args.availability_prob, args.fail_prob, args.n, args.seed)
    predicted = simulate.hub_bottleneck_expected_time(
        args.n_courses, args.availability_prob, args.fail_prob)
    out = _out_dir(args)
    doc = {
        "n_courses": args.n_courses,
        "availability_prob": args.availability_prob,
        "fail_prob": args.fail_prob,
        "n": args.n,
        "seed": args.seed,
        "mean_time_rare_hub": mean1,
        "mean_time_rare_dependent": mean2,
        "predicted_rare_hub": predicted,
    }
    (out / "resource_experiment.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"rare hub prerequisite: mean completion {mean1:.3f} quarters "
          f"(closed form {predicted:.3f})")
    print(f"rare dependent course: mean completion {mean2:.3f} quarters")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqrec", description=__doc__)
    ap.add_argument("--config", help="JSON file of flag defaults")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=simulate.DEFAULT_SEED)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--max-nodes", type=int, default=planner.DEFAULT_MAX_NODES)

    p = sub.add_parser("plan", help="compute the optimal policy for a curriculum")
    p.add_argument("curriculum")
    p.add_argument("--reward", choices=["on-time", "time-to-grad"], default="on-time")
    p.add_argument("--out-policy", help="policy file name (under --out-dir)")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="Monte-Carlo graduation statistics under a policy")
    p.add_argument("curriculum")
    p.add_argument("policy")
    p.add_argument("-n", type=int, default=100_000)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recommend", help="look up the recommendation for a state")
    p.add_argument("policy")
    p.add_argument("--state", default="", help="comma-separated passed course codes")
    p.add_argument("--quarter", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("bandit", help="personalized policy selection on a GPA table")
    p.add_argument("gpa_table")
    p.add_argument("--scheme", default="adaptive",
                   choices=[s.value for s in bandit.Scheme] + ["all"])
    p.add_argument("-n", type=int, default=10_000)
    p.add_argument("--sigma", type=float, default=synth.DEFAULT_SIGMA)
    p.add_argument("--unavailable", choices=["error", "marginal"], default="marginal")
    p.add_argument("--env-config",
                   help="JSON {sigma, context_dist, unavailable_policy}")
    p.add_argument("--alpha", type=float, default=bandit.DEFAULT_ALPHA)
    p.add_argument("--split-scale", type=float, default=None)
    p.add_argument("--split-exponent", type=float, default=bandit.DEFAULT_SPLIT_EXPONENT)
    common(p)
    p.set_defaults(func=cmd_bandit)

    p = sub.add_parser("inspect", help="per-quarter reachable state counts")
    p.add_argument("curriculum")
    common(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("resource-experiment",
                       help="completion times when a hub vs a dependent course is rare")
    p.add_argument("--n-courses", type=int, default=9,
                   help="dependent courses behind the hub prerequisite")
    p.add_argument("--availability-prob", type=float, default=0.2)
    p.add_argument("--fail-prob", type=float, default=0.1)
    p.add_argument("-n", type=int, default=100_000)
    common(p)
    p.set_defaults(func=cmd_resource_experiment)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_IO
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and f"--{key}" not in (argv or sys.argv):
                parser_default = ap.get_default(attr)
                if getattr(args, attr) == parser_default:
                    setattr(args, attr, value)
    try:
        return args.func(args)
    except SizeLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE_CAP
    except Infeasible as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, SeqRecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
