"""Batch command-line front end.

Subcommands: ``solve`` (plan and write policy + per-stage stats), ``eval``
(Monte-Carlo policy evaluation, JSON report on stdout), ``convert``
(normalize model files / export built-in domains). All randomness flows from
``--seed``; sub-streams are derived with numpy SeedSequence spawning, and
per-trajectory rngs from (seed, start index, trajectory index). Exit codes:
0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .continuous import SamplingScheme, perseus_solve_continuous
from .domains import build_continuous_nav, build_tag, build_tiny, save_cell_centers
from .exact import exact_value_iteration
from .fileio import (
    ParseError,
    PolicyFormatError,
    load_model,
    load_policy,
    save_model,
    save_policy,
)
from .perseus import SolverConfig, solve
from .qmdp import qmdp_value_function, solve_mdp
from .simulate import EvalConfig, evaluate_policy


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _load_domain(args):
    """Resolve --model/--domain into (kind, object)."""
    if args.model:
        return "file", load_model(args.model)
    name = args.domain
    if name == "tag":
        return "tag", build_tag()
    if name == "cnav":
        return "cnav", build_continuous_nav(seed=args.seed)
    if name.startswith("tiny:"):
        return "tiny", build_tiny(name.split(":", 1)[1])
    raise ValueError(f"unknown domain {name!r}; use tag, cnav, or tiny:NAME")


def _write_manifest(out_dir, args, extra=None):
    manifest = {
        "command": args.command,
        "flags": {
            k: v for k, v in vars(args).items() if k not in ("command", "func") and v is not None
        },
        "versions": {
            "pomdpkit": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_stats_csv(out_dir, stats, continuous):
    """Per-stage stats; all columns are deterministic for a fixed seed.
    Wall-clock timings go to a separate timings.csv."""
    cols = ["stage", "value_sum", "n_vectors", "policy_changes",
            "backups_attempted", "backups_improved"]
    prov_cols = ["improved_uniform", "improved_gauss", "improved_old", "not_improved"]
    lines = [",".join(cols + (prov_cols if continuous else []))]
    for s in stats:
        row = [str(s.stage), _fmt(s.value_sum), str(s.n_vectors), str(s.policy_changes),
               str(s.backups_attempted), str(s.backups_improved)]
        if continuous:
            prov = s.provenance or {k: 0.0 for k in prov_cols}
            row += [_fmt(prov[k]) for k in prov_cols]
        lines.append(",".join(row))
    (Path(out_dir) / "stats.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    timing = ["stage,elapsed_s"] + [f"{s.stage},{s.elapsed_s:.6f}" for s in stats]
    (Path(out_dir) / "timings.csv").write_text("\n".join(timing) + "\n", encoding="utf-8")


def _parse_scheme(text) -> SamplingScheme:
    try:
        u, g, old = (int(x) for x in text.split(","))
    except ValueError:
        raise ValueError(f"--scheme must be U,G,OLD integers, got {text!r}") from None
    return SamplingScheme(n_uniform=u, n_gauss=g, include_old=bool(old))


def cmd_solve(args) -> int:
    kind, domain = _load_domain(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = SolverConfig(
        belief_count=args.beliefs,
        trajectory_horizon=args.horizon,
        max_stages=args.max_stages,
        epsilon=args.eps,
        stable_stages=args.stable_stages,
        criterion=args.criterion,
        rng_seed=args.seed,
    )
    rng = np.random.default_rng(args.seed)
    if args.algo == "perseus-continuous":
        if kind != "cnav":
            raise ValueError("--algo perseus-continuous requires --domain cnav")
        scheme = _parse_scheme(args.scheme)
        vf, stats = perseus_solve_continuous(domain, scheme, config, rng)
        save_cell_centers(out_dir / "cnav_cells.csv", domain)
        _write_stats_csv(out_dir, stats, continuous=True)
    elif args.algo == "perseus":
        if kind == "cnav":
            raise ValueError("--domain cnav requires --algo perseus-continuous")
        vf, stats = solve(domain, config, rng)
        _write_stats_csv(out_dir, stats, continuous=False)
    elif args.algo == "qmdp":
        q, residuals = solve_mdp(domain, residual_tol=args.eps)
        vf = qmdp_value_function(q)
        lines = ["stage,residual"] + [
            f"{i + 1},{_fmt(r)}" for i, r in enumerate(residuals)
        ]
        (out_dir / "stats.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif args.algo == "exact":
        result = exact_value_iteration(domain, residual_tol=args.eps, max_iters=args.max_stages)
        vf = result.value_function
        lines = ["residual,error_bound,iterations,converged",
                 f"{_fmt(result.residual)},{_fmt(result.error_bound)},"
                 f"{result.iterations},{int(result.converged)}"]
        (out_dir / "stats.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown algo {args.algo!r}")
    save_policy(out_dir / "policy.alpha", vf)
    _write_manifest(out_dir, args)
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    policy = load_policy(args.policy)
    if policy.vectors[0].coefficients.shape[0] != model.num_states:
        print(
            f"error: policy has {policy.vectors[0].coefficients.shape[0]} states, "
            f"model has {model.num_states}",
            file=sys.stderr,
        )
        return 1
    config = EvalConfig(
        n_starts=args.starts,
        n_trajectories_per_start=args.traj_per_start,
        max_steps=args.max_steps,
        rng_seed=args.seed,
    )
    report = evaluate_policy(model, policy, config)
    print(report.to_json())
    return 0


def cmd_convert(args) -> int:
    if args.domain:
        args.model = None
        _, domain = _load_domain(args)
        if not hasattr(domain, "transition"):
            raise ValueError(f"domain {args.domain!r} has no finite-action file form")
        save_model(args.out, domain)
        return 0
    model = load_model(getattr(args, "in"))
    save_model(args.out, model)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(prog="pomdpkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="plan a policy and write artifacts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="path to a .pomdp model file")
    src.add_argument("--domain", help="built-in domain: tag, cnav, tiny:NAME")
    p.add_argument("--algo", default="perseus",
                   choices=["perseus", "perseus-continuous", "qmdp", "exact"])
    p.add_argument("--beliefs", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=50, help="steps before a restart "
                   "during belief collection")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-stages", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--stable-stages", type=int, default=5)
    p.add_argument("--criterion", default="any",
                   choices=["any", "value_diff", "policy_change", "max_stages"])
    p.add_argument("--scheme", default="1,0,1", help="U,G,OLD counts (continuous only)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="Monte-Carlo policy evaluation")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--starts", type=int, default=100)
    p.add_argument("--traj-per-start", type=int, default=10)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convert", help="normalize a model file or export a domain")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="in", help="input .pomdp file")
    src.add_argument("--domain", help="built-in domain to export")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, PolicyFormatError, ValueError) as exc:
        # bad input files or flag values are usage errors
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
