"""Command-line interface.

Exit status: 0 on success, 1 on a numerical or contract failure, 2 on bad
input (unreadable or malformed files, inconsistent dimensions, bad flags).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    DEFAULT_BETAS,
    RANK_SCAN_COLUMNS,
    SUMMARY_COLUMNS,
    bootstrap_study,
    init_study,
    rank_scan,
)
from .fit import FitConfig, fit
from .formats import (
    EnvelopeReport,
    InputError,
    atomic_write,
    component_labels,
    read_chain,
    read_matrix,
    write_chain,
    write_matrix,
    write_report,
    write_table,
)
from .model import Factorization, is_column_normalized, normalize_columns
from .sampler import DegeneracyWarning, SamplerConfig, run_sampler
from .svd import InfeasibleSolutionError, T_of_E, T_of_P, alpha_of_E, alpha_of_P, reconstruct_from_alpha, truncated_svd

EXIT_OK, EXIT_FAILURE, EXIT_INPUT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def _int_list(text):
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _float_list(text):
    return [float(x) for x in text.split(",")]


def _load_factorization(p_path, e_path):
    P = read_matrix(p_path)
    E = read_matrix(e_path)
    if P.shape[1] != E.shape[0]:
        raise InputError(f"P has {P.shape[1]} columns but E has {E.shape[0]} rows")
    if min(P.shape[0], E.shape[1]) < P.shape[1]:
        raise InputError(f"rank {P.shape[1]} exceeds min(K, G) = {min(P.shape[0], E.shape[1])}")
    return P, E


# ---------------------------------------------------------------------------
# commands

def cmd_fit(args):
    M = read_matrix(args.input)
    cfg = FitConfig(rank=args.rank, n_inits=args.inits, max_iter=args.max_iter,
                    rel_tol=args.tol, seed=args.seed)
    res = fit(M.values, cfg)
    out = Path(args.out)
    labels = component_labels(cfg.rank)
    write_matrix(out / "P.tsv", res.best.P, M.row_labels, labels)
    write_matrix(out / "E.tsv", res.best.E, labels, M.col_labels)
    summary = {
        "input": str(args.input),
        "config": asdict(cfg),
        "divergence": res.divergence,
        "best_init": res.best_index,
        "per_init_divergences": res.per_init_divergences.tolist(),
        "iterations_used": res.iterations_used.tolist(),
    }
    atomic_write(out / "fit_summary.json", json.dumps(summary, indent=1) + "\n")
    print(f"GKL {res.divergence:.10g} (best of {cfg.n_inits} starts: #{res.best_index})")
    return EXIT_OK


def cmd_sample(args):
    Pm, Em = _load_factorization(args.P, args.E)
    F = Factorization(Pm.values, Em.values)
    notes = []
    if not is_column_normalized(F.P):
        notes.append("P columns did not sum to 1; normalized before sampling")
        warnings.warn(notes[-1], UserWarning, stacklevel=1)
        F = normalize_columns(F)
    cfg = SamplerConfig(beta=args.beta, check_every=args.check_every, epsilon=args.epsilon,
                        seed=args.seed, max_iterations=args.max_iter, track_E_size=args.track_e,
                        thin=args.thin, segment_envelope=not args.visited_only)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegeneracyWarning)
        chain, env = run_sampler(F, cfg)
    for w in caught:
        if args.strict and issubclass(w.category, DegeneracyWarning):
            raise DegeneracyError(str(w.message))
        notes.append(str(w.message))
        print(f"warning: {w.message}", file=sys.stderr)
    config = asdict(cfg)
    config.update({"P": str(args.P), "E": str(args.E), "strict": args.strict})
    report = EnvelopeReport.from_run(F, chain, env, config, Pm.row_labels, Em.col_labels, notes)
    write_report(args.out, report)
    if args.chain_out:
        write_chain(args.chain_out, chain, config)
    print(f"avg_size_P {env.avg_size_P:.6g}  avg_size_E {env.avg_size_E:.6g}  "
          f"iterations {chain.iterations}{'' if chain.converged else ' (not converged)'}")
    return EXIT_OK


class DegeneracyError(RuntimeError):
    pass


def cmd_project(args):
    Pm, Em = _load_factorization(args.P, args.E)
    F = normalize_columns(Factorization(Pm.values, Em.values))
    svd = truncated_svd(F.product(), F.rank, reference_P=F.P)
    if args.samples:
        Ps, Es, _ = read_chain(args.samples)
        if Ps.shape[1:] != F.P.shape or Es.shape[1:] != F.E.shape:
            raise InputError(f"samples have shapes {Ps.shape[1:]}, {Es.shape[1:]}; "
                             f"expected {F.P.shape}, {F.E.shape}")
    else:
        Ps, Es = F.P[None], F.E[None]
    N = F.rank
    if args.side == "P":
        cloud = alpha_of_P(svd, Ps)
        Ts = T_of_P(svd, Ps)
    else:
        cloud = alpha_of_E(svd, Es)
        # T_E T_P is diagonal, so T_P is inv(T_E) up to column scaling
        Ts = np.linalg.inv(T_of_E(svd, Es))
        Ts = Ts / Ts[:, 0:1, :]
    errs = []
    for s in range(len(Ps)):
        try:
            R = reconstruct_from_alpha(svd, Ts[s])
            errs.append(float(max(np.abs(R.P - Ps[s] / Ps[s].sum(axis=0)).max(),
                                  np.abs(R.product() - F.product()).max() / F.product().max())))
        except InfeasibleSolutionError:
            errs.append(float("nan"))
    columns = ["sample_index", "component"] + [f"alpha_{a + 1}" for a in range(N - 1)] + ["roundtrip_error"]
    rows = []
    for m in range(len(cloud)):
        row = {"sample_index": int(cloud.sample_index[m]), "component": int(cloud.components[m]) + 1,
               "roundtrip_error": errs[cloud.sample_index[m]]}
        for a in range(N - 1):
            row[f"alpha_{a + 1}"] = float(cloud.points[m, a])
        rows.append(row)
    config = {"P": str(args.P), "E": str(args.E), "samples": args.samples, "side": args.side,
              "singular_values": svd.sigma.tolist(), "sign_convention": svd.sign_convention.tolist()}
    write_table(args.out, rows, columns, config)
    print(f"{len(rows)} points written to {args.out}")
    return EXIT_OK


def cmd_rank_scan(args):
    M = read_matrix(args.input)
    fit_cfg = {"n_inits": args.inits, "max_iter": args.max_iter, "rel_tol": args.tol}
    base = SamplerConfig(check_every=args.check_every, epsilon=args.epsilon,
                         max_iterations=args.max_sampler_iter)
    res = rank_scan(M.values, args.ranks, args.betas, args.repeats, args.seed,
                    fit_config=fit_cfg, sampler_config=base, n_jobs=args.jobs)
    config = {"input": str(args.input), "ranks": args.ranks, "betas": args.betas,
              "repeats": args.repeats, "seed": args.seed, "fit": fit_cfg, "sampler": asdict(base)}
    out = Path(args.out)
    write_table(out / "rank_scan.tsv", res.rows, RANK_SCAN_COLUMNS, config)
    write_table(out / "rank_scan_summary.tsv", res.summary(), SUMMARY_COLUMNS, config)
    print(f"{len(res.rows)} runs written to {out}")
    return EXIT_OK


def cmd_bootstrap(args):
    M = read_matrix(args.input)
    res = bootstrap_study(M.values, args.rank, B=args.B, init_mode=args.init_mode,
                          n_inits=args.inits, seed=args.seed, max_iter=args.max_iter,
                          rel_tol=args.tol, n_jobs=args.jobs)
    N = args.rank
    columns = ["replicate", "seed", "init_mode", "divergence", "component"] + \
        [f"alpha_{a + 1}" for a in range(N - 1)]
    config = {"input": str(args.input), "rank": N, "B": args.B, "init_mode": args.init_mode,
              "inits": args.inits, "seed": args.seed, "max_iter": args.max_iter, "tol": args.tol,
              "singular_values": res.svd.sigma.tolist()}
    write_table(args.out, res.rows(), columns, config)
    print(f"{res.B} replicates, alpha bounding-box area {res.bbox_area():.6g}")
    return EXIT_OK


def cmd_init_study(args):
    M = read_matrix(args.input)
    res = init_study(M.values, args.rank, runs=args.runs, inits_grid=args.inits, seed=args.seed,
                     max_iter=args.max_iter, rel_tol=args.tol, n_jobs=args.jobs)
    config = {"input": str(args.input), "rank": args.rank, "runs": args.runs,
              "inits": list(map(int, res.inits)), "seed": args.seed,
              "max_iter": args.max_iter, "tol": args.tol}
    out = Path(args.out)
    raw = [{"run": r, "seed": int(res.run_seeds[r]), "inits": int(k),
            "min_divergence": float(res.min_divergence[r, c])}
           for r in range(len(res.run_seeds)) for c, k in enumerate(res.inits)]
    write_table(out / "init_study.tsv", raw, ["run", "seed", "inits", "min_divergence"], config)
    write_table(out / "init_study_summary.tsv", res.rows(), ["inits", "mean", "q05", "q95"], config)
    print(f"{args.runs} runs written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def _fit_flags(p, inits_default):
    p.add_argument("--inits", type=int, default=inits_default, help="random starts per fit")
    p.add_argument("--max-iter", type=int, default=10000, help="update cap per start")
    p.add_argument("--tol", type=float, default=1e-8, help="relative GKL change to stop")


def build_parser():
    parser = _Parser(prog="nmfsfs", description="Fit Poisson NMFs and sample their sets of feasible solutions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a Poisson NMF to a count matrix")
    p.add_argument("input", help="count matrix TSV")
    p.add_argument("--rank", type=int, required=True)
    _fit_flags(p, 5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="sample the set of feasible solutions of a factorization")
    p.add_argument("P", help="signature matrix TSV (K x N)")
    p.add_argument("E", help="exposure matrix TSV (N x G)")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--check-every", type=int, default=1000)
    p.add_argument("--max-iter", type=int, default=10**7, help="sweep cap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--thin", type=int, default=None, help="keep every n-th sweep in the chain")
    p.add_argument("--track-e", action="store_true", help="also require the E envelope to settle")
    p.add_argument("--visited-only", action="store_true",
                   help="envelope over visited states only, not interval endpoints")
    p.add_argument("--strict", action="store_true", help="treat degeneracy warnings as errors")
    p.add_argument("--chain-out", help="write retained samples to this TSV")
    p.add_argument("--out", required=True, help="envelope report (JSON)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("project", help="SVD-space coordinates of a solution or chain")
    p.add_argument("P")
    p.add_argument("E")
    p.add_argument("--samples", help="chain dump from 'sample --chain-out'")
    p.add_argument("--side", choices=("P", "E"), default="P")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("rank-scan", help="SFS size over ranks and beta values")
    p.add_argument("input")
    p.add_argument("--ranks", type=_int_list, default=list(range(2, 11)), help="e.g. 2-6 or 2,3,5")
    p.add_argument("--betas", type=_float_list, default=list(DEFAULT_BETAS))
    p.add_argument("--repeats", type=int, default=50)
    _fit_flags(p, 5)
    p.add_argument("--check-every", type=int, default=1000)
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--max-sampler-iter", type=int, default=10**7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_rank_scan)

    p = sub.add_parser("bootstrap", help="Poisson bootstrap refits in SVD coordinates")
    p.add_argument("input")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--B", type=int, default=100)
    p.add_argument("--init-mode", choices=("random", "same"), default="random")
    _fit_flags(p, 10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", required=True, help="output TSV")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("init-study", help="minimum GKL against number of random starts")
    p.add_argument("input")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--inits", type=_int_list, default=list(range(1, 11)), help="e.g. 1-10")
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_init_study)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
