"""Command-line interface.

Exit codes: 0 success, 1 validation error (bad flags, bad input files),
2 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

from . import __version__
from . import io
from .errors import NumericalError, ValidationError
from .experiments import (
    ODM_BANDWIDTH,
    ODM_THRESHOLD,
    connection_graph_for,
    orientability_test,
    run_experiment,
)
from .graph import assemble_operator
from .kernels import KernelSpec, kernel_moment
from .manifolds import get_model, model_names, sample
from .spectral import dm_embed, eigendecompose, rescale_eigenvalues, vdm_embed
from .tangent import cloud_diameter, default_h_pca, local_pca_frames


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_graph_flags(p):
    p.add_argument("--cloud", required=True, help="point cloud CSV")
    p.add_argument("--h", type=float, required=True, help="kernel bandwidth")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--d", type=int, help="intrinsic dimension (default: from the manifold tag)")
    p.add_argument("--connection", default="trivial",
                   choices=["trivial", "analytic", "estimated_pca", "z2_determinant"])
    p.add_argument("--h-pca-c", type=float, help="local PCA bandwidth constant")
    p.add_argument("--truncation", type=float, default=5.0)


def build_parser():
    parser = _Parser(prog="connlap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a point cloud from a catalogued manifold")
    p.add_argument("--manifold", required=True, choices=model_names())
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", default="uniform")
    p.add_argument("--out", default="connlap-out/sample")

    p = sub.add_parser("build-graph", help="affinity graph with a connection")
    _add_graph_flags(p)
    p.add_argument("--out", default="connlap-out/graph")

    p = sub.add_parser("local-pca", help="local PCA frames")
    p.add_argument("--cloud", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--h-pca", type=float, help="bandwidth (default c n^(-2/(d+2)))")
    p.add_argument("--h-pca-c", type=float, help="constant c of the default bandwidth")
    p.add_argument("--weighting", default="kernel", choices=["kernel", "uniform"])
    p.add_argument("--out", default="connlap-out/local-pca")

    p = sub.add_parser("spectrum", help="top eigenpairs of D^-1 S")
    _add_graph_flags(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--vectors", action="store_true", help="also write eigenvectors")
    p.add_argument("--seed", type=int, default=0, help="Lanczos start-vector seed")
    p.add_argument("--out", default="connlap-out/spectrum")

    p = sub.add_parser("vdm-embed", help="vector diffusion map (or diffusion map for q=1)")
    _add_graph_flags(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--dm", action="store_true", help="diffusion-map coordinates instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="connlap-out/vdm")

    p = sub.add_parser("orientability", help="orientability verdict from the Z2 connection")
    p.add_argument("--cloud", help="point cloud CSV (or use --manifold/--n/--seed)")
    p.add_argument("--manifold", choices=model_names())
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", default="analytic", choices=["analytic", "pca"])
    p.add_argument("--d", type=int)
    p.add_argument("--h", type=float, default=ODM_BANDWIDTH)
    p.add_argument("--threshold", type=float, default=ODM_THRESHOLD)
    p.add_argument("--out", default="connlap-out/orientability")

    p = sub.add_parser("converge", help="run a convergence experiment from a config file")
    p.add_argument("--config", required=True)
    for key in io.config_keys():
        p.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="VALUE",
                       help=f"override config key {key}")
    p.add_argument("--out", default="connlap-out/converge")

    p = sub.add_parser("moments", help="print a kernel moment mu^{(k)}_{r,l}")
    p.add_argument("--kernel", default="gaussian", choices=["gaussian"])
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--l", type=int, default=0)
    p.add_argument("--k", type=int, default=0)
    return parser


# ----------------------------------------------------------------------------


def _finish(args, argv, outputs, config, seeds, started):
    manifest = io.RunManifest(args.command, list(argv), config, seeds, __version__,
                              round(time.time() - started, 3), sorted(outputs))
    manifest.write(args.out)


def _graph_inputs(args):
    cloud = io.load_cloud(args.cloud)
    model = cloud.manifold
    d = args.d or (model.intrinsic_dim if model is not None else None)
    if d is None:
        raise ValidationError("--d is required when the cloud has no manifold tag")
    if args.connection == "analytic" and model is None:
        raise ValidationError("analytic connection needs a manifold-tagged cloud")
    if args.connection in ("estimated_pca", "z2_determinant") and model is None:
        # frames come from local PCA; a stand-in with the right dimension suffices
        model = _DimOnly(d)
    spec = KernelSpec(truncation=args.truncation, dim=d)
    graph, _ = connection_graph_for(cloud, model, spec, args.h, args.alpha, args.connection,
                                    args.h_pca_c)
    return cloud, graph, spec, d


class _DimOnly:
    def __init__(self, d):
        self.intrinsic_dim = d


def _graph_config(args):
    return {"cloud": os.path.abspath(args.cloud), "h": args.h, "alpha": args.alpha,
            "d": args.d, "connection": args.connection, "h_pca_c": args.h_pca_c,
            "truncation": args.truncation}


def cmd_sample(args):
    cloud = sample(get_model(args.manifold), args.n, args.density, args.seed)
    out = io.save_cloud(cloud, os.path.join(args.out, "cloud.csv"))
    cfg = {"manifold": args.manifold, "n": args.n, "seed": args.seed, "density": args.density}
    return out, cfg, [args.seed]


def cmd_build_graph(args):
    _, graph, _, _ = _graph_inputs(args)
    a = graph.affinity
    q = graph.q
    header = ["i", "j", "w"] + [f"g{r}{c}" for r in range(q) for c in range(q)]
    rows = [[str(i), str(j), w, *g.ravel().tolist()]
            for i, j, w, g in zip(a.I.tolist(), a.J.tolist(), a.w.tolist(), graph.G)]
    edges = os.path.join(args.out, "edges.csv")
    io.atomic_write(edges, io.format_table(header, rows))
    nodes = os.path.join(args.out, "nodes.csv")
    io.atomic_write(nodes, io.format_table(
        ["i", "self_weight", "degree"],
        [[str(i), s, d] for i, (s, d) in enumerate(zip(a.w_diag.tolist(), a.degrees.tolist()))]))
    for msg in a.warnings:
        sys.stderr.write(f"warning: {msg}\n")
    return [edges, nodes], _graph_config(args), []


def cmd_local_pca(args):
    cloud = io.load_cloud(args.cloud)
    if args.h_pca is not None:
        h_pca = args.h_pca
    else:
        c = args.h_pca_c if args.h_pca_c is not None else (cloud_diameter(cloud.points) / 2) ** 2
        h_pca = default_h_pca(cloud.n, args.d, c)
    res = local_pca_frames(cloud, h_pca, args.d, weighting=args.weighting)
    p, d = res.frames.shape[1:]
    frames = os.path.join(args.out, "frames.csv")
    header = ["i", "neighbors", "h_pca"] + [f"b{r}{c}" for r in range(p) for c in range(d)]
    rows = [[str(i), str(int(res.neighbor_counts[i])), res.h_pca[i], *res.frames[i].ravel().tolist()]
            for i in range(cloud.n)]
    io.atomic_write(frames, io.format_table(header, rows))
    eig = os.path.join(args.out, "eigenvalues.csv")
    io.atomic_write(eig, io.format_table([f"l{k}" for k in range(p)], res.eigenvalues.tolist()))
    cfg = {"cloud": os.path.abspath(args.cloud), "d": args.d, "h_pca": h_pca,
           "weighting": args.weighting}
    return [frames, eig], cfg, []


def _decompose(args):
    cloud, graph, spec, d = _graph_inputs(args)
    op = assemble_operator(graph, "sym_normalized")
    k = min(args.k, cloud.n * graph.q)
    decomp = eigendecompose(op, k, seed=args.seed)
    return cloud, graph, spec, d, decomp


def cmd_spectrum(args):
    _, _, spec, d, decomp = _decompose(args)
    rescaled = rescale_eigenvalues(decomp, args.h, spec, d)
    path = os.path.join(args.out, "eigenvalues.csv")
    rows = [[str(j), lam, r, res] for j, (lam, r, res) in
            enumerate(zip(decomp.eigenvalues, rescaled, decomp.residuals))]
    io.atomic_write(path, io.format_table(["index", "markov", "rescaled", "residual"], rows))
    out = [path]
    if args.vectors:
        vpath = os.path.join(args.out, "eigenvectors.csv")
        io.atomic_write(vpath, io.format_table([f"v{j}" for j in range(decomp.k)],
                                               decomp.markov_vectors.tolist()))
        out.append(vpath)
    cfg = dict(_graph_config(args), k=args.k, seed=args.seed)
    return out, cfg, [args.seed]


def cmd_vdm(args):
    _, _, _, _, decomp = _decompose(args)
    m = min(args.m, decomp.k)
    if args.dm:
        coords = dm_embed(decomp, args.t, m)
    else:
        coords = vdm_embed(decomp, args.t, m, args.normalized).coordinates
    path = os.path.join(args.out, "embedding.csv")
    io.atomic_write(path, io.format_table([f"c{j}" for j in range(coords.shape[1])],
                                          coords.tolist()))
    cfg = dict(_graph_config(args), k=args.k, t=args.t, m=args.m, normalized=args.normalized,
               dm=args.dm, seed=args.seed)
    return [path], cfg, [args.seed]


def cmd_orientability(args):
    if args.cloud:
        cloud = io.load_cloud(args.cloud)
        seeds = [] if cloud.seed is None else [cloud.seed]
    elif args.manifold:
        cloud = sample(get_model(args.manifold), args.n, "uniform", args.seed)
        seeds = [args.seed]
    else:
        raise ValidationError("give --cloud or --manifold")
    res = orientability_test(cloud, cloud.manifold, args.frames, args.h, 1.0, args.threshold,
                             d=args.d)
    path = os.path.join(args.out, "result.txt")
    io.atomic_write(path, f"verdict={res.verdict}\ndeficit={io.fmt(res.deficit)}\n"
                          f"top_dm={io.fmt(res.top_dm)}\ntop_odm={io.fmt(res.top_odm)}\n")
    print(f"{res.verdict} (deficit {res.deficit:.4f})")
    cfg = {"cloud": args.cloud and os.path.abspath(args.cloud), "manifold": args.manifold,
           "n": args.n, "seed": args.seed, "frames": args.frames, "d": args.d, "h": args.h,
           "threshold": args.threshold}
    return [path], cfg, seeds


def cmd_converge(args):
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
    config = io.load_config(args.config, overrides)
    report = run_experiment(config)
    out = io.save_report(report, args.out)
    cpath = os.path.join(args.out, "config.txt")
    io.atomic_write(cpath, io.config_text(config))
    out.append(cpath)
    return out, config.to_dict(), [config.seed]


def cmd_moments(args):
    spec = KernelSpec(family=args.kernel, dim=args.d)
    print(f"{kernel_moment(spec, args.d, args.r, args.l, args.k):.6f}")
    return None, None, None


COMMANDS = {
    "sample": cmd_sample,
    "build-graph": cmd_build_graph,
    "local-pca": cmd_local_pca,
    "spectrum": cmd_spectrum,
    "vdm-embed": cmd_vdm,
    "orientability": cmd_orientability,
    "converge": cmd_converge,
    "moments": cmd_moments,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.time()
    try:
        outputs, config, seeds = COMMANDS[args.command](args)
        if outputs is not None:
            _finish(args, argv, outputs, config, seeds, started)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
