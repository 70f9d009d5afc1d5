"""Command-line front end: ``fidtrust <subcommand> [options]``.

Subcommands: embed, fid, knn, augment, experiment, report. Every subcommand
takes --seed, --threads, --out and --format; FIDTRUST_THREADS is the fallback
for --threads. A run without --seed draws one and prints it to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from fidtrust import __version__
from fidtrust.augment import AugmentSpec, augment_set
from fidtrust.charts import table_charts
from fidtrust.embedder import (
    ToyEmbedderConfig,
    build_toy_embedder,
    embed_deterministic,
    embed_stochastic,
    load_embeddings,
    save_embeddings,
)
from fidtrust.experiments import (
    COLUMNS,
    EXPERIMENTS,
    ExperimentConfig,
    ResultTable,
    format_value,
    manifest_json,
    run_experiment,
    table_from_embeddings,
    write_text_atomic,
)
from fidtrust.linalg import frechet_gaussian, mean_and_cov
from fidtrust.metrics import fid_samples, knn_ood_score, pvar, vfid_decomposition
from fidtrust.pnm import read_image_dir, write_image
from fidtrust.rng import derive_seed, fresh_seed
from fidtrust.synthetic import SyntheticSpec, make_images

log = logging.getLogger("fidtrust")

DEFAULT_CHARTS = "fid,sigma_fid,pvar"


class CliError(Exception):
    pass


def _int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _size(text: str) -> tuple:
    parts = tuple(int(v) for v in text.lower().split("x"))
    if len(parts) == 2:
        parts = parts + (3,)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"image size must be HxW or HxWxC, got {text!r}")
    return parts


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None,
                   help="master seed; drawn at random and printed when omitted")
    g.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $FIDTRUST_THREADS or 1)")
    g.add_argument("--out", default=None, help="output file or directory")
    g.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="format of printed/written results (default: csv)")
    return p


def _embedder_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("embedder")
    g.add_argument("--image-size", type=_size, default=(32, 32, 3),
                   help="embedder input size HxWxC (default: 32x32x3)")
    g.add_argument("--embed-dim", type=int, default=64, help="embedding width K (default: 64)")
    g.add_argument("--hidden-dims", type=_int_list, default=(256, 128),
                   help="comma-separated hidden widths (default: 256,128)")
    g.add_argument("--dropout", type=float, default=0.2, help="dropout rate p (default: 0.2)")
    g.add_argument("--weight-seed", type=int, default=0, help="seed of the fixed network weights (default: 0)")
    g.add_argument("--no-standardize", action="store_true",
                   help="skip per-image standardisation before pooling")


def _embedder_config(args) -> ToyEmbedderConfig:
    return ToyEmbedderConfig(
        input_size=args.image_size,
        embed_dim=args.embed_dim,
        hidden_dims=args.hidden_dims,
        dropout_rate=args.dropout,
        weight_seed=args.weight_seed,
        standardize=not args.no_standardize,
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="fidtrust",
        description="Stochastic-embedding FID metrics, OOD scores and experiment runners.",
    )
    parser.add_argument("--version", action="version", version=f"fidtrust {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("embed", parents=[common], help="embed images to an .npy file",
                       description="Embed a directory of images or a synthetic set. "
                                   "Writes (I, K) without --mcd, (I, J, K) with --mcd J.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--images", help="directory of .pgm/.ppm/.npy images")
    src.add_argument("--synthetic", help="synthetic set kind:n[:shift=..,contrast=..], e.g. blobs:16")
    p.add_argument("--mcd", type=int, default=0, metavar="J",
                   help="number of MC-dropout passes (0: dropout off)")
    p.add_argument("--dtype", choices=("f4", "f8"), default="f8", help="stored float width (default: f8)")
    _embedder_args(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("fid", parents=[common], help="FID / sigma-FID / pVar from embedding files",
                       description="FID of a rank-2 test file, or the per-pass FID distribution, "
                                   "vFID, sigma-FID and pVar of a rank-3 test file, against a rank-2 reference.")
    p.add_argument("--test", required=True, help="test embeddings (I,K) or (I,J,K) .npy")
    p.add_argument("--reference", required=True, help="reference embeddings (I,K) .npy")
    p.add_argument("--decomposition-csv", default=None,
                   help="write per-pass a, b, c, FID and the vFID decomposition here (rank-3 test only)")
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("knn", parents=[common], help="mean kNN distance OOD score",
                       description="Mean distance from each L2-normalised test row to its k nearest "
                                   "L2-normalised reference rows, averaged over test rows.")
    p.add_argument("--test", required=True, help="test embeddings (I,K) .npy")
    p.add_argument("--reference", required=True, help="reference embeddings (I,K) .npy")
    p.add_argument("-k", type=int, default=5, help="number of neighbours (default: 5)")
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("augment", parents=[common], help="noise or overlay augmentation of an image directory",
                       description="Augment every image of a directory; output goes to the --out directory "
                                   "under the same file stems.")
    p.add_argument("--images", required=True, help="input image directory")
    p.add_argument("--kind", choices=("noise", "overlay"), default="noise", help="augmentation (default: noise)")
    p.add_argument("--strength", type=float, default=1.0,
                   help="noise std as %% of each image's max pixel (default: 1)")
    p.add_argument("--patches", default=None, help="directory of overlay source images")
    p.add_argument("--n-patches", type=int, default=4, help="overlay patches per image (default: 4)")
    p.add_argument("--patch-scale", type=float, default=0.25,
                   help="patch long side as a fraction of the base min side (default: 0.25)")
    p.add_argument("--clip", action="store_true", help="clip noisy pixels to the value range")
    p.add_argument("--image-format", choices=("npy", "pnm"), default="npy",
                   help="output format: float .npy (default) or 8-bit PGM/PPM (clipped)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("experiment", parents=[common], help="run one experiment protocol",
                       description="Run an experiment and write results.csv, manifest.json and SVG "
                                   "charts into the --out directory.")
    p.add_argument("name", choices=EXPERIMENTS, help="experiment protocol")
    p.add_argument("--strengths", type=_float_list, default=None,
                   help="comma-separated strictly increasing noise strengths in %%")
    p.add_argument("--J", dest="n_passes", type=int, default=20, help="MC-dropout passes (default: 20)")
    p.add_argument("-k", type=int, default=5, help="kNN neighbours (default: 5)")
    p.add_argument("--n-per-half", type=int, default=256, help="synthetic images per half (default: 256)")
    p.add_argument("--kind", default="mixed", help="synthetic image kind: blobs, textures, mixed (default: mixed)")
    p.add_argument("--data-dir", default=None, help="use images from this directory instead of synthetic data")
    p.add_argument("--reference-dropout", choices=("on", "off"), default=None,
                   help="embed the reference with one dropout pass (on) or without dropout (off)")
    p.add_argument("--test-sets", default=None,
                   help="ood-table test sets, comma-separated: self, holdout, noise:S, overlay:KIND, "
                        "shift:A, contrast:C, dir:PATH")
    p.add_argument("--reference-embeddings", default=None,
                   help="ood-table from files: reference (I,K) .npy (skips the toy embedder)")
    p.add_argument("--test-embeddings", action="append", default=[], metavar="LABEL=PATH",
                   help="ood-table from files: labelled (I,J,K) test .npy, repeatable")
    p.add_argument("--top5", default=None, help="CSV sidecar with columns label,top5 to join in")
    p.add_argument("--keep-latents", action="store_true", help="also save per-condition embedding tensors")
    p.add_argument("--charts", default=DEFAULT_CHARTS,
                   help=f"comma-separated columns to chart as SVG ('' for none; default: {DEFAULT_CHARTS})")
    p.add_argument("--no-validators", action="store_true", help="skip MAE / MS-SSIM columns")
    p.add_argument("--n-patches", type=int, default=4, help="overlay patches per image (default: 4)")
    p.add_argument("--patch-scale", type=float, default=0.25, help="overlay patch scale (default: 0.25)")
    _embedder_args(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", parents=[common], help="charts from an existing results CSV",
                       description="Render SVG line charts of the requested columns of a results.csv.")
    p.add_argument("--results", required=True, help="results.csv written by 'experiment'")
    p.add_argument("--charts", default=DEFAULT_CHARTS, help=f"columns to chart (default: {DEFAULT_CHARTS})")
    p.set_defaults(func=cmd_report)
    return parser


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = fresh_seed()
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _resolve_threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        n = int(os.environ.get("FIDTRUST_THREADS", "1") or 1)
    if n < 1:
        raise CliError("--threads must be >= 1")
    return n


def _emit(args, payload: dict) -> None:
    """Print a flat result dict as key,value CSV lines or JSON."""
    if args.format == "json":
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        text = "".join(f"{k},{format_value(v)}\n" for k, v in payload.items())
    sys.stdout.write(text)
    if args.out:
        write_text_atomic(args.out, text)


def cmd_embed(args) -> int:
    seed = _resolve_seed(args)
    if not args.out:
        raise CliError("embed needs --out FILE.npy")
    cfg = _embedder_config(args)
    if args.images:
        images, _ = read_image_dir(args.images)
    else:
        spec = SyntheticSpec.parse(args.synthetic)
        images = make_images(spec, derive_seed(seed, "data"), cfg.input_size)
    e = build_toy_embedder(cfg)
    if args.mcd:
        if args.mcd < 2:
            raise CliError("--mcd needs J >= 2")
        out = embed_stochastic(e, images, args.mcd, derive_seed(seed, "test-mcd"))
    else:
        out = embed_deterministic(e, images)
    save_embeddings(args.out, out, dtype="<" + args.dtype)
    print(f"wrote {args.out} shape {out.shape}", file=sys.stderr)
    return 0


def cmd_fid(args) -> int:
    test = load_embeddings(args.test)
    ref = load_embeddings(args.reference)
    if ref.ndim != 2:
        raise CliError("reference embeddings must be rank 2 (I, K)")
    if test.shape[-1] != ref.shape[-1]:
        raise CliError(f"dimension mismatch: test K={test.shape[-1]}, reference K={ref.shape[-1]}")
    ref_summary = mean_and_cov(ref)
    if test.ndim == 2:
        if args.decomposition_csv:
            raise CliError("--decomposition-csv needs a rank-3 (I, J, K) test file")
        _emit(args, {"fid": frechet_gaussian(mean_and_cov(test), ref_summary)})
        return 0
    dist = fid_samples(test, ref_summary, threads=_resolve_threads(args))
    dec = vfid_decomposition(dist)
    _emit(args, {
        "fid": dist.mean_fid,
        "sigma_fid": dist.sigma_fid,
        "v_fid": dist.v_fid,
        "pvar": pvar(test),
        "n_clamped": dist.n_clamped,
    })
    if args.decomposition_csv:
        lines = ["j,fid,a,b,c"]
        for j in range(dist.n_passes):
            lines.append(",".join([str(j)] + [format_value(v[j]) for v in
                         (dist.fid_samples, dist.terms_a, dist.terms_b, dist.terms_c)]))
        lines.append("")
        lines.append("term,value")
        for k, v in dec.as_dict().items():
            lines.append(f"{k},{format_value(v)}")
        lines.append(f"reconstructed_vfid,{format_value(dec.reconstructed_vfid)}")
        lines.append(f"residual,{format_value(dec.residual)}")
        write_text_atomic(args.decomposition_csv, "\n".join(lines) + "\n")
    return 0


def cmd_knn(args) -> int:
    test = load_embeddings(args.test)
    ref = load_embeddings(args.reference)
    if test.ndim != 2 or ref.ndim != 2:
        raise CliError("knn needs rank-2 (I, K) embedding files")
    _emit(args, {"knn": knn_ood_score(test, ref, args.k)})
    return 0


def cmd_augment(args) -> int:
    seed = _resolve_seed(args)
    if not args.out:
        raise CliError("augment needs --out DIRECTORY")
    images, paths = read_image_dir(args.images)
    patches = None
    if args.kind == "overlay":
        if not args.patches:
            raise CliError("overlay augmentation needs --patches DIRECTORY")
        patches, _ = read_image_dir(args.patches)
    spec = AugmentSpec(args.kind, args.strength if args.kind == "noise" else 0.0,
                       args.n_patches, args.patch_scale, seed, args.clip)
    out = augment_set(images, spec, patch_source=patches, threads=_resolve_threads(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path, img in zip(paths, out):
        if args.image_format == "npy":
            target = out_dir / (path.stem + ".npy")
        else:
            target = out_dir / (path.stem + (".ppm" if img.shape[2] == 3 else ".pgm"))
        write_image(target, img)
    print(f"wrote {len(out)} images to {out_dir}", file=sys.stderr)
    return 0


def _chart_list(text: str) -> list:
    names = [c.strip() for c in text.split(",") if c.strip()]
    unknown = [c for c in names if c not in COLUMNS or c == "label"]
    if unknown:
        raise CliError(f"cannot chart {unknown}; chartable columns: {', '.join(COLUMNS[1:])}")
    return names


def _write_charts(table: ResultTable, metrics, out_dir: Path) -> None:
    charts = table_charts(table, metrics)
    if charts:
        (out_dir / "charts").mkdir(parents=True, exist_ok=True)
    for name, svg in charts.items():
        write_text_atomic(out_dir / "charts" / name, svg)


def cmd_experiment(args) -> int:
    seed = _resolve_seed(args)
    if not args.out:
        raise CliError("experiment needs --out DIRECTORY")
    out_dir = Path(args.out)
    charts = _chart_list(args.charts)
    if args.reference_embeddings or args.test_embeddings:
        if args.name != "ood-table":
            raise CliError("--reference-embeddings/--test-embeddings only apply to ood-table")
        if not (args.reference_embeddings and args.test_embeddings):
            raise CliError("give both --reference-embeddings and at least one --test-embeddings")
        tests = {}
        for item in args.test_embeddings:
            label, sep, path = item.partition("=")
            if not sep:
                raise CliError(f"--test-embeddings expects LABEL=PATH, got {item!r}")
            tests[label] = load_embeddings(path)
        table = table_from_embeddings(load_embeddings(args.reference_embeddings), tests, args.k,
                                      top5_csv=args.top5)
        manifest = {
            "package": "fidtrust", "version": __version__, "experiment": "ood-table",
            "seed": seed, "reference_embeddings": args.reference_embeddings,
            "test_embeddings": args.test_embeddings, "k": args.k,
        }
    else:
        kwargs = {}
        if args.test_sets is not None:
            kwargs["test_sets"] = tuple(s for s in args.test_sets.split(",") if s)
        cfg = ExperimentConfig(
            experiment=args.name,
            master_seed=seed,
            n_per_half=args.n_per_half,
            image_size=args.image_size,
            synthetic_kind=args.kind,
            data_dir=args.data_dir,
            strengths=args.strengths,
            n_passes=args.n_passes,
            k=args.k,
            embedder=_embedder_config(args),
            reference_dropout=args.reference_dropout,
            n_patches=args.n_patches,
            patch_scale=args.patch_scale,
            validators=not args.no_validators,
            top5_csv=args.top5,
            threads=_resolve_threads(args),
            **kwargs,
        )
        latents = out_dir / "latents" if args.keep_latents else None
        table, manifest = run_experiment(cfg, latents)
    # validate chart columns before anything is written
    table_charts(table, charts)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out_dir / "results.csv", table.to_csv())
    if args.format == "json":
        write_text_atomic(out_dir / "results.json",
                          json.dumps(table.rows, indent=2, sort_keys=True) + "\n")
    write_text_atomic(out_dir / "manifest.json", manifest_json(manifest))
    _write_charts(table, charts, out_dir)
    print(f"wrote {len(table)} rows to {out_dir / 'results.csv'}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    if not args.out:
        raise CliError("report needs --out DIRECTORY")
    text = Path(args.results).read_text(encoding="utf-8")
    table = ResultTable.from_csv(text, experiment=Path(args.results).parent.name)
    charts = _chart_list(args.charts)
    out_dir = Path(args.out)
    table_charts(table, charts)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_charts(table, charts, out_dir)
    print(f"wrote {len(charts)} charts to {out_dir / 'charts'}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"fidtrust {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
