"""Command-line entry point: ``oscmar {generate,learn,remove,eval,export-filters}``.

Exit codes: 0 success, 2 invalid arguments, 3 missing data.
"""
import argparse
import csv
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import ct
from .dataset import (
    Record, load_sample, read_manifest, sample_id, write_manifest, write_run_config, write_sample,
)
from .estimators import ArtifactRemover, DictionaryLearner
from .metrics import format_metric, psnr_masked, ssim_masked
from .model import FreeDictionary, load_dictionary, save_dictionary
from .tensor import load_osct, save_osct

log = logging.getLogger("oscmar")

EXIT_OK, EXIT_INVALID, EXIT_MISSING = 0, 2, 3


class MissingDataError(Exception):
    """Input files or samples that a command needs are absent."""


def _png(path, image):
    from PIL import Image

    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(image.min()), float(image.max())
    scaled = np.zeros_like(image) if hi <= lo else (image - lo) / (hi - lo)
    Image.fromarray(np.round(scaled * 255).astype(np.uint8), mode="L").save(path)


def _map(args, func, items):
    """Apply ``func`` over ``items`` with ``--threads`` workers, preserving order."""
    if args.threads <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        return list(pool.map(func, items))


def _require(path):
    path = Path(path)
    if not path.exists():
        raise MissingDataError(f"missing input: {path}")
    return path


# ---------------------------------------------------------------- generate

def cmd_generate(args):
    geom = ct.Geometry(n_views=args.views, n_det=args.detectors or _default_detectors(args.size),
                       image_size=args.size)
    if not 0 <= args.severity:
        raise ValueError("severity must be non-negative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(index):
        seed = args.seed + index
        Y, X, I, metal, LI = ct.make_pair(seed, geom, args.severity, with_li=True)
        sid = sample_id(index)
        folder = write_sample(out, sid, y=Y, x=X, i=I, metal=metal, li=LI)
        if args.png:
            for name, image in (("y", Y), ("x", X), ("li", LI)):
                _png(folder / f"{name}.png", image)
        return Record(sid, seed, args.severity, int(metal.sum()))

    records = _map(args, one, range(args.n))
    write_manifest(out, records)
    log.info("wrote %d samples to %s", len(records), out)


def _default_detectors(size):
    return int(np.ceil(np.sqrt(2) * size)) + 4


# ---------------------------------------------------------------- learn

def _load_pairs(root):
    records = read_manifest(_require(root))
    if not records:
        raise MissingDataError(f"{root} contains no samples")
    Y, X, I = [], [], []
    for r in records:
        try:
            y, x, i = load_sample(root, r.id)
        except FileNotFoundError as exc:
            raise MissingDataError(str(exc)) from exc
        Y.append(y), X.append(x), I.append(i)
    return np.stack(Y), np.stack(X), np.stack(I)


def cmd_learn(args):
    Y, X, I = _load_pairs(args.data)
    learner = DictionaryLearner(
        p=args.p, L=args.L, K=args.K, h=args.h, variant=args.variant, shared=not args.free,
        epochs=args.epochs, lr=args.lr, alpha=args.alpha, inner_iters=args.inner_iters,
        lambda1=args.lambda1, patch_size=args.patch_size or None,
        patches_per_sample=args.patches, optimizer=args.optimizer, seed=args.seed)
    learner.fit(Y, X, I)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dictionary(out, learner.dictionary_)
    with open(out.parent / "loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(learner.loss_curve_):
            writer.writerow([epoch, repr(float(loss))])
    log.info("loss %.6g -> %.6g", learner.loss_curve_[0], learner.loss_curve_[-1])


# ---------------------------------------------------------------- remove

def _remover(args):
    dictionary = load_dictionary(_require(args.dict))
    return ArtifactRemover(dictionary, alpha=args.alpha, beta=args.beta, iterations=args.iters,
                           prior="init" if args.prior == "init" else "smooth",
                           prior_sigma=args.prior_sigma).fit()


def _write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "objective"])
        for n, value in enumerate(history):
            writer.writerow([n, format_metric(value)])


def _prior_image(spec, folder):
    """Prior image for one sample: a file path, ``li`` (``<folder>/li.osct``) or ``None``."""
    if spec in ("smooth", "init"):
        return None
    path = Path(folder) / "li.osct" if spec == "li" else Path(spec)
    return load_osct(_require(path))


def cmd_remove(args):
    if args.data:
        return _remove_batch(args)
    if not (args.input and args.mask and args.out_x):
        raise ValueError("remove needs --input, --mask and --out-x (or --data and --out)")
    remover = _remover(args)
    Y = load_osct(_require(args.input))
    I = load_osct(_require(args.mask))
    if args.prior == "li":
        raise ValueError("--prior li is only available with --data; pass the file path instead")
    result = remover.solve_one(Y, I, _prior_image(args.prior, "."))
    for target in (args.out_x, args.out_a, args.history):
        if target:
            Path(target).parent.mkdir(parents=True, exist_ok=True)
    save_osct(args.out_x, result.X)
    if args.out_a:
        save_osct(args.out_a, result.A)
    if args.history:
        _write_history(args.history, result.history)


def _remove_batch(args):
    if not args.out:
        raise ValueError("batch remove needs --out")
    records = read_manifest(_require(args.data))
    remover = _remover(args)
    out = Path(args.out)

    def one(record):
        folder = Path(args.data) / record.id
        try:
            Y, I = load_sample(args.data, record.id, ("y", "i"))
        except FileNotFoundError as exc:
            raise MissingDataError(str(exc)) from exc
        result = remover.solve_one(Y, I, _prior_image(args.prior, folder))
        target = write_sample(out, record.id, x=result.X, a=result.A)
        _write_history(target / "history.csv", result.history)

    _map(args, one, records)


# ---------------------------------------------------------------- eval

REPORT_FIELDS = ("id", "psnr_input", "psnr_output", "ssim_input", "ssim_output")


def evaluate(data_dir, results_dir, threads=1):
    """Report rows (dicts) per manifest sample plus ``mean``/``median`` rows, and missing ids."""
    records = read_manifest(_require(data_dir))

    def one(record):
        try:
            Y, X, I = load_sample(data_dir, record.id)
            (out,) = load_sample(results_dir, record.id, ("x",))
        except FileNotFoundError:
            return None
        return {"id": record.id,
                "psnr_input": psnr_masked(Y, X, I), "psnr_output": psnr_masked(out, X, I),
                "ssim_input": ssim_masked(Y, X, I), "ssim_output": ssim_masked(out, X, I)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, records))
    else:
        values = [one(r) for r in records]
    rows, missing = [], []
    for record, row in sorted(zip(records, values), key=lambda pair: pair[0].id):
        if row is None:
            missing.append(record.id)
            rows.append({key: "missing" for key in REPORT_FIELDS} | {"id": record.id})
        else:
            rows.append(row)
    present = [r for r in rows if r["psnr_input"] != "missing"]
    for name, reduce in (("mean", np.mean), ("median", np.median)):
        agg = {"id": name}
        for key in REPORT_FIELDS[1:]:
            agg[key] = float(reduce([r[key] for r in present])) if present else "missing"
        rows.append(agg)
    return rows, missing


def cmd_eval(args):
    rows, missing = evaluate(args.data, _require(args.results), args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for row in rows:
            writer.writerow([row["id"]] + [v if isinstance(v, str) else format_metric(v)
                                           for v in (row[k] for k in REPORT_FIELDS[1:])])
    if missing:
        raise MissingDataError(f"{len(missing)} sample(s) missing results: {', '.join(missing)}")


# ---------------------------------------------------------------- export-filters

def cmd_export_filters(args):
    d = load_dictionary(_require(args.dict))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    K = d.n_channels // d.L
    for l in range(d.L):
        for k in range(K):
            f = d.filters[l * K + k]
            save_osct(out / f"filter_k{k}_l{l}.osct", f)
            _png(out / f"filter_k{k}_l{l}.png", f)


# ---------------------------------------------------------------- parser

def _add_global(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--threads", type=int, default=default if suppress else 1,
                        help="worker threads for per-sample parallelism and native libraries")
    parser.add_argument("--seed", type=int, default=default if suppress else 0,
                        help="base random seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="oscmar", description="CT metal artifact reduction with rotation-shared dictionaries.")
    _add_global(parser, False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate paired corrupted/clean CT samples")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--size", type=int, default=128)
    g.add_argument("--views", type=int, default=180)
    g.add_argument("--detectors", type=int, default=None,
                   help="detector count (default: covers the image diagonal)")
    g.add_argument("--severity", type=float, default=0.5)
    g.add_argument("--out", required=True)
    g.add_argument("--png", action="store_true", help="also write normalized PNG previews")
    g.set_defaults(func=cmd_generate, out_dir=lambda a: a.out)

    l = sub.add_parser("learn", help="learn a convolutional dictionary from a generated dataset")
    l.add_argument("--data", required=True)
    l.add_argument("--L", type=int, default=8)
    l.add_argument("--K", type=int, default=4)
    l.add_argument("--p", type=int, default=9)
    l.add_argument("--h", type=float, default=0.25)
    l.add_argument("--variant", choices=["alias_free", "plain"], default="alias_free")
    l.add_argument("--free", action="store_true", help="free-filter baseline instead of shared")
    l.add_argument("--epochs", type=int, default=10)
    l.add_argument("--lr", type=float, default=1e-2)
    l.add_argument("--optimizer", choices=["adam", "sgd", "linesearch"], default="adam",
                   help="coefficient update rule (linesearch: --lr scales the exact step)")
    l.add_argument("--alpha", type=float, default=0.01)
    l.add_argument("--inner-iters", type=int, default=30)
    l.add_argument("--lambda1", type=float, default=0.0)
    l.add_argument("--patch-size", type=int, default=64, help="0 trains on whole images")
    l.add_argument("--patches", type=int, default=2, help="patches per sample")
    l.add_argument("--out", required=True, help="dict.meta path")
    l.set_defaults(func=cmd_learn, out_dir=lambda a: Path(a.out).parent)

    r = sub.add_parser("remove", help="separate artifacts from corrupted images")
    r.add_argument("--input")
    r.add_argument("--mask")
    r.add_argument("--dict", required=True)
    r.add_argument("--alpha", type=float, default=0.01)
    r.add_argument("--beta", type=float, default=0.3)
    r.add_argument("--iters", type=int, default=50)
    r.add_argument("--prior", default=None,
                   help="reference image: an OSCT path, 'li' (per-sample li.osct, batch mode), "
                        "'smooth' or 'init' (default: 'li' with --data, else 'smooth')")
    r.add_argument("--prior-sigma", type=float, default=1.0)
    r.add_argument("--out-x")
    r.add_argument("--out-a")
    r.add_argument("--history")
    r.add_argument("--data", help="batch mode: dataset directory")
    r.add_argument("--out", help="batch mode: results directory")
    r.set_defaults(func=cmd_remove,
                   out_dir=lambda a: Path(a.out) if a.data else Path(a.out_x or ".").parent)

    e = sub.add_parser("eval", help="masked PSNR/SSIM report of results against a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--results", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval, out_dir=lambda a: a.out)

    x = sub.add_parser("export-filters", help="write every rotated filter as OSCT and PNG")
    x.add_argument("--dict", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_filters, out_dir=lambda a: a.out)

    for p in (g, l, r, e, x):
        _add_global(p, True)
    return parser


def _run_params(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "verbose")}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "remove" and args.prior is None:
        args.prior = "li" if args.data else "smooth"
    if args.threads < 1:
        print("oscmar: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
        write_run_config(args.out_dir(args), _run_params(args))
    except MissingDataError as exc:
        print(f"oscmar: {exc}", file=sys.stderr)
        if args.command == "eval":
            write_run_config(args.out_dir(args), _run_params(args))
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"oscmar: missing data: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ValueError as exc:
        print(f"oscmar: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
