"""Command-line entry point: ``omnisal <command> ...``.

Machine-readable results go to stdout as JSON; diagnostics go to stderr.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

Precomputed saliency maps are located with a filename template that may use
``{stem}`` (input image stem), ``{rot}`` (rotation index 0-4) and ``{face}``
(face index 0-5, order front, right, back, left, top, bottom), e.g.
``{stem}_r{rot}_f{face}.smf``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fusion
from .backends import BackendError, dog_backend, precomputed_backend
from .dataset import ManifestError, build_training_set, load_manifest, read_gt
from .imaging import NormalizationError, RasterFormatError, read_raster, write_raster
from .pipeline import (Pipeline, PipelineConfig, PipelineError, compute_equator_bias, evaluate_dataset,
                       fuse_tensors, save_bias)
from .projection import CubemapSet, Rotation, cmp_to_erp, erp_to_cmp, load_cmp, parse_rotations, save_cmp

log = logging.getLogger("omnisal")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _common(p: argparse.ArgumentParser, backend: bool = False) -> None:
    p.add_argument("--face-size", type=int, default=512, help="cube face edge length in pixels")
    p.add_argument("--rotations", default="default",
                   help="'default' or five yaw:pitch pairs, e.g. 0:0,20:20,-20:20,20:-20,-20:-20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="BLAS threads (default: all cores)")
    if backend:
        p.add_argument("--backend", choices=("dog", "precomputed"), default="dog")
        p.add_argument("--pattern", default="{stem}_r{rot}_f{face}.smf",
                       help="precomputed map filename template with {stem}, {rot}, {face}")
        p.add_argument("--maps-dir", default=".", help="directory holding precomputed maps")


def _backend(args):
    if args.backend == "precomputed":
        return precomputed_backend(args.maps_dir, args.pattern)
    return dog_backend()


def build_parser() -> Parser:
    parser = Parser(prog="omnisal", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    proj = sub.add_parser("project", help="convert between ERP and cubemap")
    psub = proj.add_subparsers(dest="direction", parser_class=Parser)
    e2c = psub.add_parser("erp2cmp", help="ERP image -> six faces + .rot sidecar")
    e2c.add_argument("--input", required=True)
    e2c.add_argument("--out-dir", required=True)
    e2c.add_argument("--stem", default=None)
    e2c.add_argument("--yaw", type=float, default=0.0)
    e2c.add_argument("--pitch", type=float, default=0.0)
    e2c.add_argument("--ext", choices=("png", "smf"), default="png")
    _common(e2c)
    c2e = psub.add_parser("cmp2erp", help="six faces + .rot sidecar -> ERP")
    c2e.add_argument("--cmp", required=True, help="<dir>/<stem> prefix of the face files")
    c2e.add_argument("--width", type=int, required=True)
    c2e.add_argument("--height", type=int, required=True)
    c2e.add_argument("--output", required=True)
    _common(c2e)

    pred = sub.add_parser("predict", help="ERP image -> ERP saliency map")
    pred.add_argument("--input", required=True)
    pred.add_argument("--output", required=True, help=".smf or .png")
    pred.add_argument("--fusion", choices=("cnn", "average", "max"), default="average")
    pred.add_argument("--weights", default=None)
    pred.add_argument("--bias", default=None, help="equator bias SMF1 file")
    pred.add_argument("--normalize", action="store_true", help="min-max normalise the output")
    _common(pred, backend=True)

    tr = sub.add_parser("train", help="train the fusion CNN from a dataset manifest")
    tr.add_argument("--config", default=None, help="JSON training config")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--out", required=True, help="weight file to write")
    tr.add_argument("--epochs", type=int, default=None, help="override config epochs")
    _common(tr, backend=True)

    fu = sub.add_parser("fuse", help="fuse five saliency cubemaps into central-rotation faces")
    fu.add_argument("--cmp", action="append", required=True,
                    help="<dir>/<stem> of a saliency cubemap; give five, rotation order")
    fu.add_argument("--fusion", choices=("cnn", "average", "max"), default="average")
    fu.add_argument("--weights", default=None)
    fu.add_argument("--out-dir", required=True)
    fu.add_argument("--stem", default="fused")
    fu.add_argument("--ext", choices=("png", "smf"), default="smf")
    _common(fu)

    ev = sub.add_parser("evaluate", help="KLD and CC of predictions against ground truth")
    ev.add_argument("--pred", action="append", required=True)
    ev.add_argument("--gt", action="append", required=True)
    ev.add_argument("--lat-weighted", action="store_true", help="weight pixels by cos(latitude)")
    _common(ev)

    bias = sub.add_parser("bias", help="equator bias tools")
    bsub = bias.add_subparsers(dest="action", parser_class=Parser)
    bc = bsub.add_parser("compute", help="average ground-truth maps into an equator bias")
    bc.add_argument("--gt", nargs="*", default=[])
    bc.add_argument("--manifest", default=None, help="use the train split of this manifest")
    bc.add_argument("--out", required=True, help="SMF1 output; a .json sidecar is written next to it")
    _common(bc)
    return parser


def _split_prefix(prefix: str) -> tuple[Path, str]:
    p = Path(prefix)
    return p.parent, p.name


def cmd_project(args) -> int:
    if args.direction == "erp2cmp":
        erp = read_raster(args.input)
        cmp = erp_to_cmp(erp, Rotation.of(args.yaw, args.pitch), args.face_size)
        stem = args.stem or Path(args.input).stem
        paths = save_cmp(cmp, args.out_dir, stem, args.ext)
        _emit({"faces": [str(p) for p in paths], "rotation": list(cmp.rotation)})
        return EXIT_OK
    if args.direction == "cmp2erp":
        directory, stem = _split_prefix(args.cmp)
        erp = cmp_to_erp(load_cmp(directory, stem), args.width, args.height)
        write_raster(args.output, erp)
        _emit({"output": args.output, "width": args.width, "height": args.height})
        return EXIT_OK
    raise UsageError("project needs a direction: erp2cmp or cmp2erp")


def cmd_predict(args) -> int:
    cfg = PipelineConfig(backend=_backend(args), rotations=tuple(parse_rotations(args.rotations)),
                         face_size=args.face_size, fusion=args.fusion, weights=args.weights,
                         bias=args.bias, normalize_output=args.normalize)
    erp = read_raster(args.input)
    out = Pipeline(cfg).predict(erp, stem=Path(args.input).stem)
    write_raster(args.output, out)
    _emit({"output": args.output, "width": out.shape[1], "height": out.shape[0],
           "min": float(out.min()), "max": float(out.max()), "fusion": args.fusion})
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = fusion.TrainConfig.from_json(args.config) if args.config else fusion.TrainConfig()
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.config is None:
        overrides.update(seed=args.seed, face_size=args.face_size)
    cfg = fusion.TrainConfig(**{**cfg.__dict__, **overrides})
    manifest = load_manifest(args.manifest)
    samples = build_training_set(manifest, _backend(args), parse_rotations(args.rotations), cfg.face_size)
    log.info("training on %d samples for %d epochs", len(samples), cfg.epochs)
    result = fusion.train_fusion(samples, cfg)
    fusion.save(result.network, args.out)
    _emit({"weights": args.out, "samples": len(samples), "epochs": cfg.epochs,
           "epoch_losses": result.epoch_losses, "config": cfg.to_dict()})
    return EXIT_OK


def cmd_fuse(args) -> int:
    if len(args.cmp) != 5:
        raise UsageError(f"fuse needs exactly five --cmp inputs, got {len(args.cmp)}")
    if args.fusion == "cnn" and not args.weights:
        raise UsageError("--fusion cnn requires --weights")
    cmps = [load_cmp(*_split_prefix(p)) for p in args.cmp]
    cmps = [CubemapSet(c.faces.mean(axis=3), c.rotation) if c.faces.ndim == 4 else c for c in cmps]
    net = fusion.load(args.weights) if args.fusion == "cnn" else None
    faces = fuse_tensors(fusion.stack_all_faces(cmps), args.fusion, net)
    paths = save_cmp(CubemapSet(faces, Rotation(0.0, 0.0)), args.out_dir, args.stem, args.ext)
    _emit({"faces": [str(p) for p in paths], "fusion": args.fusion})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError("give one --gt per --pred")
    preds = [read_gt(p) for p in args.pred]
    gts = [read_gt(p) for p in args.gt]
    mean, per = evaluate_dataset(preds, gts, lat_weighted=args.lat_weighted)
    _emit({**mean.to_dict(), "lat_weighted": args.lat_weighted,
           "images": [{"pred": p, "gt": g, **r.to_dict()} for p, g, r in zip(args.pred, args.gt, per)]})
    return EXIT_OK


def cmd_bias(args) -> int:
    if args.action != "compute":
        raise UsageError("bias needs an action: compute")
    paths = [Path(p) for p in args.gt]
    if args.manifest:
        paths += [e.gt for e in load_manifest(args.manifest).split("train")]
    if not paths:
        raise UsageError("bias compute needs --gt files or a --manifest")
    eb = compute_equator_bias([read_gt(p) for p in paths])
    save_bias(eb, args.out)
    _emit({"output": args.out, "source_count": eb.source_count})
    return EXIT_OK


NUMERIC_ERRORS = (fusion.DivergenceError, FloatingPointError, NormalizationError)

COMMANDS = {"project": cmd_project, "predict": cmd_predict, "train": cmd_train, "fuse": cmd_fuse,
            "evaluate": cmd_evaluate, "bias": cmd_bias}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=getattr(args, "threads", None)):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"omnisal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"omnisal: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PipelineError as exc:
        numeric = isinstance(exc.cause, NUMERIC_ERRORS)
        print(f"omnisal: {'numeric failure' if numeric else 'data error'}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_DATA
    except (OSError, ValueError, KeyError, RasterFormatError, BackendError, ManifestError,
            fusion.WeightFormatError) as exc:
        print(f"omnisal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
