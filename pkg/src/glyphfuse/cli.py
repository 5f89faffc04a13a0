"""Command line entry point: ``python -m glyphfuse <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .errors import ArgumentError, GlyphFuseError, UnknownIdError


def _config(args):
    if args.config:
        return TrainConfig.load(args.config)
    return TrainConfig.toy() if args.toy else TrainConfig()


def _emit(obj):
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_corpus_build(args):
    from .glyphdata import write_corpus
    from .harness import corpus_for

    cfg = _config(args)
    overrides = {"num_styles": args.styles, "num_contents": args.contents, "corpus_seed": args.seed}
    cfg = cfg.with_(**{k: v for k, v in overrides.items() if v is not None})
    manifest = write_corpus(corpus_for(cfg), args.out)
    _emit({"manifest": str(manifest)})


def _codec_from(directory, cfg):
    from .codec import CodecModel
    from .numerics import load_module

    codec = CodecModel(cfg.image_size, cfg.enc_channels, cfg.embed_dim, cfg.codebook_size,
                       seed=cfg.seed)
    return load_module(Path(directory) / "codec", codec).freeze()


def cmd_codec_pretrain(args):
    from .harness import corpus_for, pretrain_codec
    from .numerics import save_module

    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    codec = pretrain_codec(cfg, corpus_for(cfg), out)
    save_module(out / "codec", codec)
    cfg.save(out / "config.json")
    _emit({"checkpoint": str(out / "codec.json"), "losses": str(out / "codec_losses.csv")})


def cmd_train(args):
    from .harness import run_train

    cfg = _config(args)
    if args.iters is not None:
        cfg = cfg.with_(main_iters=args.iters)
    codec = _codec_from(args.codec, cfg) if args.codec else None
    state = run_train(cfg, args.out, codec=codec)
    last = state.history[-1] if state.history else None
    _emit({"checkpoint": str(Path(args.out) / "checkpoints" / "final"),
           "iterations": state.iteration, "last_L_img": None if last is None else last[3]})


def cmd_generate(args):
    from .generator import generate
    from .glyphdata import load_png, save_png
    from .harness import load_checkpoint
    from .numerics import no_grad

    state = load_checkpoint(args.model)
    ref_files = sorted(Path(args.refs).glob("*.png"))
    if not ref_files:
        raise ArgumentError(f"no PNG references in {args.refs}")
    refs = np.stack([load_png(p) for p in ref_files])
    ids = [int(v) for v in str(args.content).split(",")]
    dtype = state.codec.codebook.dtype
    out = Path(args.out)
    written = []
    with no_grad():
        for cid in ids:
            if not 0 <= cid < state.corpus.num_contents:
                raise UnknownIdError(f"content id {cid} not in corpus")
            content = state.corpus.render(cid)[None, None].astype(dtype)
            image = generate(state.generator, content, refs[None].astype(dtype)).data[0, 0]
            path = out / f"{cid:04d}.png"
            save_png(path, image)
            written.append(str(path))
    _emit({"written": written})


def cmd_evaluate(args):
    from .harness import baseline_report, evaluate, load_checkpoint

    state = load_checkpoint(args.model)
    report = evaluate(state.generator, state.corpus, args.split, k=state.config.k,
                      seed=state.config.seed)
    out = args.out
    model = Path(args.model).resolve()
    if out is None and model.parent.name == "checkpoints":
        out = model.parent.parent / "metrics.csv"  # the run directory
    if out:
        report.write_csv(out)
    _emit({"split": args.split, "model": report.summary,
           "copy_content_baseline": baseline_report(state.corpus, args.split).summary})


def cmd_ablate(args):
    from .harness import run_ablation, standard_grid

    cfg = _config(args)
    grid = json.loads(Path(args.grid).read_text(encoding="utf-8")) if args.grid else standard_grid()
    rows = run_ablation(cfg, grid, args.out, split=args.split)
    _emit({row.name: row.report.summary for row in rows})


def _load_pair(args):
    from .glyphdata import load_png

    a, b = load_png(args.a), load_png(args.b)
    if a.shape != b.shape:
        raise ArgumentError(f"image sizes differ: {a.shape} vs {b.shape}")
    return a, b


def cmd_loss_corner(args):
    from .losses import corner_consistency, detect_corners

    a, b = _load_pair(args)
    ca, cb = detect_corners(a), detect_corners(b)
    value = corner_consistency(ca, cb, diagonal=float(np.hypot(*a.shape)))
    _emit({"corner_consistency": value, "corners_a": ca.points.tolist(),
           "corners_b": cb.points.tolist()})


def cmd_loss_elastic(args):
    from .losses import elastic_loss
    from .numerics import Tensor

    a, b = _load_pair(args)
    value = elastic_loss(Tensor(a[None, None]), Tensor(b[None, None])).item()
    _emit({"elastic_loss": value})


def build_parser():
    parser = argparse.ArgumentParser(prog="glyphfuse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--toy", action="store_true", help="use the small CPU preset")
        return p

    corpus = sub.add_parser("corpus").add_subparsers(dest="action", required=True)
    p = with_config(corpus.add_parser("build", help="render the synthetic corpus to PNGs"))
    p.add_argument("--styles", type=int, help="number of styles (overrides the config)")
    p.add_argument("--contents", type=int, help="number of contents (overrides the config)")
    p.add_argument("--seed", type=int, help="corpus seed (overrides the config)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corpus_build)

    codec = sub.add_parser("codec").add_subparsers(dest="action", required=True)
    p = with_config(codec.add_parser("pretrain", help="pretrain and freeze the codec"))
    p.add_argument("--out", default="runs/codec", help="output directory (default: runs/codec)")
    p.set_defaults(func=cmd_codec_pretrain)

    p = with_config(sub.add_parser("train", help="adversarial generator training"))
    p.add_argument("--out", required=True)
    p.add_argument("--codec", help="directory from 'codec pretrain'")
    p.add_argument("--iters", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="render content ids in the style of reference PNGs")
    p.add_argument("--model", required=True, help="checkpoint directory")
    p.add_argument("--content", required=True, help="content id or comma-separated ids")
    p.add_argument("--refs", required=True, help="directory of reference PNGs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="metrics on a held-out split")
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="ufuc", choices=("train", "sfuc", "ufuc"))
    p.add_argument("--out", help="per-image metrics CSV (default: metrics.csv in the run directory)")
    p.set_defaults(func=cmd_evaluate)

    p = with_config(sub.add_parser("ablate", help="train/evaluate a grid of variants"))
    p.add_argument("--grid", help="JSON list of override dicts (default: standard grid)")
    p.add_argument("--split", default="ufuc", choices=("sfuc", "ufuc"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    loss = sub.add_parser("loss").add_subparsers(dest="action", required=True)
    for name, func in (("corner", cmd_loss_corner), ("elastic", cmd_loss_elastic)):
        p = loss.add_parser(name, help=f"{name} loss between two PNGs")
        p.add_argument("--a", required=True)
        p.add_argument("--b", required=True)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except GlyphFuseError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
