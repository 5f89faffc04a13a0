"""Train and evaluate one model per grid cell and tabulate the results."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .metrics import MetricsReport, evaluate
from .train import corpus_for, pretrain_codec, run_train

logger = logging.getLogger(__name__)


@dataclass
class AblationRow:
    name: str
    overrides: dict
    report: MetricsReport
    checkpoint: Path | None = None


def standard_grid():
    """Loss, codebook-size, attention-block and reference-count sweeps."""
    grid = [
        {"name": "full"},
        {"name": "no-geometric-losses", "weights": {"cor": 0.0, "ela": 0.0}},
        {"name": "no-corner", "weights": {"cor": 0.0}},
        {"name": "no-elastic", "weights": {"ela": 0.0}},
        {"name": "base", "enable_component_block": False, "enable_relation_block": False},
        {"name": "+C", "enable_relation_block": False},
    ]
    grid += [{"name": f"d={d}", "codebook_size": d} for d in (50, 150)]
    grid += [{"name": f"k={k}", "k": k} for k in (1, 2, 3, 5, 6)]
    return grid


def _codec_key(cfg):
    return (cfg.image_size, cfg.enc_channels, cfg.embed_dim, cfg.codebook_size, cfg.seed,
            cfg.pretrain_iters, cfg.pretrain_batch, cfg.pretrain_lr)


def run_ablation(config, grid, out_dir=None, split="ufuc", corpus=None, codec_cache=None):
    """One trained model and metrics report per grid cell.

    Each cell is a dict of config overrides with an optional ``name``. Codecs
    are pretrained once per distinct codec setting and shared across cells.
    """
    corpus = corpus if corpus is not None else corpus_for(config)
    cache = {} if codec_cache is None else codec_cache
    out = Path(out_dir) if out_dir is not None else None
    rows = []
    for i, cell in enumerate(grid):
        overrides = {k: v for k, v in cell.items() if k != "name"}
        name = cell.get("name", f"cell{i}")
        cfg = config.with_(**overrides)
        key = _codec_key(cfg)
        if key not in cache:
            cache[key] = pretrain_codec(cfg, corpus)
        cell_dir = out / name if out is not None else None
        logger.info("ablation cell %s: %s", name, overrides)
        state = run_train(cfg, cell_dir, codec=cache[key], corpus=corpus)
        report = evaluate(state.generator, corpus, split, k=cfg.k, seed=cfg.seed)
        checkpoint = None
        if cell_dir is not None:
            report.write_csv(cell_dir / "metrics.csv")
            checkpoint = cell_dir / "checkpoints" / "final"
        rows.append(AblationRow(name, overrides, report, checkpoint))
    if out is not None:
        write_table(out / "ablation.csv", rows)
    return rows


def write_table(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("name", "overrides", "l1", "rmse", "ssim", "corner"))
        for row in rows:
            s = row.report.summary
            writer.writerow((row.name, json.dumps(row.overrides, sort_keys=True),
                             repr(s["l1"]), repr(s["rmse"]), repr(s["ssim"]), repr(s["corner"])))
