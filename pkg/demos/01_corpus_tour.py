"""A walk through the synthetic glyph corpus.

Every glyph is a handful of stroke components placed in a layout. A style
changes stroke weight, slant, softness and contrast, but never which
components appear. This script renders one character across all styles,
shows how the held-out splits are carved out, and writes a contact sheet.

    python demos/01_corpus_tour.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from glyphfuse.config import TrainConfig
from glyphfuse.glyphdata import sample_batch, save_png
from glyphfuse.harness import baseline_report, corpus_for

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/corpus")
config = TrainConfig()  # 10 styles x 60 contents at 64 px
corpus = corpus_for(config)

print(f"{corpus.num_styles} styles, {corpus.num_contents} contents, {corpus.size} px")
print("held-out styles:  ", corpus.test_styles)
print("held-out contents:", corpus.test_contents)
for split in ("train", "sfuc", "ufuc"):
    print(f"  {split:5s} {len(corpus.split(split)):4d} (style, content) pairs")

# one row per content: canonical render, then each style
rows = [np.concatenate([corpus.render(c)] + [corpus.render(c, s) for s in range(corpus.num_styles)], axis=1)
        for c in corpus.test_contents[:5]]
save_png(out / "styles.png", np.concatenate(rows, axis=0))
print("wrote", out / "styles.png")

# A training batch pairs every target with k references of the same style.
batch = sample_batch(corpus, batch_size=4, k=4, rng=np.random.default_rng(0))
print("batch styles", batch.style.tolist(), "contents", batch.content_label.tolist())
print("reference contents per item", batch.ref_contents.tolist())

# The number to beat: simply copying the canonical render.
for split in ("sfuc", "ufuc"):
    s = baseline_report(corpus, split).summary
    print(f"copy-content baseline on {split}: L1 {s['l1']:.4f}  SSIM {s['ssim']:.4f}")
