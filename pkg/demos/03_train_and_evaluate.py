"""Stage two: adversarial training, then scoring on held-out characters.

Trains the generator on the toy corpus, compares it with simply copying the
content glyph, and renders a few held-out characters in a held-out style.

    python demos/03_train_and_evaluate.py [iterations] [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from glyphfuse.config import TrainConfig
from glyphfuse.generator import generate
from glyphfuse.glyphdata import make_batch, save_png
from glyphfuse.harness import baseline_report, evaluate, run_train
from glyphfuse.numerics import no_grad

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_out/train")
config = TrainConfig.toy(main_iters=iters)
state = run_train(config, out, log_every=max(iters // 10, 1))
losses = np.array(state.history)
window = max(min(100, len(losses) // 2), 1)
print(f"L_img: first {window} iterations {losses[:window, 3].mean():.4f}, "
      f"last {window} {losses[-window:, 3].mean():.4f}")

for split in ("sfuc", "ufuc"):
    model = evaluate(state.generator, state.corpus, split, k=config.k).summary
    copy = baseline_report(state.corpus, split).summary
    print(f"{split}: L1 {model['l1']:.4f} (copy-content {copy['l1']:.4f}), "
          f"SSIM {model['ssim']:.4f} (copy-content {copy['ssim']:.4f})")

# unseen style, unseen characters: rows are content | output | ground truth
corpus = state.corpus
pairs = [(corpus.test_styles[0], c) for c in corpus.test_contents[:6]]
batch = make_batch(corpus, pairs, config.k, np.random.default_rng(0))
with no_grad():
    images = generate(state.generator, batch.content.astype(np.float32), batch.refs.astype(np.float32)).data
rows = [np.concatenate([batch.content[i, 0], images[i, 0], batch.target[i, 0]], 1) for i in range(len(pairs))]
save_png(out / "held_out.png", np.concatenate(rows, 0))
print("wrote", out / "held_out.png")
