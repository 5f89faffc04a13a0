"""Stage one: learn a component codebook from the content font.

The codec compresses each glyph to a small grid of feature vectors and snaps
every vector to its nearest codebook entry. After pretraining the codec is
frozen; the generator reuses its encoder for content features and its
codebook as the vocabulary of components.

    python demos/02_codec_pretraining.py [iterations] [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from glyphfuse.codec import codebook_usage, decode, encode, quantize
from glyphfuse.config import TrainConfig
from glyphfuse.glyphdata import save_png
from glyphfuse.harness import corpus_for, pretrain_codec
from glyphfuse.numerics import no_grad, save_module

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 500
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_out/codec")
config = TrainConfig.toy(pretrain_iters=iters)
corpus = corpus_for(config)
codec = pretrain_codec(config, corpus, out)  # writes codec_losses.csv
save_module(out / "codec", codec)

images = np.stack([corpus.render(c) for c in range(corpus.num_contents)])
print(f"{codebook_usage(codec, images)} of {codec.codebook_size} codes in use")

with no_grad():
    quantized, indices = quantize(encode(codec, images[:8]), codec.codebook)
    recon = decode(codec, quantized).data[:, 0]
print("code grid of the first glyph:\n", indices[0])
print(f"reconstruction L1 on 8 glyphs: {np.abs(recon - images[:8]).mean():.4f}")
save_png(out / "reconstructions.png", np.concatenate([np.concatenate(list(images[:8]), 1),
                                                       np.concatenate(list(recon), 1)], 0))
print("wrote", out / "reconstructions.png")
