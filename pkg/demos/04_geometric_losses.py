"""What the two geometric losses see.

The corner term compares Shi-Tomasi corners of target and output; the
elastic term compares small patches sampled on a mesh that bends toward the
ink of the target. Both are shown here on a square drawn, shifted and
thickened.

    python demos/04_geometric_losses.py
"""
import numpy as np

from glyphfuse.losses import (
    build_mesh,
    corner_consistency,
    corner_surrogate,
    detect_corners,
    elastic_loss,
)
from glyphfuse.numerics import Tensor


def square(shift=0, pad=0):
    img = np.zeros((64, 64))
    img[20 - pad:44 + pad, 16 + shift - pad:40 + shift + pad] = 1.0
    return img


target = square()
found = detect_corners(target)
print("corners of the target square (row, col):", found.points.astype(int).tolist())

mesh = build_mesh(target)[0]
moved = np.abs(mesh - (np.arange(8) * 8 + 3.5)[np.indices((8, 8)).reshape(2, -1).T]).sum(axis=1)
print(f"mesh points pulled toward ink: {(moved > 0).sum()} of {len(mesh)}")

for name, candidate in (("identical", square()), ("shifted 3 px", square(3)),
                        ("thicker", square(pad=2)), ("blank", np.zeros((64, 64)))):
    t, o = Tensor(target[None, None]), Tensor(candidate[None, None])
    discrete = corner_consistency(found, detect_corners(candidate), diagonal=np.hypot(64, 64))
    print(f"{name:13s} corner distance {discrete:7.3f}  surrogate {corner_surrogate(t, o).item():.5f}"
          f"  elastic {elastic_loss(t, o).item():.5f}")
