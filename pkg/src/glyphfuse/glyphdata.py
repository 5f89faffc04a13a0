"""Procedural pseudo-glyph corpus.

Glyphs are built from a fixed library of 30 stroke components placed into
slots by one of three layouts. A style is a parametric transform of the
stroke skeleton (jitter, shear, stroke width, edge softness, contrast), so
every (content, style) pair has an exact ground-truth raster.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.special import expit

from .errors import ConfigurationError, SamplingError, UnknownIdError

PRIMITIVES = ("horizontal-bar", "vertical-bar", "diagonal", "hook", "box", "dot")
LAYOUTS = ("left-right", "top-bottom", "enclosure")
LIBRARY_SIZE = 30
REFERENCE_SIZE = 64  # stroke widths are quoted in pixels at this size
JITTER_SCALE = 0.012

_SLOTS = {
    "left-right": [(0.10, 0.12, 0.47, 0.88), (0.53, 0.12, 0.90, 0.88)],
    "top-bottom": [(0.12, 0.10, 0.88, 0.47), (0.12, 0.53, 0.88, 0.90)],
    "enclosure": [(0.27, 0.27, 0.73, 0.73)],
}
_FRAME = (0.12, 0.12, 0.88, 0.88)


@dataclass(frozen=True)
class ComponentSpec:
    id: int
    primitive: str
    anchors: tuple  # normalised coordinates in [0, 1]

    def segments(self):
        """Stroke skeleton as ((x0, y0), (x1, y1)) pairs in the unit square."""
        a = self.anchors
        if self.primitive == "horizontal-bar":
            return [((a[0], a[2]), (a[1], a[2]))]
        if self.primitive == "vertical-bar":
            return [((a[2], a[0]), (a[2], a[1]))]
        if self.primitive == "diagonal":
            return [((a[0], a[1]), (a[2], a[3]))]
        if self.primitive == "hook":
            x, y0, y1, xe, ye = a
            return [((x, y0), (x, y1)), ((x, y1), (xe, ye))]
        if self.primitive == "box":
            return _box(*a)
        if self.primitive == "dot":
            return [((a[0], a[1]), (a[0], a[1]))]
        raise ValueError(f"unknown primitive {self.primitive!r}")


def _box(x0, y0, x1, y1):
    return [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))]


def _build_library():
    rng = np.random.default_rng(20240611)
    lib = []
    for cid in range(LIBRARY_SIZE):
        prim = PRIMITIVES[cid % len(PRIMITIVES)]
        u = lambda lo, hi: float(rng.uniform(lo, hi))  # noqa: E731
        if prim == "horizontal-bar":
            anchors = (u(0.0, 0.3), u(0.7, 1.0), u(0.1, 0.9))
        elif prim == "vertical-bar":
            anchors = (u(0.0, 0.3), u(0.7, 1.0), u(0.15, 0.85))
        elif prim == "diagonal":
            x0, x1 = (u(0.0, 0.3), u(0.7, 1.0)) if rng.random() < 0.5 else (u(0.7, 1.0), u(0.0, 0.3))
            anchors = (x0, u(0.0, 0.3), x1, u(0.7, 1.0))
        elif prim == "hook":
            x = u(0.4, 0.8)
            anchors = (x, u(0.0, 0.2), u(0.7, 0.95), x - u(0.15, 0.35), u(0.55, 0.7))
        elif prim == "box":
            anchors = (u(0.05, 0.3), u(0.05, 0.3), u(0.7, 0.95), u(0.7, 0.95))
        else:
            anchors = (u(0.2, 0.8), u(0.2, 0.8))
        lib.append(ComponentSpec(cid, prim, anchors))
    return tuple(lib)


COMPONENT_LIBRARY = _build_library()


@dataclass(frozen=True)
class ContentSpec:
    id: int
    layout: str
    slots: tuple  # per slot, a tuple of component ids


@dataclass(frozen=True)
class StyleParams:
    style_id: int
    stroke_width: float  # pixels at REFERENCE_SIZE
    slant: float  # radians
    roundness: float  # edge blur radius, pixels at REFERENCE_SIZE
    contrast: float
    jitter_seed: int

    def __post_init__(self):
        if self.stroke_width < 1:
            raise ConfigurationError(f"stroke_width must be >= 1, got {self.stroke_width}")


CANONICAL_STYLE = StyleParams(style_id=-1, stroke_width=3.4, slant=0.0, roundness=0.6,
                              contrast=3.0, jitter_seed=0)


def draw_style(style_id, seed):
    """Style parameters are a pure function of (seed, style_id)."""
    rng = np.random.default_rng([seed, style_id, 7])
    return StyleParams(
        style_id=style_id,
        stroke_width=float(rng.uniform(1.8, 7.0)),
        slant=float(rng.uniform(-0.3, 0.3)),
        roundness=float(rng.uniform(0.0, 2.0)),
        contrast=float(rng.uniform(1.5, 5.0)),
        jitter_seed=int(rng.integers(1, 2**31 - 1)),
    )


def content_segments(content):
    segs = []
    if content.layout == "enclosure":
        segs.extend(_box(*_FRAME))
    for rect, comps in zip(_SLOTS[content.layout], content.slots):
        x0, y0, x1, y1 = rect
        for cid in comps:
            for (ax, ay), (bx, by) in COMPONENT_LIBRARY[cid].segments():
                segs.append(((x0 + ax * (x1 - x0), y0 + ay * (y1 - y0)),
                             (x0 + bx * (x1 - x0), y0 + by * (y1 - y0))))
    return np.array(segs, dtype=np.float64)  # (S, 2 points, xy)


def render_segments(segs, style, size, jitter_key=0, mirror=False):
    """Rasterise a unit-square skeleton under ``style``; 1 = ink."""
    segs = segs - 0.5  # centred coordinates
    if style.jitter_seed:
        rng = np.random.default_rng([style.jitter_seed, jitter_key])
        segs = segs + rng.normal(0.0, JITTER_SCALE, size=segs.shape)
    if style.slant:
        segs = segs.copy()
        segs[..., 0] = segs[..., 0] - np.tan(style.slant) * segs[..., 1]
    if mirror:
        segs = segs * np.array([-1.0, 1.0])
    scale = size / REFERENCE_SIZE
    grid = (2.0 * np.arange(size) + 1.0 - size) / (2.0 * size)
    px, py = grid[None, :, None], grid[:, None, None]
    a, b = segs[:, 0], segs[:, 1]
    dx, dy = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    length2 = dx * dx + dy * dy
    rx, ry = px - a[:, 0], py - a[:, 1]
    t = np.where(length2 > 0, (rx * dx + ry * dy) / np.where(length2 > 0, length2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    ex, ey = rx - t * dx, ry - t * dy
    dist = np.sqrt((ex * ex + ey * ey).min(axis=-1)) * size  # pixels
    half = 0.5 * style.stroke_width * scale
    soft = (0.5 + style.roundness) * scale
    ink = expit(style.contrast * (half - dist) / soft)
    ink[ink < 1e-3] = 0.0
    return np.clip(ink, 0.0, 1.0)


@dataclass
class Corpus:
    contents: list
    styles: list
    canonical: StyleParams
    size: int
    seed: int
    train_styles: list
    test_styles: list
    train_contents: list
    test_contents: list
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_styles(self):
        return len(self.styles)

    @property
    def num_contents(self):
        return len(self.contents)

    def render(self, content_id, style_id=None):
        """Render content in a corpus style; ``None`` means the canonical style."""
        key = (content_id, style_id)
        if key not in self._cache:
            style = self.canonical if style_id is None else self.styles[style_id]
            self._cache[key] = render_glyph(content_id, style, self.size, self.contents)
        return self._cache[key]

    def split(self, name):
        """(style, content) pairs of a split: train (SFSC), sfuc or ufuc."""
        if name == "train":
            styles, contents = self.train_styles, self.train_contents
        elif name == "sfuc":
            styles, contents = self.train_styles, self.test_contents
        elif name == "ufuc":
            styles, contents = self.test_styles, self.test_contents
        else:
            raise ConfigurationError(f"unknown split {name!r}")
        return [(s, c) for s in styles for c in contents]

    def manifest(self):
        return {
            "seed": self.seed,
            "size": self.size,
            "canonical": asdict(self.canonical),
            "styles": [asdict(s) for s in self.styles],
            "contents": [{"id": c.id, "layout": c.layout, "slots": [list(s) for s in c.slots]}
                         for c in self.contents],
            "splits": {
                "train_styles": self.train_styles,
                "test_styles": self.test_styles,
                "train_contents": self.train_contents,
                "test_contents": self.test_contents,
            },
        }

    @classmethod
    def from_manifest(cls, data):
        splits = data["splits"]
        return cls(
            contents=[ContentSpec(c["id"], c["layout"], tuple(tuple(s) for s in c["slots"]))
                      for c in data["contents"]],
            styles=[StyleParams(**s) for s in data["styles"]],
            canonical=StyleParams(**data["canonical"]),
            size=data["size"],
            seed=data["seed"],
            train_styles=list(splits["train_styles"]),
            test_styles=list(splits["test_styles"]),
            train_contents=list(splits["train_contents"]),
            test_contents=list(splits["test_contents"]),
        )


def render_glyph(content_id, style, size=64, contents=None, mirror=False):
    """Deterministic raster of a content id under ``style``.

    ``contents`` defaults to the first ``content_id + 1`` specs of
    :func:`make_contents` with seed 0; pass a corpus' content list otherwise.
    ``mirror`` flips the skeleton horizontally before rasterising.
    """
    if contents is None:
        contents = make_contents(max(content_id + 1, 1), 0)
    if not 0 <= content_id < len(contents):
        raise UnknownIdError(f"unknown content id {content_id}")
    segs = content_segments(contents[content_id])
    return render_segments(segs, style, size, jitter_key=content_id, mirror=mirror)


def make_contents(num_contents, seed):
    rng = np.random.default_rng([seed, 1])
    seen, contents = set(), []
    while len(contents) < num_contents:
        layout = LAYOUTS[int(rng.integers(len(LAYOUTS)))]
        picks = rng.choice(LIBRARY_SIZE, size=2 * len(_SLOTS[layout]), replace=False)
        slots = tuple(tuple(sorted(int(c) for c in picks[2 * i : 2 * i + 2]))
                      for i in range(len(_SLOTS[layout])))
        key = (layout, slots)
        if key in seen:
            continue
        seen.add(key)
        contents.append(ContentSpec(len(contents), layout, slots))
    return contents


def build_corpus(num_styles, num_contents, seed, size=64,
                 test_style_fraction=0.2, test_content_fraction=1 / 6):
    """Deterministic corpus with disjoint style and content splits."""
    if num_styles < 2 or num_contents < 2:
        raise ConfigurationError(
            f"need at least 2 styles and 2 contents to split, got {num_styles} and {num_contents}"
        )
    n_test_styles = min(num_styles - 1, max(1, round(num_styles * test_style_fraction)))
    n_test_contents = min(num_contents - 1, max(1, round(num_contents * test_content_fraction)))
    rng = np.random.default_rng([seed, 2])
    style_perm = [int(i) for i in rng.permutation(num_styles)]
    content_perm = [int(i) for i in rng.permutation(num_contents)]
    return Corpus(
        contents=make_contents(num_contents, seed),
        styles=[draw_style(i, seed) for i in range(num_styles)],
        canonical=CANONICAL_STYLE,
        size=size,
        seed=seed,
        train_styles=sorted(style_perm[n_test_styles:]),
        test_styles=sorted(style_perm[:n_test_styles]),
        train_contents=sorted(content_perm[n_test_contents:]),
        test_contents=sorted(content_perm[:n_test_contents]),
    )


@dataclass
class Batch:
    content: np.ndarray  # (B, 1, H, W) canonical renders
    refs: np.ndarray  # (B, k, 1, H, W)
    target: np.ndarray  # (B, 1, H, W)
    style: np.ndarray  # (B,)
    content_label: np.ndarray  # (B,)
    ref_contents: np.ndarray  # (B, k)

    def __len__(self):
        return len(self.style)


def _reference_contents(corpus, style, content, k, rng):
    pool = [c for c in corpus.train_contents if c != content]
    if len(pool) < k:
        raise SamplingError(
            f"style {style} has {len(pool)} reference contents besides {content}, need {k}"
        )
    return [int(c) for c in rng.choice(pool, size=k, replace=False)]


def make_batch(corpus, pairs, k, rng):
    """Assemble a batch for explicit (style, content) pairs."""
    refs, ref_ids = [], []
    for s, c in pairs:
        ids = _reference_contents(corpus, s, c, k, rng)
        ref_ids.append(ids)
        refs.append(np.stack([corpus.render(r, s)[None] for r in ids]))
    return Batch(
        content=np.stack([corpus.render(c)[None] for _, c in pairs]),
        refs=np.stack(refs),
        target=np.stack([corpus.render(c, s)[None] for s, c in pairs]),
        style=np.array([s for s, _ in pairs], dtype=np.intp),
        content_label=np.array([c for _, c in pairs], dtype=np.intp),
        ref_contents=np.array(ref_ids, dtype=np.intp),
    )


def sample_batch(corpus, batch_size, k, rng, split="train"):
    """Draw a batch laid out as a style x content grid.

    With at least two styles available the batch covers ``batch_size // 2``
    styles times 2 contents, so every item has a same-style/other-content
    partner and a same-content/other-style partner.
    """
    if k < 1:
        raise SamplingError(f"k must be >= 1, got {k}")
    pairs_pool = corpus.split(split)
    styles = sorted({s for s, _ in pairs_pool})
    contents = sorted({c for _, c in pairs_pool})
    n_styles = min(len(styles), max(1, batch_size // 2))
    n_contents = max(1, batch_size // n_styles)
    chosen_styles = rng.choice(styles, size=n_styles, replace=False)
    chosen_contents = rng.choice(contents, size=n_contents, replace=n_contents > len(contents))
    pairs = [(int(s), int(c)) for s in chosen_styles for c in chosen_contents]
    while len(pairs) < batch_size:
        s, c = pairs_pool[int(rng.integers(len(pairs_pool)))]
        pairs.append((s, c))
    return make_batch(corpus, pairs[:batch_size], k, rng)


# --------------------------------------------------------------------- io
def save_png(path, image):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_png(path):
    return np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0


def write_corpus(corpus, out_dir):
    """Write every render as PNG plus ``manifest.json`` describing the splits."""
    out = Path(out_dir)
    for c in range(corpus.num_contents):
        save_png(out / "canonical" / f"{c:04d}.png", corpus.render(c))
        for s in range(corpus.num_styles):
            save_png(out / f"style_{s:03d}" / f"{c:04d}.png", corpus.render(c, s))
    (out / "manifest.json").write_text(json.dumps(corpus.manifest(), indent=1), encoding="utf-8")
    return out / "manifest.json"


def read_corpus(manifest_path):
    data = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    return Corpus.from_manifest(data)
