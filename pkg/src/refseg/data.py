"""Synthetic referring-segmentation scenes.

Each scene places 2-4 non-overlapping colored shapes on a dark canvas; the
expression is a minimal set of attribute words (color / shape kind /
half-plane position) that matches exactly one shape in the scene. Masks
are rasterized from exact integer predicates so an independent
point-in-shape oracle reproduces them pixel for pixel.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

PAD = 0
WORDS = ["red", "green", "blue", "yellow",
         "circle", "square", "triangle",
         "left", "right", "top", "bottom"]
WORD_IDS = {w: i + 1 for i, w in enumerate(WORDS)}
ID_WORDS = {i: w for w, i in WORD_IDS.items()}

COLOR_RGB = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.80, 0.15),
    "blue": (0.12, 0.20, 0.90),
    "yellow": (0.90, 0.85, 0.10),
}
BACKGROUND = 0.08


@dataclass
class Shape:
    kind: str      # circle | square | triangle
    color: str
    cx: int
    cy: int
    size: int      # radius / half-width / half-height

    def contains(self, x, y):
        """Exact membership predicate; works on scalars or ndarrays."""
        if self.kind == "circle":
            return (x - self.cx) ** 2 + (y - self.cy) ** 2 <= self.size ** 2
        if self.kind == "square":
            return (np.abs(x - self.cx) <= self.size) & (np.abs(y - self.cy) <= self.size)
        # triangle: apex up, integer vertices, half-plane sign tests
        s = self.size
        v = [(self.cx, self.cy - s), (self.cx - s, self.cy + s), (self.cx + s, self.cy + s)]
        d = []
        for (x0, y0), (x1, y1) in zip(v, v[1:] + v[:1]):
            d.append((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0))
        pos = (d[0] >= 0) & (d[1] >= 0) & (d[2] >= 0)
        neg = (d[0] <= 0) & (d[1] <= 0) & (d[2] <= 0)
        return pos | neg

    def bbox(self):
        s = self.size
        return (self.cx - s, self.cx + s, self.cy - s, self.cy + s)

    def attributes(self, image_size):
        half = image_size // 2
        attrs = {self.color, self.kind}
        if self.cx < half:
            attrs.add("left")
        elif self.cx > half:
            attrs.add("right")
        if self.cy < half:
            attrs.add("top")
        elif self.cy > half:
            attrs.add("bottom")
        return attrs


@dataclass
class Sample:
    image: np.ndarray          # (S, S, 3) float64 in [0, 1]
    tokens: list               # padded to max_tokens with PAD
    pad_mask: np.ndarray       # (max_tokens,) bool, True at padding
    target_mask: np.ndarray    # (S, S) bool
    expression_text: str
    shapes: list = field(default_factory=list)
    target_index: int = -1


def tokens_to_text(tokens):
    return " ".join(ID_WORDS[t] for t in tokens if t != PAD)


def text_to_tokens(text, max_tokens):
    words = text.split()
    if len(words) > max_tokens:
        raise InputError(f"expression longer than {max_tokens} tokens")
    ids = []
    for w in words:
        if w not in WORD_IDS:
            raise InputError(f"unknown word {w!r}")
        ids.append(WORD_IDS[w])
    return pad_tokens(ids, max_tokens)


def pad_tokens(ids, max_tokens):
    if len(ids) > max_tokens:
        raise InputError(f"token list longer than {max_tokens}")
    return list(ids) + [PAD] * (max_tokens - len(ids))


def matching_shapes(shapes, attr_words, image_size):
    """Exhaustive attribute matcher: shapes whose attributes cover all words."""
    want = set(attr_words)
    return [i for i, s in enumerate(shapes) if want <= s.attributes(image_size)]


def _place_shapes(rng, image_size, min_shapes, max_shapes):
    half = image_size // 2
    n = int(rng.integers(min_shapes, max_shapes + 1))
    shapes = []
    for _ in range(n):
        for _attempt in range(200):
            kind = ["circle", "square", "triangle"][rng.integers(3)]
            color = list(COLOR_RGB)[rng.integers(4)]
            size = int(rng.integers(4, max(5, image_size // 8) + 1))
            lo, hi = size + 2, image_size - size - 3
            if lo >= hi:
                continue
            cx = int(rng.integers(lo, hi + 1))
            cy = int(rng.integers(lo, hi + 1))
            if cx == half or cy == half:  # keep left/right, top/bottom unambiguous
                continue
            cand = Shape(kind, color, cx, cy, size)
            x0, x1, y0, y1 = cand.bbox()
            clear = True
            for other in shapes:
                ox0, ox1, oy0, oy1 = other.bbox()
                if not (x1 + 2 < ox0 or ox1 + 2 < x0 or y1 + 2 < oy0 or oy1 + 2 < y0):
                    clear = False
                    break
            if clear:
                shapes.append(cand)
                break
        else:
            return None
    return shapes


_CANONICAL = ["red", "green", "blue", "yellow", "circle", "square", "triangle",
              "left", "right", "top", "bottom"]


def _unique_expression(rng, shapes, target_idx, image_size):
    attrs = sorted(shapes[target_idx].attributes(image_size), key=_CANONICAL.index)
    subsets = []
    for bits in range(1, 1 << len(attrs)):
        subsets.append([a for i, a in enumerate(attrs) if bits >> i & 1])
    order = rng.permutation(len(subsets))
    # prefer shorter expressions among the shuffled candidates
    for want_len in range(1, len(attrs) + 1):
        for i in order:
            words = subsets[i]
            if len(words) != want_len:
                continue
            if matching_shapes(shapes, words, image_size) == [target_idx]:
                return words
    return None


def rasterize(shapes, image_size):
    """Render the scene; returns (image, per-shape boolean masks)."""
    ys, xs = np.mgrid[0:image_size, 0:image_size]
    image = np.full((image_size, image_size, 3), BACKGROUND, dtype=np.float64)
    masks = []
    for s in shapes:
        m = s.contains(xs, ys)
        image[m] = COLOR_RGB[s.color]
        masks.append(m)
    return image, masks


def generate_sample(seed, index, image_size=64, max_tokens=12,
                    min_shapes=2, max_shapes=4):
    """Deterministic scene for (seed, index); retries until the expression
    uniquely identifies one shape."""
    rng = np.random.default_rng([seed, index])
    while True:
        shapes = _place_shapes(rng, image_size, min_shapes, max_shapes)
        if shapes is None:
            continue
        target = int(rng.integers(len(shapes)))
        words = _unique_expression(rng, shapes, target, image_size)
        if words is None:
            continue
        image, masks = rasterize(shapes, image_size)
        tokens = pad_tokens([WORD_IDS[w] for w in words], max_tokens)
        return Sample(
            image=image,
            tokens=tokens,
            pad_mask=np.array([t == PAD for t in tokens]),
            target_mask=masks[target],
            expression_text=" ".join(words),
            shapes=shapes,
            target_index=target,
        )


def generate_dataset(seed, n, image_size=64, max_tokens=12,
                     min_shapes=2, max_shapes=4):
    if n < 1:
        raise InputError("dataset size must be >= 1")
    return [generate_sample(seed, i, image_size, max_tokens, min_shapes, max_shapes)
            for i in range(n)]
