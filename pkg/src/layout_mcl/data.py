"""Layout data model: corpus I/O, reading order, rasterization, synthesis.

Layouts are ordered sequences of (category, bbox, stop) objects on a
portrait canvas. Bounding boxes are (x, y, w, h) with the origin at the
canvas top-left and every value normalized to [0, 1].
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

EPS = 1e-6
DEFAULT_MAX_OBJECTS = 10
DEFAULT_BAND_TOLERANCE = 0.02


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class LayoutObject:
    category: int
    bbox: tuple[float, float, float, float]
    stop: bool = False


@dataclass
class Layout:
    objects: list[LayoutObject]
    canvas_aspect: float = 0.75
    source: str = ""

    def category_sequence(self):
        return tuple(o.category for o in self.objects)


@dataclass(frozen=True)
class CategoryVocabulary:
    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names or len(set(self.names)) != len(self.names):
            raise CorpusError("vocabulary names must be unique and non-empty")

    def __len__(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise CorpusError(f"unknown category {name!r}") from None

    def name(self, idx):
        return self.names[idx]

    @staticmethod
    def from_file(path):
        with open(path, encoding="utf-8") as fh:
            names = json.load(fh)
        return CategoryVocabulary(tuple(names))

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(list(self.names), fh)


def layout_violations(layout, vocab_size, max_objects=DEFAULT_MAX_OBJECTS):
    """List every invariant the layout breaks; empty means valid."""
    problems = []
    n = len(layout.objects)
    if not 1 <= n <= max_objects:
        problems.append(f"object count {n} outside [1, {max_objects}]")
    for i, obj in enumerate(layout.objects):
        if not 0 <= obj.category < vocab_size:
            problems.append(f"object {i}: category {obj.category} outside vocabulary")
        x, y, w, h = obj.bbox
        if not all(-EPS <= v <= 1 + EPS for v in (x, y, w, h)):
            problems.append(f"object {i}: bbox value outside [0, 1]")
        if x + w > 1 + EPS or y + h > 1 + EPS:
            problems.append(f"object {i}: bbox extends past the canvas")
        if obj.stop != (i == n - 1):
            problems.append(f"object {i}: stop flag misplaced")
    return problems


def _with_stop_on_last(objects):
    if not objects:
        return []
    out = [replace(o, stop=False) for o in objects[:-1]]
    out.append(replace(objects[-1], stop=True))
    return out


def reading_order(layout, band_tolerance=DEFAULT_BAND_TOLERANCE):
    """Canonical human-reading order: row bands top-to-bottom, then left-to-right.

    Objects whose top edges chain within ``band_tolerance`` share a band.
    The stop flag moves to the new final object. Stable and idempotent.
    """
    objs = sorted(layout.objects, key=lambda o: o.bbox[1])
    bands = []
    for obj in objs:
        if bands and obj.bbox[1] - bands[-1][-1].bbox[1] < band_tolerance:
            bands[-1].append(obj)
        else:
            bands.append([obj])
    ordered = []
    for band in bands:
        ordered.extend(sorted(band, key=lambda o: o.bbox[0]))
    return replace(layout, objects=_with_stop_on_last(ordered))


def rasterize(objects, num_categories, resolution=32):
    """Render objects onto a (C, R, R) occupancy grid by cell-center coverage."""
    if resolution < 1:
        raise CorpusError(f"raster resolution must be positive, got {resolution}")
    grid = np.zeros((num_categories, resolution, resolution))
    centers = (np.arange(resolution) + 0.5) / resolution
    for obj in objects:
        x, y, w, h = obj.bbox
        cols = (centers >= x) & (centers <= x + w)
        rows = (centers >= y) & (centers <= y + h)
        grid[obj.category][np.ix_(rows, cols)] = 1.0
    return grid


# ---------------------------------------------------------------------------
# corpus I/O (JSON-lines, one layout per line)


@dataclass
class LoadReport:
    total_lines: int = 0
    loaded: int = 0
    dropped_count: int = 0
    malformed_lines: list = field(default_factory=list)  # (line number, reason)

    @property
    def malformed_count(self):
        return len(self.malformed_lines)


@dataclass
class FilterRules:
    max_objects: int = DEFAULT_MAX_OBJECTS
    aspect_range: tuple[float, float] | None = None  # user-supplied portrait filter
    band_tolerance: float = DEFAULT_BAND_TOLERANCE


def _parse_line(raw, vocabulary):
    doc = json.loads(raw)
    aspect = float(doc["canvas"]["aspect"])
    objects = []
    for entry in doc["objects"]:
        name = entry["category"]
        if name not in vocabulary.names:
            raise CorpusError(f"unknown category {name!r}")
        bbox = entry["bbox"]
        if len(bbox) != 4:
            raise KeyError("bbox must have 4 values")
        objects.append(LayoutObject(category=vocabulary.index(name), bbox=tuple(float(v) for v in bbox)))
    return Layout(objects=_with_stop_on_last(objects), canvas_aspect=aspect)


def load_corpus(path, vocabulary, rules=None):
    """Load layouts from a JSON-lines file, canonicalizing reading order.

    Layouts that violate the filter rules are dropped and counted; lines
    that fail to parse are recorded by line number and skipped. More than
    50% malformed lines is treated as a corrupt file.
    """
    rules = rules or FilterRules()
    report = LoadReport()
    layouts = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            report.total_lines += 1
            try:
                layout = _parse_line(raw, vocabulary)
            except CorpusError:
                report.dropped_count += 1
                continue
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                report.malformed_lines.append((line_no, str(err)))
                continue
            layout = reading_order(layout, rules.band_tolerance)
            layout.source = str(path)
            if layout_violations(layout, len(vocabulary), rules.max_objects):
                report.dropped_count += 1
                continue
            if rules.aspect_range is not None:
                lo, hi = rules.aspect_range
                if not lo <= layout.canvas_aspect <= hi:
                    report.dropped_count += 1
                    continue
            layouts.append(layout)
            report.loaded += 1
    if report.total_lines == 0:
        log.warning("corpus %s is empty", path)
    elif report.malformed_count * 2 > report.total_lines:
        raise CorpusError(
            f"{path}: {report.malformed_count} of {report.total_lines} lines malformed"
        )
    return layouts, report


def save_corpus(path, layouts, vocabulary):
    with open(path, "w", encoding="utf-8") as fh:
        for layout in layouts:
            fh.write(layout_to_json(layout, vocabulary))
            fh.write("\n")


def layout_to_json(layout, vocabulary):
    doc = {
        "canvas": {"aspect": layout.canvas_aspect},
        "objects": [
            {"category": vocabulary.name(o.category), "bbox": list(o.bbox)} for o in layout.objects
        ],
    }
    return json.dumps(doc)


def layout_from_json(raw, vocabulary):
    return _parse_line(raw, vocabulary)


# ---------------------------------------------------------------------------
# synthetic layout grammar
#
# Every profile bakes in at least two valid placements at some template
# point, so a single-predictor model is forced into the averaging problem.

DOC_VOCABULARY = CategoryVocabulary(("title", "text", "figure"))
MOBILE_VOCABULARY = CategoryVocabulary(("toolbar", "image", "text", "icon", "button"))

PROFILES = ("single-column-doc", "double-column-doc", "mobile-app")

_POS_JITTER = 0.008
_SIZE_JITTER = 0.01


def profile_vocabulary(profile):
    if profile == "mobile-app":
        return MOBILE_VOCABULARY
    if profile in PROFILES:
        return DOC_VOCABULARY
    raise CorpusError(f"unknown profile {profile!r}")


def _jitter_box(rng, x, y, w, h):
    x += rng.uniform(-_POS_JITTER, _POS_JITTER)
    y += rng.uniform(-_POS_JITTER, _POS_JITTER)
    w += rng.uniform(-_SIZE_JITTER, _SIZE_JITTER)
    h += rng.uniform(-_SIZE_JITTER, _SIZE_JITTER)
    x, y = min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)
    w = min(max(w, 0.0), 1.0 - x)
    h = min(max(h, 0.0), 1.0 - y)
    return (x, y, w, h)


def _obj(rng, vocab, name, box):
    return LayoutObject(category=vocab.index(name), bbox=_jitter_box(rng, *box))


def _single_column_doc(rng):
    v = DOC_VOCABULARY
    objs = [
        _obj(rng, v, "title", (0.06, 0.03, 0.88, 0.07)),
        _obj(rng, v, "text", (0.06, 0.16, 0.88, 0.18)),
    ]
    # figure slot: mid-page or bottom, equally likely
    if rng.random() < 0.5:
        objs.append(_obj(rng, v, "figure", (0.06, 0.40, 0.88, 0.18)))
        objs.append(_obj(rng, v, "text", (0.06, 0.64, 0.88, 0.18)))
    else:
        objs.append(_obj(rng, v, "text", (0.06, 0.40, 0.88, 0.18)))
        objs.append(_obj(rng, v, "figure", (0.06, 0.64, 0.88, 0.18)))
    return Layout(objects=objs, canvas_aspect=0.773, source="synth:single-column-doc")


def _double_column_doc(rng):
    v = DOC_VOCABULARY
    # title style: full width or centered narrow, equally likely
    if rng.random() < 0.5:
        title_box = (0.06, 0.03, 0.88, 0.07)
    else:
        title_box = (0.28, 0.03, 0.44, 0.07)
    objs = [
        _obj(rng, v, "title", title_box),
        _obj(rng, v, "text", (0.06, 0.16, 0.42, 0.22)),
        _obj(rng, v, "text", (0.52, 0.16, 0.42, 0.22)),
        _obj(rng, v, "text", (0.06, 0.44, 0.42, 0.22)),
        _obj(rng, v, "text", (0.52, 0.44, 0.42, 0.22)),
    ]
    # figure column: left or right, equally likely
    if rng.random() < 0.5:
        objs.append(_obj(rng, v, "figure", (0.06, 0.72, 0.42, 0.20)))
        objs.append(_obj(rng, v, "text", (0.52, 0.72, 0.42, 0.20)))
    else:
        objs.append(_obj(rng, v, "text", (0.06, 0.72, 0.42, 0.20)))
        objs.append(_obj(rng, v, "figure", (0.52, 0.72, 0.42, 0.20)))
    return Layout(objects=objs, canvas_aspect=0.773, source="synth:double-column-doc")


def _mobile_app(rng):
    v = MOBILE_VOCABULARY
    objs = [
        LayoutObject(category=v.index("toolbar"), bbox=(0.0, 0.0, 1.0, 0.08)),
        _obj(rng, v, "image", (0.04, 0.10, 0.92, 0.30)),
        _obj(rng, v, "text", (0.06, 0.44, 0.88, 0.09)),
        _obj(rng, v, "text", (0.06, 0.56, 0.88, 0.09)),
    ]
    # accent icon: left or right rail, equally likely
    if rng.random() < 0.5:
        objs.append(_obj(rng, v, "icon", (0.08, 0.70, 0.18, 0.10)))
    else:
        objs.append(_obj(rng, v, "icon", (0.72, 0.70, 0.18, 0.10)))
    objs.append(_obj(rng, v, "button", (0.06, 0.86, 0.88, 0.08)))
    return Layout(objects=objs, canvas_aspect=0.5625, source="synth:mobile-app")


_GENERATORS = {
    "single-column-doc": _single_column_doc,
    "double-column-doc": _double_column_doc,
    "mobile-app": _mobile_app,
}


def synth_grammar(seed, n, profile):
    """Draw n layouts from the stochastic template grammar of a profile."""
    if profile not in _GENERATORS:
        raise CorpusError(f"unknown profile {profile!r} (choose from {PROFILES})")
    rng = np.random.default_rng(seed)
    make = _GENERATORS[profile]
    layouts = [reading_order(make(rng)) for _ in range(n)]
    return layouts


def perturb_fake(layout, rng, magnitude=0.25):
    """Corrupt a layout with independent uniform bbox shifts, then re-clamp.

    Positions are clamped to the canvas and sizes shrunk to fit so the
    result still satisfies every layout invariant; categories and object
    count are untouched.
    """
    fakes = []
    for obj in layout.objects:
        x, y, w, h = obj.bbox
        dx, dy, dw, dh = rng.uniform(-magnitude, magnitude, size=4) if magnitude > 0 else (0, 0, 0, 0)
        x = min(max(x + dx, 0.0), 1.0)
        y = min(max(y + dy, 0.0), 1.0)
        w = min(max(w + dw, 0.0), 1.0 - x)
        h = min(max(h + dh, 0.0), 1.0 - y)
        fakes.append(LayoutObject(category=obj.category, bbox=(x, y, w, h)))
    return reading_order(replace(layout, objects=_with_stop_on_last(fakes)))
