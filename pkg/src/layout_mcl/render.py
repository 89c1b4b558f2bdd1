"""SVG rendering of layouts: one rectangle per object, colored by category."""

from xml.sax.saxutils import escape, quoteattr

# Fixed fill palette; the category index picks a color, wrapping past the end
# so any vocabulary size renders.
PALETTE = (
    "#4e79a7",
    "#f28e2b",
    "#e15759",
    "#76b7b2",
    "#59a14f",
    "#edc948",
    "#b07aa1",
    "#ff9da7",
    "#9c755f",
    "#bab0ac",
)
DEFAULT_WIDTH = 240.0
FILL_OPACITY = 0.55
CANVAS_STROKE = "#2f2f2f"


class RenderError(Exception):
    pass


def category_color(index):
    if index < 0:
        raise RenderError(f"category index must be non-negative, got {index}")
    return PALETTE[index % len(PALETTE)]


def layout_svg(layout, vocabulary, width=DEFAULT_WIDTH):
    """Render one layout as a standalone SVG document string.

    The canvas aspect ratio (width over height) fixes the pixel height, and
    normalized bboxes scale onto the pixel canvas. Category names appear as
    tooltips and data attributes, XML-escaped.
    """
    if width <= 0:
        raise RenderError(f"width must be positive, got {width}")
    if layout.canvas_aspect <= 0:
        raise RenderError(f"canvas aspect must be positive, got {layout.canvas_aspect}")
    height = width / layout.canvas_aspect
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:g} {height:g}"'
        f' width="{width:g}" height="{height:g}">',
        f'<rect x="0" y="0" width="{width:g}" height="{height:g}"'
        f' fill="#ffffff" stroke="{CANVAS_STROKE}"/>',
    ]
    for obj in layout.objects:
        x, y, w, h = obj.bbox
        name = vocabulary.name(obj.category)
        color = category_color(obj.category)
        parts.append(
            f'<rect x="{x * width:.2f}" y="{y * height:.2f}"'
            f' width="{w * width:.2f}" height="{h * height:.2f}"'
            f' fill="{color}" fill-opacity="{FILL_OPACITY}" stroke="{color}"'
            f" data-category={quoteattr(name)}><title>{escape(name)}</title></rect>"
        )
    parts.append("</svg>")
    return "".join(parts)
