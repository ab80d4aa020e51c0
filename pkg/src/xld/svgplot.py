"""Direct SVG emission for the report plots (no plotting dependency).

Charts are built with ElementTree, so every output is valid XML.  The
palette is fixed and documented here: series colors cycle through
PALETTE in order; heatmaps interpolate blue (negative) - white (zero) -
red (positive) unless a sequential range is requested.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

PALETTE = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee",
           "#aa3377", "#bbbbbb", "#000000"]

W, H = 760, 420
MARGIN = dict(left=64, right=24, top=36, bottom=46)


def _canvas(title: str):
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width=str(W), height=str(H),
                     viewBox=f"0 0 {W} {H}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(W), height=str(H), fill="white")
    t = ET.SubElement(svg, "text", x=str(W / 2), y="20",
                      attrib={"text-anchor": "middle", "font-size": "14",
                              "font-family": "sans-serif", "font-weight": "bold"})
    t.text = title
    return svg


def _plot_area():
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1, y1 = W - MARGIN["right"], H - MARGIN["bottom"]
    return x0, y0, x1, y1


def _scales(xs, ys):
    x0, y0, x1, y1 = _plot_area()
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    if xmax == xmin:
        xmax = xmin + 1
    if ymax == ymin:
        ymax = ymin + 1

    def sx(v):
        return x0 + (v - xmin) / (xmax - xmin) * (x1 - x0)

    def sy(v):
        return y1 - (v - ymin) / (ymax - ymin) * (y1 - y0)

    return sx, sy, (xmin, xmax, ymin, ymax)


def _axes(svg, sx, sy, lims, xlabel, ylabel):
    x0, y0, x1, y1 = _plot_area()
    xmin, xmax, ymin, ymax = lims
    ET.SubElement(svg, "line", x1=str(x0), y1=str(y1), x2=str(x1), y2=str(y1),
                  stroke="black")
    ET.SubElement(svg, "line", x1=str(x0), y1=str(y0), x2=str(x0), y2=str(y1),
                  stroke="black")
    for i in range(5):
        xv = xmin + (xmax - xmin) * i / 4
        yv = ymin + (ymax - ymin) * i / 4
        tx = ET.SubElement(svg, "text", x=str(sx(xv)), y=str(y1 + 16),
                           attrib={"text-anchor": "middle", "font-size": "10",
                                   "font-family": "sans-serif"})
        tx.text = f"{xv:.3g}"
        ty = ET.SubElement(svg, "text", x=str(x0 - 6), y=str(sy(yv) + 3),
                           attrib={"text-anchor": "end", "font-size": "10",
                                   "font-family": "sans-serif"})
        ty.text = f"{yv:.3g}"
    lx = ET.SubElement(svg, "text", x=str((x0 + x1) / 2), y=str(H - 10),
                       attrib={"text-anchor": "middle", "font-size": "11",
                               "font-family": "sans-serif"})
    lx.text = xlabel
    ly = ET.SubElement(svg, "text", x="14", y=str((y0 + y1) / 2),
                       attrib={"text-anchor": "middle", "font-size": "11",
                               "font-family": "sans-serif",
                               "transform": f"rotate(-90 14 {(y0 + y1) / 2})"})
    ly.text = ylabel


def _legend(svg, labels_colors, dashed=()):
    x = MARGIN["left"] + 8
    y = MARGIN["top"] + 6
    for i, (label, color) in enumerate(labels_colors):
        yy = y + i * 14
        ET.SubElement(svg, "line", x1=str(x), y1=str(yy), x2=str(x + 18), y2=str(yy),
                      stroke=color, attrib={"stroke-width": "2",
                                            "stroke-dasharray": "4 3" if label in dashed else "none"})
        t = ET.SubElement(svg, "text", x=str(x + 24), y=str(yy + 3),
                          attrib={"font-size": "10", "font-family": "sans-serif"})
        t.text = label
    return svg


def _write(svg, path):
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)


def stacked_area_chart(xs, series: dict, path, title: str, xlabel: str) -> None:
    """Stacked fractions over x; series maps label -> list of values."""
    svg = _canvas(title)
    sx, sy, lims = _scales(xs, [0.0, 1.0])
    labels = list(series)
    base = [0.0] * len(xs)
    colors = []
    for i, label in enumerate(labels):
        top = [b + v for b, v in zip(base, series[label])]
        pts = [(sx(x), sy(v)) for x, v in zip(xs, top)]
        pts += [(sx(x), sy(v)) for x, v in zip(reversed(xs), reversed(base))]
        color = PALETTE[i % len(PALETTE)]
        colors.append((label, color))
        ET.SubElement(svg, "polygon",
                      points=" ".join(f"{px:.2f},{py:.2f}" for px, py in pts),
                      fill=color, attrib={"fill-opacity": "0.75", "stroke": "none"})
        base = top
    _axes(svg, sx, sy, lims, xlabel, "fraction of outputs")
    _legend(svg, colors)
    _write(svg, path)


def line_chart(xs, series: dict, path, title: str, xlabel: str, ylabel: str,
               dashed=()) -> None:
    svg = _canvas(title)
    ys = [v for vals in series.values() for v in vals if v is not None]
    if not ys:
        ys = [0.0, 1.0]
    sx, sy, lims = _scales(xs, ys)
    colors = []
    for i, (label, vals) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        colors.append((label, color))
        pts = [(sx(x), sy(v)) for x, v in zip(xs, vals) if v is not None]
        if not pts:
            continue
        ET.SubElement(svg, "polyline",
                      points=" ".join(f"{px:.2f},{py:.2f}" for px, py in pts),
                      fill="none", stroke=color,
                      attrib={"stroke-width": "1.8",
                              "stroke-dasharray": "4 3" if label in dashed else "none"})
    _axes(svg, sx, sy, lims, xlabel, ylabel)
    _legend(svg, colors, dashed=set(dashed))
    _write(svg, path)


def _heat_color(v, vmin, vmax, diverging=True):
    if diverging:
        m = max(abs(vmin), abs(vmax)) or 1.0
        t = max(-1.0, min(1.0, v / m))
        if t >= 0:
            r, g, b = 255, int(255 * (1 - t)), int(255 * (1 - t))
        else:
            r, g, b = int(255 * (1 + t)), int(255 * (1 + t)), 255
    else:
        t = 0.0 if vmax == vmin else (v - vmin) / (vmax - vmin)
        r = int(255 * (1 - 0.8 * t))
        g = int(255 * (1 - 0.45 * t))
        b = 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix, row_labels, col_labels, path, title: str,
            diverging: bool = True, cell_text: bool = False,
            diag_marks=None) -> None:
    """Grid heatmap; diag_marks optionally overrides the diagonal values
    (used to show repetition accuracy on a translation matrix)."""
    svg = _canvas(title)
    x0, y0, x1, y1 = _plot_area()
    rows, cols = len(matrix), len(matrix[0]) if matrix else 0
    vals = [v for row in matrix for v in row if v is not None]
    if diag_marks is not None:
        vals += [v for v in diag_marks if v is not None]
    vmin, vmax = (min(vals), max(vals)) if vals else (0.0, 1.0)
    cw, ch = (x1 - x0) / max(cols, 1), (y1 - y0) / max(rows, 1)
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            if diag_marks is not None and i == j:
                v = diag_marks[i]
            if v is None:
                fill = "#eeeeee"
            else:
                fill = _heat_color(v, vmin, vmax, diverging)
            cell = ET.SubElement(svg, "rect", x=f"{x0 + j * cw:.2f}", y=f"{y0 + i * ch:.2f}",
                                 width=f"{cw:.2f}", height=f"{ch:.2f}", fill=fill,
                                 stroke="#dddddd")
            if diag_marks is not None and i == j:
                cell.set("stroke", "#333333")
                cell.set("stroke-dasharray", "3 2")
            if cell_text and v is not None and rows <= 16 and cols <= 16:
                t = ET.SubElement(svg, "text", x=f"{x0 + (j + 0.5) * cw:.2f}",
                                  y=f"{y0 + (i + 0.5) * ch + 3:.2f}",
                                  attrib={"text-anchor": "middle", "font-size": "9",
                                          "font-family": "sans-serif"})
                t.text = f"{v:.2f}"
    for j, lab in enumerate(col_labels):
        t = ET.SubElement(svg, "text", x=f"{x0 + (j + 0.5) * cw:.2f}", y=str(y1 + 14),
                          attrib={"text-anchor": "middle", "font-size": "9",
                                  "font-family": "sans-serif"})
        t.text = str(lab)
    for i, lab in enumerate(row_labels):
        t = ET.SubElement(svg, "text", x=str(x0 - 4), y=f"{y0 + (i + 0.5) * ch + 3:.2f}",
                          attrib={"text-anchor": "end", "font-size": "9",
                                  "font-family": "sans-serif"})
        t.text = str(lab)
    _write(svg, path)
