"""Crowd-group bounding boxes derived from segmentation frames.

Pipeline: pixels matching the agent key color are grouped into 8-connected
components, components whose dilated boxes touch are merged transitively into
group boxes, and the boxes can be drawn back onto the RGB frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .render import Image, InvalidInputError, PALETTE, RenderPass

MIN_COMPONENT_AREA = 4
DEFAULT_GAP_PX = 12


@dataclass(frozen=True)
class PixelComponent:
    pixel_count: int
    bbox: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max inclusive


@dataclass(frozen=True)
class GroupBox:
    bbox: tuple[int, int, int, int]
    component_count: int


def extract_components(
    seg: Image, key: tuple[int, int, int] = PALETTE.agent
) -> list[PixelComponent]:
    """8-connected components of pixels exactly equal to ``key``.

    Components smaller than MIN_COMPONENT_AREA pixels are discarded as noise.
    Output is sorted by (y_min, x_min).
    """
    if seg.render_pass is not RenderPass.SEGMENTATION:
        raise InvalidInputError(f"expected segmentation image, got {seg.render_pass.value}")
    mask = np.all(seg.pixels == np.array(key, dtype=np.uint8), axis=2)
    return components_of_mask(mask)


def components_of_mask(mask: np.ndarray) -> list[PixelComponent]:
    """Run-based two-pass labeling: rows decompose into horizontal runs,
    runs touching across adjacent rows (including diagonals) are unioned."""
    h, w = mask.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    d = np.diff(padded, axis=1)
    run_rows, run_starts = np.nonzero(d == 1)
    _end_rows, run_ends = np.nonzero(d == -1)
    run_ends = run_ends - 1  # inclusive last column
    n = len(run_rows)
    if n == 0:
        return []

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    # runs arrive in row-major order; row_first[r] is the index of the first
    # run in row r
    row_first = np.searchsorted(run_rows, np.arange(h + 1))
    rows = run_rows.tolist()
    starts = run_starts.tolist()
    ends = run_ends.tolist()
    for r in range(h - 1):
        i, i_stop = int(row_first[r]), int(row_first[r + 1])
        j, j_stop = int(row_first[r + 1]), int(row_first[r + 2])
        while i < i_stop and j < j_stop:
            if starts[i] <= ends[j] + 1 and starts[j] <= ends[i] + 1:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
            if ends[i] <= ends[j]:
                i += 1
            else:
                j += 1

    acc: dict[int, list[int]] = {}  # root -> [count, x_min, y_min, x_max, y_max]
    for i in range(n):
        root = find(i)
        entry = acc.get(root)
        if entry is None:
            acc[root] = [ends[i] - starts[i] + 1, starts[i], rows[i], ends[i], rows[i]]
        else:
            entry[0] += ends[i] - starts[i] + 1
            if starts[i] < entry[1]:
                entry[1] = starts[i]
            if ends[i] > entry[3]:
                entry[3] = ends[i]
            entry[4] = rows[i]  # rows ascend in run order

    out = [
        PixelComponent(pixel_count=c, bbox=(x0, y0, x1, y1))
        for c, x0, y0, x1, y1 in acc.values()
        if c >= MIN_COMPONENT_AREA
    ]
    out.sort(key=lambda c: (c.bbox[1], c.bbox[0]))
    return out


def _dilated_intersect(a: tuple, b: tuple, gap: int) -> bool:
    return (
        a[0] - gap <= b[2] + gap
        and b[0] - gap <= a[2] + gap
        and a[1] - gap <= b[3] + gap
        and b[1] - gap <= a[3] + gap
    )


def merge_groups(
    comps: list[PixelComponent], gap_px: int = DEFAULT_GAP_PX
) -> list[GroupBox]:
    """Transitive closure of components whose boxes, dilated by ``gap_px`` on
    every side, intersect. Each group box is the tight union of its members."""
    if gap_px < 0:
        raise InvalidInputError(f"gap_px must be non-negative, got {gap_px}")
    n = len(comps)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _dilated_intersect(comps[i].bbox, comps[j].bbox, gap_px):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri

    clusters: dict[int, list[PixelComponent]] = {}
    for i, c in enumerate(comps):
        clusters.setdefault(find(i), []).append(c)

    boxes = []
    for members in clusters.values():
        xs0, ys0, xs1, ys1 = zip(*(m.bbox for m in members))
        boxes.append(
            GroupBox(
                bbox=(min(xs0), min(ys0), max(xs1), max(ys1)),
                component_count=len(members),
            )
        )
    boxes.sort(key=lambda b: (b.bbox[1], b.bbox[0]))
    return boxes


OVERLAY_COLOR = (0, 255, 0)
OVERLAY_THICKNESS = 2


def overlay(rgb: Image, boxes: list[GroupBox]) -> Image:
    """New RGB image with 2-px green rectangles drawn on the group boxes.
    Boxes partially outside the frame are clipped."""
    if rgb.render_pass is not RenderPass.RGB:
        raise InvalidInputError(f"expected rgb image, got {rgb.render_pass.value}")
    pixels = rgb.pixels.copy()
    color = np.array(OVERLAY_COLOR, dtype=np.uint8)
    h, w = rgb.height, rgb.width
    for box in boxes:
        x0, y0, x1, y1 = box.bbox
        for t in range(OVERLAY_THICKNESS):
            xa, ya, xb, yb = x0 + t, y0 + t, x1 - t, y1 - t
            if xa > xb or ya > yb:
                break
            cxa, cxb = max(0, xa), min(w - 1, xb)
            cya, cyb = max(0, ya), min(h - 1, yb)
            if cxa > cxb or cya > cyb:
                continue
            if 0 <= ya < h:
                pixels[ya, cxa : cxb + 1] = color
            if 0 <= yb < h:
                pixels[yb, cxa : cxb + 1] = color
            if 0 <= xa < w:
                pixels[cya : cyb + 1, xa] = color
            if 0 <= xb < w:
                pixels[cya : cyb + 1, xb] = color
    return Image(rgb.width, rgb.height, RenderPass.RGB, pixels)


def annotation_record(tick: int, boxes: list[GroupBox]) -> dict:
    """Per-frame annotation document."""
    return {
        "tick": tick,
        "boxes": [
            {
                "x_min": b.bbox[0],
                "y_min": b.bbox[1],
                "x_max": b.bbox[2],
                "y_max": b.bbox[3],
                "component_count": b.component_count,
            }
            for b in boxes
        ],
    }
