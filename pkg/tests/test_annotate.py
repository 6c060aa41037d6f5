import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavcrowd.annotate import (
    DEFAULT_GAP_PX,
    GroupBox,
    MIN_COMPONENT_AREA,
    PixelComponent,
    components_of_mask,
    extract_components,
    merge_groups,
    overlay,
)
from uavcrowd.render import Image, InvalidInputError, PALETTE, RenderPass
from uavcrowd.rng import Rng

KEY = PALETTE.agent


def _seg_image(mask):
    h, w = mask.shape
    pixels = np.zeros((h, w, 3), dtype=np.uint8)
    pixels[mask] = KEY
    return Image(w, h, RenderPass.SEGMENTATION, pixels)


def _rgb_image(h, w, fill=10):
    return Image(w, h, RenderPass.RGB, np.full((h, w, 3), fill, dtype=np.uint8))


# -- oracle: naive stack-based flood fill over pixel sets ----------------------

def _oracle_components(mask):
    h, w = mask.shape
    remaining = {(y, x) for y, x in zip(*np.nonzero(mask))}
    comps = []
    while remaining:
        seed = min(remaining)
        stack = [seed]
        remaining.discard(seed)
        pixels = {seed}
        while stack:
            y, x = stack.pop()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    p = (y + dy, x + dx)
                    if p in remaining:
                        remaining.discard(p)
                        pixels.add(p)
                        stack.append(p)
        ys = [p[0] for p in pixels]
        xs = [p[1] for p in pixels]
        if len(pixels) >= MIN_COMPONENT_AREA:
            comps.append(
                PixelComponent(
                    pixel_count=len(pixels),
                    bbox=(min(xs), min(ys), max(xs), max(ys)),
                )
            )
    comps.sort(key=lambda c: (c.bbox[1], c.bbox[0]))
    return comps


def _oracle_merge(comps, gap):
    """Repeated pairwise merging until fixpoint."""
    def boxes_touch(a, b):
        return (
            a[0] - gap <= b[2] + gap and b[0] - gap <= a[2] + gap
            and a[1] - gap <= b[3] + gap and b[1] - gap <= a[3] + gap
        )

    clusters = [([c], c.bbox) for c in comps]
    changed = True
    while changed:
        changed = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                # clusters touch when any original member boxes touch
                if any(
                    boxes_touch(a.bbox, b.bbox)
                    for a in clusters[i][0]
                    for b in clusters[j][0]
                ):
                    members = clusters[i][0] + clusters[j][0]
                    xs0, ys0, xs1, ys1 = zip(*(m.bbox for m in members))
                    merged = (members, (min(xs0), min(ys0), max(xs1), max(ys1)))
                    clusters = [
                        c for k, c in enumerate(clusters) if k not in (i, j)
                    ] + [merged]
                    changed = True
                    break
            if changed:
                break
    out = [GroupBox(bbox=bb, component_count=len(ms)) for ms, bb in clusters]
    out.sort(key=lambda b: (b.bbox[1], b.bbox[0]))
    return out


def test_empty_image_yields_no_components():
    assert extract_components(_seg_image(np.zeros((8, 8), dtype=bool))) == []


def test_filled_rectangle_component():
    mask = np.zeros((40, 30), dtype=bool)
    mask[7:27, 5:15] = True  # 10 wide x 20 tall at (5,7)
    comps = extract_components(_seg_image(mask))
    assert comps == [PixelComponent(pixel_count=200, bbox=(5, 7, 14, 26))]


def test_wrong_pass_rejected():
    with pytest.raises(InvalidInputError):
        extract_components(_rgb_image(8, 8))
    with pytest.raises(InvalidInputError):
        overlay(_seg_image(np.zeros((4, 4), dtype=bool)), [])


def test_small_components_discarded_as_noise():
    mask = np.zeros((10, 10), dtype=bool)
    mask[0, 0] = True
    mask[5, 5:8] = True  # 3 px, still below the minimum area
    assert extract_components(_seg_image(mask)) == []


def test_diagonal_pixels_are_connected():
    mask = np.zeros((8, 8), dtype=bool)
    for i in range(5):
        mask[i, i] = True
    comps = extract_components(_seg_image(mask))
    assert len(comps) == 1
    assert comps[0].pixel_count == 5


def test_components_match_oracle_on_random_masks():
    rng = Rng(314)
    for _ in range(200):
        h = 4 + rng.randrange(40)
        w = 4 + rng.randrange(40)
        density = 0.1 + 0.6 * rng.random()
        mask = np.zeros((h, w), dtype=bool)
        for y in range(h):
            for x in range(w):
                mask[y, x] = rng.random() < density
        assert components_of_mask(mask) == _oracle_components(mask)


@given(st.integers(0, 2**32 - 1))
def test_components_match_oracle_hypothesis(seed):
    rng = Rng(seed)
    h, w = 4 + rng.randrange(16), 4 + rng.randrange(16)
    mask = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            mask[y, x] = rng.random() < 0.45
    assert components_of_mask(mask) == _oracle_components(mask)


def test_merge_empty():
    assert merge_groups([]) == []


def test_merge_bridges_small_gap():
    a = PixelComponent(50, (10, 10, 19, 19))
    b = PixelComponent(50, (25, 10, 34, 19))  # 5 px gap
    boxes = merge_groups([a, b], gap_px=12)
    assert boxes == [GroupBox(bbox=(10, 10, 34, 19), component_count=2)]
    assert boxes == _oracle_merge([a, b], 12)


def test_merge_respects_large_gap():
    a = PixelComponent(50, (10, 10, 19, 19))
    b = PixelComponent(50, (60, 10, 69, 19))  # 40 px gap
    boxes = merge_groups([a, b], gap_px=12)
    assert len(boxes) == 2
    assert boxes == _oracle_merge([a, b], 12)


def test_merge_transitive_chain():
    comps = [
        PixelComponent(30, (0, 0, 9, 9)),
        PixelComponent(30, (20, 0, 29, 9)),
        PixelComponent(30, (40, 0, 49, 9)),
    ]
    boxes = merge_groups(comps, gap_px=6)
    assert boxes == [GroupBox(bbox=(0, 0, 49, 9), component_count=3)]


def test_merge_rejects_negative_gap():
    with pytest.raises(InvalidInputError):
        merge_groups([], gap_px=-1)


@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_merge_matches_oracle_and_order_invariant(seed, gap):
    rng = Rng(seed)
    comps = []
    for _ in range(rng.randrange(8)):
        x0, y0 = rng.randrange(100), rng.randrange(100)
        comps.append(
            PixelComponent(
                pixel_count=4 + rng.randrange(50),
                bbox=(x0, y0, x0 + rng.randrange(30), y0 + rng.randrange(30)),
            )
        )
    expected = _oracle_merge(comps, gap)
    assert merge_groups(comps, gap_px=gap) == expected
    shuffled = list(comps)
    rng.shuffle(shuffled)
    assert merge_groups(shuffled, gap_px=gap) == expected


def test_coverage_every_key_pixel_in_exactly_one_box():
    rng = Rng(2718)
    for _ in range(30):
        mask = np.zeros((48, 64), dtype=bool)
        for _ in range(rng.randrange(6)):
            y, x = rng.randrange(40), rng.randrange(56)
            mask[y : y + 2 + rng.randrange(6), x : x + 2 + rng.randrange(6)] = True
        comps = components_of_mask(mask)
        boxes = merge_groups(comps)
        covered = {
            (y, x)
            for y, x in zip(*np.nonzero(mask))
            if any(c.pixel_count >= MIN_COMPONENT_AREA for c in comps)
        }
        for c in comps:
            x0, y0, x1, y1 = c.bbox
            inside = [
                b for b in boxes
                if b.bbox[0] <= x0 and b.bbox[1] <= y0
                and b.bbox[2] >= x1 and b.bbox[3] >= y1
            ]
            assert len(inside) == 1


def test_overlay_empty_is_identity():
    img = _rgb_image(20, 20)
    out = overlay(img, [])
    assert np.array_equal(out.pixels, img.pixels)
    assert out is not img


def test_overlay_changes_exactly_the_perimeter():
    img = _rgb_image(30, 30)
    box = GroupBox(bbox=(5, 8, 20, 18), component_count=1)
    out = overlay(img, [box])
    changed = np.any(out.pixels != img.pixels, axis=2)
    expected = np.zeros((30, 30), dtype=bool)
    for t in (0, 1):
        x0, y0, x1, y1 = 5 + t, 8 + t, 20 - t, 18 - t
        expected[y0, x0 : x1 + 1] = True
        expected[y1, x0 : x1 + 1] = True
        expected[y0 : y1 + 1, x0] = True
        expected[y0 : y1 + 1, x1] = True
    assert np.array_equal(changed, expected)
    assert tuple(out.pixels[8, 5]) == (0, 255, 0)


def test_overlay_idempotent():
    img = _rgb_image(40, 40)
    boxes = [GroupBox(bbox=(3, 3, 30, 20), component_count=2)]
    once = overlay(img, boxes)
    twice = overlay(once, boxes)
    assert np.array_equal(once.pixels, twice.pixels)


def test_overlay_clips_out_of_bounds_box():
    img = _rgb_image(20, 20)
    out = overlay(img, [GroupBox(bbox=(-5, -5, 30, 10), component_count=1)])
    assert out.pixels.shape == img.pixels.shape
    assert tuple(out.pixels[10, 5]) == (0, 255, 0)  # clipped bottom edge drawn


def test_overlay_does_not_mutate_input():
    img = _rgb_image(16, 16)
    before = img.pixels.copy()
    overlay(img, [GroupBox(bbox=(2, 2, 10, 10), component_count=1)])
    assert np.array_equal(img.pixels, before)
