"""Image-box, bird's-eye-view and 3D box overlap. Image boxes use continuous coordinates."""

import numpy as np
import numpy.typing as npt

from src.errors import DegenerateBox
from src.geometry import FloatArray
from src.instance import Box3D

BBox2D = tuple[float, float, float, float]

# Points this close outside a clip edge still count as inside.
_CLIP_EPS = 1e-12


def _bbox_area(box: BBox2D) -> float:
    left, top, right, bottom = box
    return max(right - left, 0.0) * max(bottom - top, 0.0)


def iou_2d(a: BBox2D, b: BBox2D) -> float:
    area_a, area_b = _bbox_area(a), _bbox_area(b)
    if area_a <= 0 or area_b <= 0:
        raise DegenerateBox(f"2D boxes need positive area, got {a} and {b}")
    width = min(a[2], b[2]) - max(a[0], b[0])
    height = min(a[3], b[3]) - max(a[1], b[1])
    if width <= 0 or height <= 0:
        return 0.0
    intersection = width * height
    return intersection / (area_a + area_b - intersection)


def polygon_area(polygon: npt.ArrayLike) -> float:
    """Signed shoelace area; positive for counter-clockwise vertex order."""
    p = np.asarray(polygon, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _counter_clockwise(polygon: FloatArray) -> FloatArray:
    return polygon if polygon_area(polygon) >= 0 else polygon[::-1]


def clip_polygon(subject: npt.ArrayLike, clip: npt.ArrayLike) -> FloatArray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex polygon ``clip``.

    Both polygons are reordered counter-clockwise first. Returns an (M, 2) array, possibly empty.
    """
    output = list(_counter_clockwise(np.asarray(subject, dtype=np.float64).reshape(-1, 2)))
    clip_points = _counter_clockwise(np.asarray(clip, dtype=np.float64).reshape(-1, 2))

    for start, end in zip(clip_points, np.roll(clip_points, -1, axis=0)):
        if not output:
            break
        edge = end - start

        def side(p: FloatArray) -> float:
            return float(edge[0] * (p[1] - start[1]) - edge[1] * (p[0] - start[0]))

        candidates, output = output, []
        previous = candidates[-1]
        previous_side = side(previous)
        for current in candidates:
            current_side = side(current)
            if current_side >= -_CLIP_EPS:
                if previous_side < -_CLIP_EPS:
                    t = previous_side / (previous_side - current_side)
                    output.append(previous + t * (current - previous))
                output.append(current)
            elif previous_side >= -_CLIP_EPS:
                t = previous_side / (previous_side - current_side)
                output.append(previous + t * (current - previous))
            previous, previous_side = current, current_side

    return np.array(output, dtype=np.float64).reshape(-1, 2)


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    return max(polygon_area(clip_polygon(a.bev_corners(), b.bev_corners())), 0.0)


def iou_bev(a: Box3D, b: Box3D) -> float:
    intersection = bev_intersection_area(a, b)
    union = a.l * a.w + b.l * b.w - intersection
    return float(np.clip(intersection / union, 0.0, 1.0))


def height_overlap(a: Box3D, b: Box3D) -> float:
    a_low, a_high = a.height_range()
    b_low, b_high = b.height_range()
    return max(min(a_high, b_high) - max(a_low, b_low), 0.0)


def iou_3d(a: Box3D, b: Box3D) -> float:
    intersection = bev_intersection_area(a, b) * height_overlap(a, b)
    union = a.volume + b.volume - intersection
    return float(np.clip(intersection / union, 0.0, 1.0))

