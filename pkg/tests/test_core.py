import colorsys
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrhost.core import (
    Quat,
    Rgba,
    Vec3,
    clamp,
    desaturate,
    fps_color,
    hsv_to_rgb,
    lerp_color,
    palette_color,
)

BLUE = Rgba(0, 0, 1, 1)
RED = Rgba(1, 0, 0, 1)


def test_fps_color_endpoints():
    assert fps_color(72, 30, 72) == Rgba(0, 1, 0, 1)
    assert fps_color(30, 30, 72) == Rgba(1, 0, 0, 1)


def test_fps_color_midpoint_yellow():
    # hue = 120 * (51 - 30) / (72 - 30) = 60 degrees
    c = fps_color(51, 30, 72)
    assert (c.r, c.g, c.b, c.a) == pytest.approx((1.0, 1.0, 0.0, 1.0))


@given(st.floats(0, 360), st.floats(0, 1), st.floats(0, 1))
def test_hsv_matches_colorsys(h, s, v):
    ours = hsv_to_rgb(h, s, v)
    ref = colorsys.hsv_to_rgb((h % 360.0) / 360.0, s, v)
    assert ours == pytest.approx(ref, abs=1e-9)


def _hue(c: Rgba) -> float:
    return colorsys.rgb_to_hsv(c.r, c.g, c.b)[0]


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_fps_color_monotone_hue(f1, f2):
    if f1 > f2:
        f1, f2 = f2, f1
    assert _hue(fps_color(f1)) <= _hue(fps_color(f2)) + 1e-12


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fps_color_clamps(fps):
    assert fps_color(fps) == fps_color(clamp(fps, 30.0, 72.0))


def test_fps_color_rejects_bad_range():
    with pytest.raises(ValueError):
        fps_color(50, 72, 30)


def test_lerp_color():
    assert lerp_color(BLUE, RED, 0) == BLUE
    assert lerp_color(BLUE, RED, 1) == RED
    mid = lerp_color(BLUE, RED, 0.5)
    assert (mid.r, mid.g, mid.b, mid.a) == pytest.approx((0.5, 0.0, 0.5, 1.0))


def test_rgba_clamps_on_construction():
    c = Rgba(-0.5, 1.5, 0.25, 2.0)
    assert (c.r, c.g, c.b, c.a) == (0.0, 1.0, 0.25, 1.0)


def test_palette_distinct_for_first_12():
    colors = [palette_color(i) for i in range(12)]
    assert len(set(colors)) == 12


def test_desaturate_moves_toward_gray():
    c = desaturate(Rgba(1, 0, 0, 1), 1.0)
    assert c.r == pytest.approx(c.g) and c.g == pytest.approx(c.b)
    assert c.a == 1.0


unit_quats = st.builds(
    lambda x, y, z, w: Quat(x, y, z, w).normalized(),
    *(st.floats(-1, 1) for _ in range(3)),
    st.floats(-1, 1).filter(lambda w: abs(w) > 1e-3),
)


@given(unit_quats)
def test_quat_normalize_idempotent(q):
    q1 = q.normalized()
    q2 = q1.normalized()
    assert abs(q1.x - q2.x) < 1e-9
    assert abs(q1.y - q2.y) < 1e-9
    assert abs(q1.z - q2.z) < 1e-9
    assert abs(q1.w - q2.w) < 1e-9


@given(unit_quats)
def test_quat_rotation_preserves_length(q):
    v = Vec3(1.0, 2.0, -3.0)
    assert q.rotate(v).norm() == pytest.approx(v.norm(), rel=1e-9)


def test_yaw_convention():
    # yaw 0 looks along -Z; +90 degrees turns toward -X (right-handed +Y up)
    f0 = Quat.from_yaw(0).forward()
    f90 = Quat.from_yaw(90).forward()
    assert (f0.x, f0.y, f0.z) == pytest.approx((0, 0, -1), abs=1e-12)
    assert (f90.x, f90.y, f90.z) == pytest.approx((-1, 0, 0), abs=1e-12)


def test_quat_angle_to():
    a = Quat.from_yaw(0)
    b = Quat.from_yaw(35)
    assert a.angle_to(b) == pytest.approx(35.0, abs=1e-9)
    # q and -q are the same rotation
    neg = Quat(-b.x, -b.y, -b.z, -b.w)
    assert a.angle_to(neg) == pytest.approx(35.0, abs=1e-9)


def test_vec3_basics():
    a = Vec3(1, 2, 3)
    b = Vec3(4, 5, 6)
    assert a + b == Vec3(5, 7, 9)
    assert b - a == Vec3(3, 3, 3)
    assert a.dot(b) == 32
    assert a.cross(b) == Vec3(-3, 6, -3)
    assert Vec3(3, 4, 0).norm() == 5
    assert Vec3(0, 0, 2).normalized() == Vec3(0, 0, 1)
    with pytest.raises(ValueError):
        Vec3().normalized()
