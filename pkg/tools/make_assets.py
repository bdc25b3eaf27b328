#!/usr/bin/env python3
"""Regenerate the bundled desk-scale assets.

Writes the 43-class catalog mirroring the GTSRB class list, its RGBA sign
templates, a handful of supplementary plates, and procedural equirectangular
HDR environment maps. Output is deterministic; run from the repo root:

    python tools/make_assets.py
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from signsynth.defects import PALETTE_SRGB8, value_noise  # noqa: E402
from signsynth.fileio import write_hdr  # noqa: E402

DATA = ROOT / "src" / "signsynth" / "data"
SS = 4  # supersampling factor
SIZE = 512
C = {k: v + (255,) for k, v in PALETTE_SRGB8.items()}
FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans-Bold.ttf"


def font(px):
    return ImageFont.truetype(FONT, int(px))


class Canvas:
    def __init__(self, w=SIZE, h=SIZE):
        self.w, self.h = w * SS, h * SS
        self.out_size = (w, h)
        self.im = Image.new("RGBA", (self.w, self.h), (0, 0, 0, 0))
        self.d = ImageDraw.Draw(self.im)

    def p(self, x, y):
        """Map unit coordinates (-1..1, y up) to pixels."""
        s = min(self.w, self.h) / 2
        return (self.w / 2 + x * s, self.h / 2 - y * s)

    def s(self, v):
        return v * min(self.w, self.h) / 2

    def poly(self, pts, fill):
        self.d.polygon([self.p(x, y) for x, y in pts], fill=C[fill])

    def circle(self, cx, cy, r, fill):
        x0, y0 = self.p(cx - r, cy + r)
        x1, y1 = self.p(cx + r, cy - r)
        self.d.ellipse([x0, y0, x1, y1], fill=C[fill])

    def ring(self, cx, cy, r, width, fill):
        x0, y0 = self.p(cx - r, cy + r)
        x1, y1 = self.p(cx + r, cy - r)
        self.d.ellipse([x0, y0, x1, y1], outline=C[fill], width=int(self.s(width)))

    def rect(self, x0, y0, x1, y1, fill):
        a = self.p(x0, y1)
        b = self.p(x1, y0)
        self.d.rectangle([a, b], fill=C[fill])

    def line(self, pts, width, fill):
        self.d.line([self.p(x, y) for x, y in pts], fill=C[fill], width=int(self.s(width)), joint="curve")
        for x, y in (pts[0], pts[-1]):
            self.circle(x, y, width / 2, fill)

    def text(self, x, y, txt, size, fill):
        f = font(self.s(size))
        self.d.text(self.p(x, y), txt, fill=C[fill], font=f, anchor="mm")

    def arc_line(self, cx, cy, r, a0, a1, width, fill, n=48):
        pts = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in np.linspace(a0, a1, n)]
        self.line(pts, width, fill)

    def arrow_head(self, x, y, ang, size, fill):
        ux, uy = math.cos(ang), math.sin(ang)
        px, py = -uy, ux
        self.poly([(x + ux * size, y + uy * size), (x + px * size * 0.9, y + py * size * 0.9),
                   (x - px * size * 0.9, y - py * size * 0.9)], fill)

    def save(self, path):
        self.im.resize(self.out_size, Image.Resampling.LANCZOS).save(path)


# -- plate backgrounds ----------------------------------------------------------

TRI_R = 0.98


def tri_pts(r, down=False):
    s = -1 if down else 1
    return [(0, s * r), (-r * math.sin(math.pi / 3) * 1.0, -s * r * 0.5 * 0.98),
            (r * math.sin(math.pi / 3) * 1.0, -s * r * 0.5 * 0.98)]


def prohibitory(cv, inner="white"):
    cv.circle(0, 0, 1.0, "red")
    cv.circle(0, 0, 0.78, inner)


def danger(cv):
    # triangles sit low in the square: shift so the height is centered
    pts = [(0, 0.95), (-1.0, -0.8), (1.0, -0.8)]
    cv.poly(pts, "red")
    inner = [(0, 0.62), (-0.70, -0.62), (0.70, -0.62)]
    cv.poly(inner, "white")


def mandatory(cv):
    cv.circle(0, 0, 1.0, "white")
    cv.circle(0, 0, 0.96, "blue")


def end_disc(cv):
    cv.circle(0, 0, 1.0, "black")
    cv.circle(0, 0, 0.96, "white")


def end_stripes(cv, n=5):
    for k in range(n):
        off = (k - (n - 1) / 2) * 0.07
        # stripe runs along (1, 1) at perpendicular offset off*sqrt(2); keep it inside r = 0.85
        half = math.sqrt(0.85**2 - 2 * off * off) / math.sqrt(2)
        cv.line([(-half + off, -half - off), (half + off, half - off)], 0.025, "black")


# -- pictograms -----------------------------------------------------------------


def car(cv, x, y, s, fill):
    cv.rect(x - 0.5 * s, y - 0.15 * s, x + 0.5 * s, y + 0.2 * s, fill)
    cv.poly([(x - 0.3 * s, y + 0.2 * s), (x - 0.2 * s, y + 0.5 * s), (x + 0.2 * s, y + 0.5 * s),
             (x + 0.3 * s, y + 0.2 * s)], fill)
    cv.circle(x - 0.3 * s, y - 0.18 * s, 0.12 * s, fill)
    cv.circle(x + 0.3 * s, y - 0.18 * s, 0.12 * s, fill)


def truck(cv, x, y, s, fill):
    cv.rect(x - 0.55 * s, y - 0.1 * s, x + 0.25 * s, y + 0.55 * s, fill)
    cv.rect(x + 0.3 * s, y - 0.1 * s, x + 0.6 * s, y + 0.3 * s, fill)
    for cx in (-0.4, -0.1, 0.45):
        cv.circle(x + cx * s, y - 0.15 * s, 0.12 * s, fill)


def person(cv, x, y, s, fill, walking=True):
    cv.circle(x, y + 0.42 * s, 0.1 * s, fill)
    cv.line([(x, y + 0.3 * s), (x, y - 0.05 * s)], 0.09 * s, fill)
    cv.line([(x, y - 0.05 * s), (x - 0.15 * s, y - 0.45 * s)], 0.08 * s, fill)
    cv.line([(x, y - 0.05 * s), (x + 0.18 * s if walking else x + 0.1 * s, y - 0.45 * s)], 0.08 * s, fill)
    cv.line([(x, y + 0.22 * s), (x - 0.2 * s, y + 0.0 * s)], 0.07 * s, fill)
    cv.line([(x, y + 0.22 * s), (x + 0.2 * s, y + 0.05 * s)], 0.07 * s, fill)


def bicycle(cv, x, y, s, fill):
    cv.ring(x - 0.3 * s, y - 0.1 * s, 0.2 * s, 0.05 * s, fill)
    cv.ring(x + 0.3 * s, y - 0.1 * s, 0.2 * s, 0.05 * s, fill)
    cv.line([(x - 0.3 * s, y - 0.1 * s), (x - 0.05 * s, y + 0.15 * s), (x + 0.2 * s, y + 0.15 * s),
             (x + 0.3 * s, y - 0.1 * s)], 0.05 * s, fill)
    cv.line([(x - 0.05 * s, y + 0.15 * s), (x + 0.05 * s, y - 0.1 * s), (x - 0.3 * s, y - 0.1 * s)], 0.05 * s, fill)
    cv.line([(x + 0.2 * s, y + 0.15 * s), (x + 0.15 * s, y + 0.3 * s)], 0.05 * s, fill)


def deer(cv, x, y, s, fill):
    cv.poly([(x - 0.45 * s, y - 0.05 * s), (x + 0.25 * s, y + 0.05 * s), (x + 0.35 * s, y + 0.2 * s),
             (x + 0.5 * s, y + 0.35 * s), (x + 0.42 * s, y + 0.4 * s), (x + 0.2 * s, y + 0.2 * s),
             (x - 0.45 * s, y + 0.12 * s)], fill)
    cv.line([(x - 0.4 * s, y), (x - 0.6 * s, y - 0.3 * s)], 0.06 * s, fill)
    cv.line([(x + 0.2 * s, y), (x + 0.35 * s, y - 0.3 * s)], 0.06 * s, fill)
    cv.line([(x + 0.45 * s, y + 0.4 * s), (x + 0.4 * s, y + 0.6 * s)], 0.04 * s, fill)
    cv.line([(x + 0.45 * s, y + 0.4 * s), (x + 0.6 * s, y + 0.55 * s)], 0.04 * s, fill)


def snowflake(cv, x, y, s, fill):
    for k in range(3):
        a = k * math.pi / 3 + math.pi / 2
        dx, dy = math.cos(a) * s * 0.4, math.sin(a) * s * 0.4
        cv.line([(x - dx, y - dy), (x + dx, y + dy)], 0.06 * s, fill)
        for sgn in (-1, 1):
            bx, by = x + sgn * dx * 0.6, y + sgn * dy * 0.6
            for b in (-0.6, 0.6):
                bb = a + b + (0 if sgn > 0 else math.pi)
                cv.line([(bx, by), (bx + math.cos(bb) * 0.12 * s, by + math.sin(bb) * 0.12 * s)], 0.04 * s, fill)


def up_arrow(cv, x, y, s, fill, width=0.16):
    cv.line([(x, y - 0.45 * s), (x, y + 0.2 * s)], width * s, fill)
    cv.arrow_head(x, y + 0.2 * s, math.pi / 2, 0.28 * s, fill)


# -- class designs --------------------------------------------------------------


def speed(value):
    def draw(cv):
        prohibitory(cv)
        size = 0.78 if len(value) <= 2 else 0.62
        cv.text(0, 0, value, size, "black")
    return draw


def end_speed(value):
    def draw(cv):
        end_disc(cv)
        cv.text(0, 0, value, 0.78, "black")
        end_stripes(cv)
    return draw


def no_passing(cv, left=car):
    prohibitory(cv)
    left(cv, -0.3, -0.05, 0.5, "red")
    car(cv, 0.3, -0.05, 0.5, "black")


def end_no_passing(cv, left=car):
    end_disc(cv)
    left(cv, -0.3, -0.05, 0.5, "black")
    car(cv, 0.3, -0.05, 0.5, "black")
    end_stripes(cv)


def danger_with(pict):
    def draw(cv):
        danger(cv)
        pict(cv)
    return draw


def mand_with(pict):
    def draw(cv):
        mandatory(cv)
        pict(cv)
    return draw


def p_right_of_way(cv):
    cv.rect(-0.05, -0.45, 0.05, 0.35, "black")
    cv.rect(-0.3, -0.12, 0.3, -0.02, "black")


def p_caution(cv):
    cv.rect(-0.055, -0.2, 0.055, 0.35, "black")
    cv.circle(0, -0.38, 0.065, "black")


def p_curve(sign):
    def draw(cv):
        cv.line([(0.1 * sign, -0.5), (0.1 * sign, -0.1)], 0.1, "black")
        cv.arc_line(-0.15 * sign, -0.1, 0.25, 0.0 if sign > 0 else math.pi, math.pi / 2, 0.1, "black")
        cv.arrow_head(-0.15 * sign, 0.15, math.pi if sign > 0 else 0.0, 0.14, "black")
    return draw


def p_double_curve(cv):
    cv.line([(0.1, -0.52), (0.1, -0.35)], 0.09, "black")
    cv.arc_line(-0.05, -0.35, 0.15, 0, math.pi / 2, 0.09, "black")
    cv.arc_line(-0.05, -0.05, 0.15, -math.pi / 2, -math.pi, 0.09, "black")
    cv.line([(-0.2, -0.05), (-0.2, 0.15)], 0.09, "black")
    cv.arrow_head(-0.2, 0.2, math.pi / 2, 0.12, "black")


def p_bumpy(cv):
    pts = [(-0.5 + 0.01 * i, -0.35 + 0.18 * max(0.0, math.sin((i / 100.0) * 2 * math.pi)) ** 1) for i in range(101)]
    cv.line(pts, 0.08, "black")


def p_slippery(cv):
    car(cv, 0, 0.0, 0.45, "black")
    for k, off in enumerate((-0.25, 0.1)):
        pts = [(off + 0.03 * math.sin(t * 12), -0.2 - t * 0.3) for t in np.linspace(0, 1, 30)]
        cv.line([(x + 0.15 * k, y) for x, y in pts], 0.04, "black")


def p_narrows(cv):
    cv.line([(-0.2, -0.5), (-0.2, 0.3)], 0.08, "black")
    cv.line([(0.25, -0.5), (0.25, -0.15), (0.05, 0.05), (0.05, 0.3)], 0.08, "black")


def p_roadwork(cv):
    person(cv, -0.1, -0.05, 0.75, "black")
    cv.poly([(0.1, -0.45), (0.45, -0.45), (0.3, -0.2)], "black")
    cv.line([(-0.1, 0.1), (0.25, -0.3)], 0.05, "black")


def p_signals(cv):
    cv.rect(-0.16, -0.5, 0.16, 0.32, "black")
    cv.circle(0, 0.18, 0.1, "red")
    cv.circle(0, -0.09, 0.1, "yellow")
    cv.circle(0, -0.36, 0.1, "green")


def p_pedestrian(cv):
    person(cv, 0, -0.05, 0.85, "black")


def p_children(cv):
    person(cv, -0.17, -0.05, 0.75, "black")
    person(cv, 0.2, -0.15, 0.55, "black")


def p_bicycle(cv):
    bicycle(cv, 0, -0.1, 0.75, "black")


def p_ice(cv):
    snowflake(cv, 0, -0.1, 0.9, "black")


def p_deer(cv):
    deer(cv, -0.05, -0.25, 0.8, "black")


def m_turn(sign):
    def draw(cv):
        cv.line([(-0.15 * sign, -0.5), (-0.15 * sign, 0.0)], 0.16, "white")
        cv.arc_line(0.05 * sign, 0.0, 0.2, math.pi if sign > 0 else 0.0, math.pi / 2, 0.16, "white")
        cv.arrow_head(0.1 * sign, 0.2, 0.0 if sign > 0 else math.pi, 0.25, "white")
    return draw


def m_ahead(cv):
    up_arrow(cv, 0, 0, 1.0, "white")


def m_straight_or(sign):
    def draw(cv):
        cv.line([(-0.1 * sign, -0.55), (-0.1 * sign, 0.3)], 0.14, "white")
        cv.arrow_head(-0.1 * sign, 0.35, math.pi / 2, 0.22, "white")
        cv.line([(-0.1 * sign, -0.2), (0.25 * sign, 0.05)], 0.14, "white")
        cv.arrow_head(0.28 * sign, 0.07, math.atan2(0.25, 0.35 * sign), 0.22, "white")
    return draw


def m_keep(sign):
    def draw(cv):
        cv.line([(-0.3 * sign, 0.3), (0.2 * sign, -0.2)], 0.16, "white")
        cv.arrow_head(0.25 * sign, -0.25, math.atan2(-1, sign), 0.3, "white")
    return draw


def m_roundabout(cv):
    for k in range(3):
        a0 = k * 2 * math.pi / 3 + 0.35
        cv.arc_line(0, 0, 0.42, a0, a0 + 1.3, 0.13, "white")
        a1 = a0 + 1.45
        cv.arrow_head(0.42 * math.cos(a1), 0.42 * math.sin(a1), a1 + math.pi / 2, 0.17, "white")


def priority_road(cv):
    cv.poly([(0, 1), (1, 0), (0, -1), (-1, 0)], "white")
    cv.poly([(0, 0.93), (0.93, 0), (0, -0.93), (-0.93, 0)], "black")
    cv.poly([(0, 0.9), (0.9, 0), (0, -0.9), (-0.9, 0)], "white")
    cv.poly([(0, 0.6), (0.6, 0), (0, -0.6), (-0.6, 0)], "yellow")


def yield_sign(cv):
    cv.poly([(0, -0.95), (-1.0, 0.8), (1.0, 0.8)], "red")
    cv.poly([(0, -0.58), (-0.68, 0.6), (0.68, 0.6)], "white")


def stop_sign(cv):
    pts_outer = [(math.cos(math.pi / 8 + k * math.pi / 4), math.sin(math.pi / 8 + k * math.pi / 4)) for k in range(8)]
    cv.poly(pts_outer, "white")
    cv.poly([(0.94 * x, 0.94 * y) for x, y in pts_outer], "red")
    cv.text(0, 0, "STOP", 0.48, "white")


def no_vehicles(cv):
    prohibitory(cv)


def trucks_prohibited(cv):
    prohibitory(cv)
    truck(cv, 0, -0.05, 0.75, "black")


def no_entry(cv):
    cv.circle(0, 0, 1.0, "white")
    cv.circle(0, 0, 0.97, "red")
    cv.rect(-0.65, -0.15, 0.65, 0.15, "white")


def end_all(cv):
    end_disc(cv)
    end_stripes(cv, 7)


CLASSES = [
    # id, code, name, group, shape, pole, design, upper, lower
    (0, "274-52", "Speed limit 20", "speed limit", "circle", "vertical_or_horizontal", speed("20"), [], [1002, 1003]),
    (1, "274-53", "Speed limit 30", "speed limit", "circle", "vertical_or_horizontal", speed("30"), [9], [1002, 1003, 1007]),
    (2, "274-55", "Speed limit 50", "speed limit", "circle", "vertical_or_horizontal", speed("50"), [9], [1002, 1003]),
    (3, "274-56", "Speed limit 60", "speed limit", "circle", "vertical_or_horizontal", speed("60"), [], [1002, 1007]),
    (4, "274-57", "Speed limit 70", "speed limit", "circle", "vertical_or_horizontal", speed("70"), [10], [1002, 1003]),
    (5, "274-58", "Speed limit 80", "speed limit", "circle", "vertical_or_horizontal", speed("80"), [9], [1002, 1007]),
    (6, "278-58", "End of speed limit 80", "derestriction", "circle", "vertical_only", end_speed("80"), [], [1004]),
    (7, "274-60", "Speed limit 100", "speed limit", "circle", "vertical_or_horizontal", speed("100"), [9], [1002, 1007]),
    (8, "274-62", "Speed limit 120", "speed limit", "circle", "vertical_or_horizontal", speed("120"), [], [1002, 1003]),
    (9, "276", "No passing", "other prohibitory", "circle", "vertical_or_horizontal", no_passing, [1], [1000, 1001]),
    (10, "277", "No passing for trucks", "other prohibitory", "circle", "vertical_or_horizontal",
     lambda cv: no_passing(cv, truck), [4], [1000, 1003]),
    (11, "102", "Right-of-way at next intersection", "danger", "triangle-up", "vertical_only",
     danger_with(p_right_of_way), [], [1000, 1001]),
    (12, "306", "Priority road", "priority", "diamond", "vertical_only", priority_road, [], [1005, 1006]),
    (13, "205", "Yield", "priority", "triangle-down", "vertical_only", yield_sign, [], [1000, 1005]),
    (14, "206", "Stop", "stop/wait/parking", "octagon", "vertical_only", stop_sign, [], [1001]),
    (15, "250", "No vehicles", "other prohibitory", "circle", "vertical_only", no_vehicles, [], [1003, 1008]),
    (16, "253", "No trucks", "other prohibitory", "circle", "vertical_or_horizontal", trucks_prohibited, [], [1003, 1000]),
    (17, "267", "No entry", "other prohibitory", "circle", "vertical_or_horizontal", no_entry, [], [1008]),
    (18, "101", "General caution", "danger", "triangle-up", "vertical_only", danger_with(p_caution), [], [1000, 1001, 1002]),
    (19, "103-10", "Dangerous curve left", "danger", "triangle-up", "vertical_only", danger_with(p_curve(1)), [], [1000, 1001]),
    (20, "103-20", "Dangerous curve right", "danger", "triangle-up", "vertical_only", danger_with(p_curve(-1)), [], [1000, 1001]),
    (21, "105-10", "Double curve", "danger", "triangle-up", "vertical_only", danger_with(p_double_curve), [], [1000, 1001]),
    (22, "112", "Bumpy road", "danger", "triangle-up", "vertical_only", danger_with(p_bumpy), [], [1000, 1001]),
    (23, "114", "Slippery road", "danger", "triangle-up", "vertical_only", danger_with(p_slippery), [], [1002, 1000]),
    (24, "121-20", "Road narrows on the right", "danger", "triangle-up", "vertical_only", danger_with(p_narrows), [], [1000, 1001]),
    (25, "123", "Road work", "danger", "triangle-up", "vertical_only", danger_with(p_roadwork), [], [1000, 1001, 1004]),
    (26, "131", "Traffic signals", "danger", "triangle-up", "vertical_only", danger_with(p_signals), [], [1000, 1001]),
    (27, "133-10", "Pedestrians", "danger", "triangle-up", "vertical_only", danger_with(p_pedestrian), [], [1000, 1003]),
    (28, "136-10", "Children crossing", "danger", "triangle-up", "vertical_only", danger_with(p_children), [], [1003, 1000]),
    (29, "138-10", "Bicycles crossing", "danger", "triangle-up", "vertical_only", danger_with(p_bicycle), [], [1000, 1001]),
    (30, "101-51", "Beware of ice/snow", "danger", "triangle-up", "vertical_only", danger_with(p_ice), [], [1000, 1001]),
    (31, "142-10", "Wild animals crossing", "danger", "triangle-up", "vertical_only", danger_with(p_deer), [], [1000, 1001]),
    (32, "282", "End of all speed and passing limits", "derestriction", "circle", "vertical_only", end_all, [], [1004]),
    (33, "209-20", "Turn right ahead", "driving lane control", "circle", "vertical_or_horizontal", mand_with(m_turn(1)), [], [1008]),
    (34, "209-10", "Turn left ahead", "driving lane control", "circle", "vertical_or_horizontal", mand_with(m_turn(-1)), [], [1008]),
    (35, "209-30", "Ahead only", "driving lane control", "circle", "vertical_or_horizontal", mand_with(m_ahead), [], [1008]),
    (36, "214-20", "Go straight or right", "driving lane control", "circle", "vertical_or_horizontal",
     mand_with(m_straight_or(1)), [], [1008]),
    (37, "214-10", "Go straight or left", "driving lane control", "circle", "vertical_or_horizontal",
     mand_with(m_straight_or(-1)), [], [1008]),
    (38, "222-20", "Keep right", "driving lane control", "circle", "vertical_only", mand_with(m_keep(1)), [], [1008]),
    (39, "222-10", "Keep left", "driving lane control", "circle", "vertical_only", mand_with(m_keep(-1)), [], [1008]),
    (40, "215", "Roundabout mandatory", "driving lane control", "circle", "vertical_only", mand_with(m_roundabout), [], [1000]),
    (41, "280", "End of no passing", "derestriction", "circle", "vertical_only", end_no_passing, [], [1004]),
    (42, "281", "End of no passing by trucks", "derestriction", "circle", "vertical_only",
     lambda cv: end_no_passing(cv, truck), [], [1004]),
]

SUPPLEMENTARY = [
    (1000, "1004-30", "Distance 100 m", "100 m"),
    (1001, "1004-31", "Distance 200 m", "200 m"),
    (1002, "1052-36", "When wet", "NASS"),
    (1003, "1040-30", "Time window", "7-19 h"),
    (1004, "1012-31", "End", "ENDE"),
    (1005, "1000-10", "Arrow left", "<-"),
    (1006, "1000-20", "Arrow right", "->"),
    (1007, "1048-12", "Trucks only", "LKW"),
    (1008, "1022-10", "Bicycles free", "FREI"),
]


def draw_supplementary(label):
    cv = Canvas(SIZE, SIZE // 2)
    cv.d.rectangle([0, 0, cv.w - 1, cv.h - 1], fill=C["black"])
    b = int(0.02 * cv.h)
    cv.d.rectangle([b, b, cv.w - 1 - b, cv.h - 1 - b], fill=C["white"])
    if label in ("<-", "->"):
        sgn = -1 if label == "<-" else 1
        cv.line([(-0.8 * sgn, 0), (0.6 * sgn, 0)], 0.16, "black")
        cv.arrow_head(0.75 * sgn, 0, 0 if sgn > 0 else math.pi, 0.35, "black")
    else:
        cv.text(0, 0, label, 0.85 if len(label) <= 4 else 0.7, "black")
    return cv


def build_templates():
    tdir = DATA / "templates"
    tdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for cid, code, name, group, shape, pole, design, upper, lower in CLASSES:
        cv = Canvas()
        design(cv)
        fname = f"class_{cid:03d}.png"
        cv.save(tdir / fname)
        entries.append({
            "id": cid, "code": code, "name": name, "group": group, "shape": shape, "pole_constraint": pole,
            "template": f"templates/{fname}",
            "physical_diameter_m": 0.9 if shape.startswith("triangle") else 0.6,
            "companions_upper": upper, "companions_lower": lower,
        })
    supp = []
    for sid, code, name, label in SUPPLEMENTARY:
        cv = draw_supplementary(label)
        fname = f"supp_{sid}.png"
        cv.save(tdir / fname)
        supp.append({
            "id": sid, "code": code, "name": name, "group": "additional road", "shape": "rectangle",
            "pole_constraint": "vertical_only", "template": f"templates/{fname}",
            "physical_diameter_m": 0.6, "companions_upper": [], "companions_lower": [],
        })
    doc = {"schema_version": 1, "version": "gtsrb43-desk-1", "classes": entries, "supplementary": supp}
    (DATA / "catalog_gtsrb43.json").write_text(json.dumps(doc, indent=1) + "\n")


# -- environment maps -----------------------------------------------------------

W, H = 512, 256


def fbm(w, h, freq, rng, octaves=5):
    total = np.zeros((h, w))
    amp, norm = 1.0, 0.0
    for o in range(octaves):
        f = freq * 2**o
        lat = rng.random((int(math.ceil(f * h / w)) + 2, int(math.ceil(f)) + 2))
        lat[:, -2:] = lat[:, :2]  # rough horizontal wrap
        total += amp * value_noise(w, h, f, lat)
        norm += amp
        amp *= 0.5
    return total / norm


def sky_map(seed, zenith, horizon, ground, sun_elev_deg=None, sun_az_deg=0.0, sun_irradiance=0.0,
            sun_color=(1.0, 0.95, 0.88), clouds=0.0, cloud_color=(1.0, 1.0, 1.0), treeline=0.0,
            treeline_color=(0.05, 0.07, 0.04), sun_radius_deg=0.9):
    rng = np.random.default_rng(seed)
    theta = (np.arange(H) + 0.5) / H * math.pi
    phi = (np.arange(W) + 0.5) / W * 2 * math.pi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    elev = math.pi / 2 - th
    zen, hor, gnd = (np.array(c, dtype=np.float64) for c in (zenith, horizon, ground))
    t = np.clip(elev / (math.pi / 2), 0, 1)[..., None] ** 0.5
    img = hor * (1 - t) + zen * t
    gnoise = fbm(W, H, 24, rng)[..., None]
    below = (elev < 0)[..., None]
    depth = np.clip(-elev / 0.3, 0, 1)[..., None]
    ground_col = gnd * (0.7 + 0.6 * gnoise) * (1 - 0.3 * depth) + hor * 0.3 * (1 - depth)
    img = np.where(below, ground_col, img)
    if clouds > 0:
        cn = fbm(W, H, 6, rng)
        cover = np.clip((cn - (1 - clouds)) / 0.15, 0, 1) * (elev > 0.02)
        img = img * (1 - cover[..., None]) + np.array(cloud_color) * cover[..., None] * (0.6 + 0.4 * cn[..., None])
    if treeline > 0:
        prof = fbm(W, 1, 10, rng, octaves=4)[0]
        top = treeline * (0.4 + 0.9 * prof)
        mask = (elev >= -0.01) & (elev < top[None, :])
        tn = fbm(W, H, 40, rng)[..., None]
        img = np.where(mask[..., None], np.array(treeline_color) * (0.6 + 0.8 * tn), img)
    if sun_elev_deg is not None and sun_irradiance > 0:
        se, sa = math.radians(sun_elev_deg), math.radians(sun_az_deg)
        sd = np.array([math.cos(se) * math.cos(sa), math.cos(se) * math.sin(sa), math.sin(se)])
        dirs = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)
        ang = np.arccos(np.clip(dirs @ sd, -1, 1))
        r = math.radians(sun_radius_deg)
        # circumsolar glow
        img = img + 0.3 * np.array(sun_color) * np.exp(-ang / 0.15)[..., None] * (elev > -0.05)[..., None]
        disc = ang < r
        omega = math.pi * r * r
        img = np.where(disc[..., None], np.array(sun_color) * (sun_irradiance / omega), img)
    return img.astype(np.float32)


ENVMAPS = {
    "noon_clear": dict(seed=1, zenith=(0.35, 0.55, 1.1), horizon=(0.9, 1.0, 1.15), ground=(0.25, 0.24, 0.2),
                       sun_elev_deg=62, sun_az_deg=200, sun_irradiance=12.0, treeline=0.06),
    "morning_clear": dict(seed=2, zenith=(0.3, 0.45, 0.9), horizon=(0.95, 0.85, 0.8), ground=(0.18, 0.2, 0.12),
                          sun_elev_deg=22, sun_az_deg=80, sun_irradiance=8.0, sun_color=(1.0, 0.85, 0.7),
                          treeline=0.12),
    "sunset": dict(seed=3, zenith=(0.15, 0.18, 0.4), horizon=(0.9, 0.45, 0.2), ground=(0.08, 0.07, 0.06),
                   sun_elev_deg=4, sun_az_deg=280, sun_irradiance=4.0, sun_color=(1.0, 0.55, 0.25), clouds=0.3,
                   cloud_color=(0.9, 0.5, 0.3)),
    "overcast": dict(seed=4, zenith=(0.9, 0.92, 0.95), horizon=(0.75, 0.76, 0.78), ground=(0.2, 0.2, 0.19),
                     clouds=0.0, treeline=0.08),
    "broken_clouds": dict(seed=5, zenith=(0.3, 0.5, 1.0), horizon=(0.85, 0.9, 1.0), ground=(0.2, 0.22, 0.15),
                          sun_elev_deg=40, sun_az_deg=140, sun_irradiance=10.0, clouds=0.45,
                          cloud_color=(1.1, 1.1, 1.1)),
    "dusk": dict(seed=6, zenith=(0.01, 0.015, 0.05), horizon=(0.06, 0.05, 0.07), ground=(0.01, 0.01, 0.01),
                 treeline=0.1, treeline_color=(0.003, 0.003, 0.004)),
    "night_streetlight": dict(seed=7, zenith=(0.001, 0.0012, 0.003), horizon=(0.004, 0.0035, 0.003),
                              ground=(0.002, 0.002, 0.002), sun_elev_deg=28, sun_az_deg=300, sun_irradiance=0.08,
                              sun_color=(1.0, 0.7, 0.35), sun_radius_deg=1.5),
    "forest_road": dict(seed=8, zenith=(0.4, 0.55, 0.9), horizon=(0.7, 0.8, 0.8), ground=(0.12, 0.13, 0.08),
                        sun_elev_deg=48, sun_az_deg=20, sun_irradiance=7.0, treeline=0.45,
                        treeline_color=(0.04, 0.07, 0.03)),
    "hazy_urban": dict(seed=9, zenith=(0.6, 0.65, 0.75), horizon=(0.85, 0.85, 0.82), ground=(0.22, 0.21, 0.2),
                       sun_elev_deg=35, sun_az_deg=240, sun_irradiance=5.0, sun_color=(1.0, 0.92, 0.8),
                       treeline=0.15, treeline_color=(0.25, 0.24, 0.24)),
}


def build_envmaps():
    edir = DATA / "envmaps"
    edir.mkdir(parents=True, exist_ok=True)
    names = []
    for name, params in ENVMAPS.items():
        write_hdr(edir / f"{name}.hdr", sky_map(**params))
        names.append(f"{name}.hdr")
    (edir / "manifest.json").write_text(json.dumps({"maps": names}, indent=1) + "\n")


if __name__ == "__main__":
    build_templates()
    build_envmaps()
    print("assets written to", DATA)
