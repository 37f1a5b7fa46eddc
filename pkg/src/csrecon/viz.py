"""Deterministic SVG figures: CS scatters, workspace views, planner trees.

Every coordinate is written with fixed precision and elements follow input
order, so the same data always serializes to the same bytes.
"""

import numpy as np

from .scene import RobotArm, Scenario, forward_kinematics


class VizError(ValueError):
    """Bad figure arguments."""


def _fmt(v: float) -> str:
    return f"{float(v):.3f}"


def svg_document(size: int, body: list) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


class _Frame:
    """Maps a centered square [-half, half]^2 to pixel coordinates."""

    def __init__(self, half: float, size: int, margin: int = 10):
        if half <= 0 or size <= 2 * margin:
            raise VizError("frame needs positive extent and room inside margins")
        self.half = float(half)
        self.size = int(size)
        self.margin = int(margin)
        self.scale = (size - 2 * margin) / (2.0 * half)

    def x(self, v: float) -> float:
        return self.margin + (float(v) + self.half) * self.scale

    def y(self, v: float) -> float:
        # svg y grows downward
        return self.size - self.margin - (float(v) + self.half) * self.scale

    def r(self, v: float) -> float:
        return float(v) * self.scale


def _dots(frame: _Frame, pts: np.ndarray, color: str, radius: float) -> list:
    out = []
    for x, y in np.asarray(pts, dtype=float):
        out.append(
            f'<circle cx="{_fmt(frame.x(x))}" cy="{_fmt(frame.y(y))}" '
            f'r="{_fmt(radius)}" fill="{color}"/>'
        )
    return out


def _polyline(frame: _Frame, pts: np.ndarray, color: str, width: float) -> str:
    coords = " ".join(
        f"{_fmt(frame.x(x))},{_fmt(frame.y(y))}" for x, y in np.asarray(pts, float)
    )
    return (
        f'<polyline points="{coords}" fill="none" stroke="{color}" '
        f'stroke-width="{_fmt(width)}"/>'
    )


def _border(frame: _Frame) -> str:
    m, s = frame.margin, frame.size
    return (
        f'<rect x="{m}" y="{m}" width="{s - 2 * m}" height="{s - 2 * m}" '
        'fill="white" stroke="black" stroke-width="1"/>'
    )


def render_cs_scatter(
    free: np.ndarray, collision: np.ndarray | None = None, size: int = 360
) -> str:
    """Angle-square scatter: free cloud in blue, colliding cloud in red."""
    frame = _Frame(np.pi, size)
    body = [_border(frame)]
    if collision is not None and len(collision):
        body += _dots(frame, collision, "#d62728", 1.2)
    if free is not None and len(free):
        body += _dots(frame, free, "#1f77b4", 1.2)
    return svg_document(size, body)


def render_workspace(
    arm: RobotArm,
    scenario: Scenario,
    configs: np.ndarray | None = None,
    size: int = 360,
) -> str:
    """Obstacles plus the arm drawn at each config (base at the center)."""
    frame = _Frame(arm.reach * 1.1, size)
    body = [_border(frame)]
    for c in scenario.obstacles:
        body.append(
            f'<circle cx="{_fmt(frame.x(c.center[0]))}" cy="{_fmt(frame.y(c.center[1]))}" '
            f'r="{_fmt(frame.r(c.radius))}" fill="#bbbbbb" stroke="black" '
            'stroke-width="1"/>'
        )
    if configs is not None:
        Q = np.atleast_2d(np.asarray(configs, dtype=float))
        for q in Q:
            link1, link2 = forward_kinematics(arm, q)
            pts = np.array([link1[0], link1[1], link2[1]])
            body.append(_polyline(frame, pts, "#1f77b4", 1.5))
            body += _dots(frame, pts[-1:], "#d62728", 2.5)
    return svg_document(size, body)


def render_tree(tree, path: np.ndarray | None = None, size: int = 360) -> str:
    """Planner tree edges in gray over the angle square; path in red."""
    frame = _Frame(np.pi, size)
    body = [_border(frame)]
    for i in range(1, len(tree.vertices)):
        a = tree.vertices[tree.parents[i]]
        b = tree.vertices[i]
        body.append(_polyline(frame, np.array([a, b]), "#999999", 0.7))
    if len(tree.vertices):
        body += _dots(frame, np.asarray(tree.vertices[:1]), "#2ca02c", 3.0)
    if path is not None and len(path):
        body.append(_polyline(frame, path, "#d62728", 2.0))
        body += _dots(frame, np.asarray(path[-1:]), "#d62728", 3.0)
    return svg_document(size, body)
