#!/usr/bin/env python3
"""Generates border.graph: a jittered road lattice north of a border.

Targets cross the border on one of 10 entry edges (y = 0) and head for one
of 7 goal spurs on the far side (y ~ 11 km). Re-running reproduces the
committed file byte for byte.
"""
import random
import sys

COLS = 10
ROWS = 8
DX = 1200.0
DY = 1250.0
Y0 = 1000.0
JITTER = 150.0
DROP = 0.12
GOAL_COLS = [0, 2, 3, 5, 6, 7, 9]


def main(out):
    rng = random.Random(7)
    lines = ["; generated by gen_border_map.py", "#vertices"]
    vid = {}

    def vertex(key, x, y):
        vid[key] = len(vid)
        lines.append(f"{vid[key]} {x:.1f} {y:.1f}")

    for c in range(COLS):
        vertex(("border", c), c * DX, 0.0)
    for r in range(ROWS):
        for c in range(COLS):
            x = c * DX + rng.uniform(-JITTER, JITTER)
            y = Y0 + r * DY + rng.uniform(-JITTER, JITTER)
            vertex((r, c), x, y)
    top = Y0 + (ROWS - 1) * DY
    for c in GOAL_COLS:
        vertex(("sink", c), c * DX, top + 1250.0)

    edges = []
    for c in range(COLS):
        edges.append((("border", c), (0, c)))
    for r in range(ROWS):
        for c in range(COLS):
            if c + 1 < COLS and (r in (0, ROWS - 1) or rng.random() > DROP):
                edges.append(((r, c), (r, c + 1)))
                edges.append(((r, c + 1), (r, c)))
            if r + 1 < ROWS and rng.random() > DROP:
                edges.append(((r, c), (r + 1, c)))
                edges.append(((r + 1, c), (r, c)))
    goal_edges = []
    for c in GOAL_COLS:
        goal_edges.append(len(edges))
        edges.append(((ROWS - 1, c), ("sink", c)))

    lines.append("#edges")
    for i, (a, b) in enumerate(edges):
        lines.append(f"{i} {vid[a]} {vid[b]}")
    lines.append("#entries")
    lines.extend(str(i) for i in range(COLS))
    lines.append("#goals")
    lines.extend(f"{g} {e}" for g, e in enumerate(goal_edges))

    assert len(GOAL_COLS) == 7 and COLS == 10
    with open(out, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "border.graph")
