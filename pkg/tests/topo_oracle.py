"""Independent Betti-number oracle used by persistence and acceptance tests.

Computes beta_0 / beta_1 of the complex at a given scale directly from GF(2)
ranks of the boundary operators, with its own elimination routine; no shared
code with the reduction under test.
"""

from itertools import combinations


def gf2_rank(rows):
    rows = [r for r in rows if r]
    rank = 0
    while rows:
        pivot = rows.pop()
        if pivot == 0:
            continue
        rank += 1
        low = pivot.bit_length() - 1
        rows = [(r ^ pivot) if (r >> low) & 1 else r for r in rows]
    return rank


def betti_by_rank(filt, alpha):
    """(beta_0, beta_1) of the subcomplex with appearance values <= alpha."""
    verts = [s for s in filt.simplices if s[1] == 0]
    edges = [s for s in filt.simplices if s[1] == 1 and s[0] <= alpha]
    tris = [s for s in filt.simplices if s[1] == 2 and s[0] <= alpha]
    vix = {v[2][0]: i for i, v in enumerate(verts)}
    eix = {e[2]: i for i, e in enumerate(edges)}
    d1 = [(1 << vix[e[2][0]]) | (1 << vix[e[2][1]]) for e in edges]
    d2 = []
    for t in tris:
        col = 0
        for face in combinations(t[2], 2):
            col ^= 1 << eix[face]
        d2.append(col)
    r1, r2 = gf2_rank(d1), gf2_rank(d2)
    return len(verts) - r1, (len(edges) - r1) - r2


def betti_curve_midpoints(filt):
    """Midpoints between consecutive appearance values, clipped to the range."""
    vals = sorted({s[0] for s in filt.simplices} | {filt.alpha_max})
    return [(a + b) / 2 for a, b in zip(vals[:-1], vals[1:]) if b > a]
