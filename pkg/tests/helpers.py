"""Independent oracles shared by the test modules."""
from types import SimpleNamespace

import numpy as np


def grid_l1_min(ratios, lo=0.1, hi=10.0, step=1e-4) -> float:
    """Minimum over a grid of sum |s - r_i|, via prefix sums."""
    r = np.sort(np.asarray(ratios, dtype=float))
    grid = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    c = np.searchsorted(r, grid, side="right")
    prefix = np.concatenate([[0.0], np.cumsum(r)])
    below = grid * c - prefix[c]
    above = (prefix[-1] - prefix[c]) - grid * (len(r) - c)
    return float((below + above).min())


def brute_l1_min(ratios, grid):
    r = np.asarray(ratios, dtype=float)
    return float(np.abs(grid[:, None] - r[None, :]).sum(axis=1).min())


def fake_views(pids_by_cam):
    return {cam: SimpleNamespace(tracklets=[SimpleNamespace(person_id=p) for p in pids])
            for cam, pids in pids_by_cam.items()}


def assert_sound(corrs, views, win) -> int:
    """Every match lies inside the forward or reverse window; one-to-one."""
    left = [i for i, _, _ in corrs.pairs]
    right = [j for _, j, _ in corrs.pairs]
    assert len(set(left)) == len(left)
    assert len(set(right)) == len(right)
    va, vb = views[corrs.cam_k], views[corrs.cam_l]
    assert (win.a, win.b) == (corrs.cam_k, corrs.cam_l)
    for i, j, _ in corrs.pairs:
        fwd = vb.first[j] - va.last[i]
        rev = va.first[i] - vb.last[j]
        ok = win.lo_a[i] <= fwd <= win.hi_a[i] or win.lo_b[j] <= rev <= win.hi_b[j]
        assert ok, (corrs.cam_k, corrs.cam_l, i, j, fwd, rev)
    return len(corrs.pairs)


def hungarian_pairs(sim, mask, threshold):
    """Optimal assignment on the candidate graph (scipy oracle)."""
    from scipy.optimize import linear_sum_assignment

    allowed = mask & (sim >= threshold)
    cost = np.where(allowed, -sim, 1e6)
    rows, cols = linear_sum_assignment(cost)
    return sorted((int(i), int(j)) for i, j in zip(rows, cols) if allowed[i, j])
