"""Gradient-boosting hot kernels with two interchangeable backends.

The loop-oriented implementations below are JIT-compiled with numba when it
is importable and the REGENCI_NUMBA environment variable is not set to a
falsy value; otherwise vectorized numpy fallbacks run. Both backends consume
the same pre-sorted feature order and accumulate partial sums in the same
sequence, so they produce identical trees. `benchmarks/bench_kernels.py`
times one against the other.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    value = os.environ.get("REGENCI_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "off", "no")


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "numpy"

_HESS_FLOOR = 1e-16


def _boost_fit_loops(X, z, order, n_rounds, max_depth, learning_rate,
                     min_child_weight, gamma, lam, base_margin):
    n, p = X.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feat = np.full((n_rounds, max_nodes), -1, np.int64)
    thr = np.zeros((n_rounds, max_nodes))
    left = np.full((n_rounds, max_nodes), -1, np.int64)
    right = np.full((n_rounds, max_nodes), -1, np.int64)
    leaf = np.zeros((n_rounds, max_nodes))

    margin = np.full(n, base_margin)
    g = np.empty(n)
    h = np.empty(n)
    node_of = np.empty(n, np.int64)
    node_g = np.empty(max_nodes)
    node_h = np.empty(max_nodes)
    run_g = np.empty(max_nodes)
    run_h = np.empty(max_nodes)
    prev_val = np.empty(max_nodes)
    seen = np.empty(max_nodes, np.bool_)
    best_gain = np.empty(max_nodes)
    best_feat = np.empty(max_nodes, np.int64)
    best_thr = np.empty(max_nodes)

    for r in range(n_rounds):
        for i in range(n):
            m = margin[i]
            if m >= 0.0:
                prob = 1.0 / (1.0 + np.exp(-m))
            else:
                e = np.exp(m)
                prob = e / (1.0 + e)
            g[i] = prob - z[i]
            hv = prob * (1.0 - prob)
            h[i] = hv if hv > _HESS_FLOOR else _HESS_FLOOR
            node_of[i] = 0

        node_g[0] = 0.0
        node_h[0] = 0.0
        for i in range(n):
            node_g[0] += g[i]
            node_h[0] += h[i]
        n_nodes = 1
        level_lo = 0
        level_hi = 1

        for _depth in range(max_depth):
            for nd in range(level_lo, level_hi):
                best_gain[nd] = 0.0
                best_feat[nd] = -1
                best_thr[nd] = 0.0
            for j in range(p):
                for nd in range(level_lo, level_hi):
                    run_g[nd] = 0.0
                    run_h[nd] = 0.0
                    seen[nd] = False
                for k in range(n):
                    i = order[j, k]
                    nd = node_of[i]
                    if nd < level_lo or nd >= level_hi:
                        continue
                    v = X[i, j]
                    if seen[nd] and v > prev_val[nd]:
                        hl = run_h[nd]
                        hr = node_h[nd] - hl
                        if hl >= min_child_weight and hr >= min_child_weight:
                            gl = run_g[nd]
                            gr = node_g[nd] - gl
                            gain = 0.5 * (
                                gl * gl / (hl + lam)
                                + gr * gr / (hr + lam)
                                - node_g[nd] * node_g[nd] / (node_h[nd] + lam)
                            ) - gamma
                            if gain > best_gain[nd]:
                                best_gain[nd] = gain
                                best_feat[nd] = j
                                best_thr[nd] = v  # split rule: go left iff x < v
                    run_g[nd] += g[i]
                    run_h[nd] += h[i]
                    prev_val[nd] = v
                    seen[nd] = True

            any_split = False
            for nd in range(level_lo, level_hi):
                if best_feat[nd] >= 0 and best_gain[nd] > 0.0:
                    feat[r, nd] = best_feat[nd]
                    thr[r, nd] = best_thr[nd]
                    left[r, nd] = n_nodes
                    right[r, nd] = n_nodes + 1
                    node_g[n_nodes] = 0.0
                    node_h[n_nodes] = 0.0
                    node_g[n_nodes + 1] = 0.0
                    node_h[n_nodes + 1] = 0.0
                    n_nodes += 2
                    any_split = True
                else:
                    leaf[r, nd] = -node_g[nd] / (node_h[nd] + lam)
            if not any_split:
                break
            for i in range(n):
                nd = node_of[i]
                if level_lo <= nd < level_hi and feat[r, nd] >= 0:
                    if X[i, feat[r, nd]] < thr[r, nd]:
                        child = left[r, nd]
                    else:
                        child = right[r, nd]
                    node_of[i] = child
                    node_g[child] += g[i]
                    node_h[child] += h[i]
            level_lo = level_hi
            level_hi = n_nodes

        for nd in range(level_lo, level_hi):
            if feat[r, nd] < 0:
                leaf[r, nd] = -node_g[nd] / (node_h[nd] + lam)
        for i in range(n):
            margin[i] += learning_rate * leaf[r, node_of[i]]

    return feat, thr, left, right, leaf


def _boost_predict_loops(X, feat, thr, left, right, leaf, learning_rate,
                         base_margin):
    n = X.shape[0]
    n_rounds = feat.shape[0]
    out = np.full(n, base_margin)
    for r in range(n_rounds):
        for i in range(n):
            nd = 0
            while feat[r, nd] >= 0:
                if X[i, feat[r, nd]] < thr[r, nd]:
                    nd = left[r, nd]
                else:
                    nd = right[r, nd]
            out[i] += learning_rate * leaf[r, nd]
    return out


def _boost_fit_numpy(X, z, order, n_rounds, max_depth, learning_rate,
                     min_child_weight, gamma, lam, base_margin):
    n, p = X.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feat = np.full((n_rounds, max_nodes), -1, np.int64)
    thr = np.zeros((n_rounds, max_nodes))
    left = np.full((n_rounds, max_nodes), -1, np.int64)
    right = np.full((n_rounds, max_nodes), -1, np.int64)
    leaf = np.zeros((n_rounds, max_nodes))

    margin = np.full(n, base_margin)
    for r in range(n_rounds):
        prob = np.where(margin >= 0.0,
                        1.0 / (1.0 + np.exp(-np.abs(margin))),
                        np.exp(-np.abs(margin)) / (1.0 + np.exp(-np.abs(margin))))
        g = prob - z
        h = np.maximum(prob * (1.0 - prob), _HESS_FLOOR)
        node_of = np.zeros(n, np.int64)
        node_g = np.zeros(max_nodes)
        node_h = np.zeros(max_nodes)
        node_g[0] = np.cumsum(g)[-1] if n else 0.0
        node_h[0] = np.cumsum(h)[-1] if n else 0.0
        n_nodes = 1
        level_lo, level_hi = 0, 1

        for _depth in range(max_depth):
            best = {}
            for nd in range(level_lo, level_hi):
                best_gain, best_j, best_v = 0.0, -1, 0.0
                for j in range(p):
                    idx = order[j][node_of[order[j]] == nd]
                    if idx.size < 2:
                        continue
                    vals = X[idx, j]
                    cg = np.cumsum(g[idx])
                    ch = np.cumsum(h[idx])
                    cand = np.flatnonzero(vals[1:] > vals[:-1])  # split before k+1
                    if cand.size == 0:
                        continue
                    hl = ch[cand]
                    hr = node_h[nd] - hl
                    ok = (hl >= min_child_weight) & (hr >= min_child_weight)
                    if not np.any(ok):
                        continue
                    gl = cg[cand]
                    gr = node_g[nd] - gl
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                                  - node_g[nd] * node_g[nd] / (node_h[nd] + lam)) - gamma
                    gain = np.where(ok, gain, -np.inf)
                    kbest = int(np.argmax(gain))
                    if gain[kbest] > best_gain:
                        best_gain = float(gain[kbest])
                        best_j = j
                        best_v = float(vals[cand[kbest] + 1])
                if best_j >= 0:
                    best[nd] = (best_gain, best_j, best_v)

            if not best:
                for nd in range(level_lo, level_hi):
                    leaf[r, nd] = -node_g[nd] / (node_h[nd] + lam)
                break
            for nd in range(level_lo, level_hi):
                if nd in best:
                    _, j, v = best[nd]
                    feat[r, nd] = j
                    thr[r, nd] = v
                    left[r, nd] = n_nodes
                    right[r, nd] = n_nodes + 1
                    n_nodes += 2
                else:
                    leaf[r, nd] = -node_g[nd] / (node_h[nd] + lam)
            mask = (node_of >= level_lo) & (node_of < level_hi) & (feat[r, node_of] >= 0)
            if np.any(mask):
                parents = node_of[mask]
                goes_left = X[mask, feat[r, parents]] < thr[r, parents]
                children = np.where(goes_left, left[r, parents], right[r, parents])
                node_of = node_of.copy()
                node_of[mask] = children
                np.add.at(node_g, children, g[mask])
                np.add.at(node_h, children, h[mask])
            level_lo, level_hi = level_hi, n_nodes
        else:
            for nd in range(level_lo, level_hi):
                if feat[r, nd] < 0:
                    leaf[r, nd] = -node_g[nd] / (node_h[nd] + lam)

        margin = margin + learning_rate * leaf[r, node_of]
    return feat, thr, left, right, leaf


def _boost_predict_numpy(X, feat, thr, left, right, leaf, learning_rate,
                         base_margin):
    n = X.shape[0]
    n_rounds = feat.shape[0]
    out = np.full(n, base_margin)
    rows = np.arange(n)
    for r in range(n_rounds):
        nd = np.zeros(n, np.int64)
        while True:
            f = feat[r, nd]
            active = f >= 0
            if not np.any(active):
                break
            go_left = np.zeros(n, dtype=bool)
            go_left[active] = X[rows[active], f[active]] < thr[r, nd[active]]
            nd = np.where(active, np.where(go_left, left[r, nd], right[r, nd]), nd)
        out += learning_rate * leaf[r, nd]
    return out


if NUMBA_ENABLED:
    boost_fit = njit(cache=True)(_boost_fit_loops)
    boost_predict = njit(cache=True)(_boost_predict_loops)
else:
    boost_fit = _boost_fit_numpy
    boost_predict = _boost_predict_numpy
