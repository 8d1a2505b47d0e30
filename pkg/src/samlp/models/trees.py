"""Numba kernels for exact greedy decision trees.

Trees are stored as flat parallel arrays (feature, threshold, left, right,
value). A node with ``feature == -1`` is a leaf. Rows go left when
``x[feature] <= threshold``. Ensembles concatenate their trees into one set of
arrays with absolute child indices plus a ``roots`` array.

Split search scans features in ascending index and thresholds in ascending
value and only replaces the incumbent on a strict improvement, so ties go to
the lowest feature index and then the lowest threshold.
"""
from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _midpoint(a, b):
    m = a + (b - a) * 0.5
    if m >= b:
        m = a
    return m


def column_order(X) -> np.ndarray:
    """Row indices sorting each column (stable), one row of the result per feature."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


@njit(cache=True)
def _sorted_lists(order, rows, feats, n):
    """For each feature in ``feats``, the members of ``rows`` in ascending feature value."""
    member = np.zeros(n, dtype=np.int64)
    for r in rows:
        member[r] = 1
    nn = rows.shape[0]
    # one spare slot: the branch-free filter below writes before it checks
    idx = np.empty((feats.shape[0], nn + 1), dtype=np.int64)
    for ci in range(feats.shape[0]):
        p = 0
        for r in order[feats[ci]]:
            idx[ci, p] = r
            p += member[r]
    return idx


@njit(cache=True)
def _split_lists(idx, start, end, X, f, thr, flag, buf):
    """Stable partition of every sorted list on ``x[f] <= thr``; keeps each side sorted."""
    nl = 0
    for i in range(start, end):
        s = idx[0, i]
        g = 1 if X[s, f] <= thr else 0
        flag[s] = g
        nl += g
    for ci in range(idx.shape[0]):
        a = start
        b = 0
        for i in range(start, end):
            s = idx[ci, i]
            g = flag[s]
            # branch-free: write both ways, advance one cursor
            idx[ci, a] = s
            buf[b] = s
            a += g
            b += 1 - g
        for i in range(b):
            idx[ci, a + i] = buf[i]
    return start + nl


@njit(cache=True)
def build_cart(X, y, w, cnt, rows, order, max_depth, min_samples_leaf, max_features, seed):
    """Weighted-Gini CART classifier tree.

    ``w`` holds per-row weights (class weight times bootstrap multiplicity) and
    ``cnt`` per-row multiplicities used for ``min_samples_leaf``. Only ``rows``
    take part; ``order`` is :func:`column_order` of ``X``. ``max_depth < 0``
    means unlimited; ``max_features`` features are drawn without replacement at
    every node. Leaf value is the weighted fraction of positives.
    """
    np.random.seed(seed)
    m = X.shape[1]
    wpos = w * (y == 1)
    n = rows.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)

    perm = np.arange(m)
    idx = _sorted_lists(order, rows, perm, X.shape[0])
    buf = np.empty(n, dtype=np.int64)
    flag = np.zeros(X.shape[0], dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]

        w0 = 0.0
        w1 = 0.0
        c = 0
        for i in range(start, end):
            s = idx[0, i]
            w1 += wpos[s]
            w0 += w[s]
            c += cnt[s]
        w0 -= w1
        wt = w0 + w1
        value[node] = w1 / wt if wt > 0 else 0.0
        if (max_depth >= 0 and depth >= max_depth) or c < 2 * min_samples_leaf or w0 == 0.0 or w1 == 0.0:
            continue

        parent_crit = wt - (w0 * w0 + w1 * w1) / wt
        best_crit = parent_crit - 1e-12 * wt
        best_f = -1
        best_thr = 0.0
        for i in range(m):
            perm[i] = i
        k = max_features if max_features < m else m
        if k < m:
            for i in range(k):
                j = i + int(np.random.random() * (m - i))
                if j >= m:
                    j = m - 1
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
        cand = np.sort(perm[:k])
        for ci in range(k):
            f = cand[ci]
            lw = 0.0
            l1 = 0.0
            lc = 0
            a = X[idx[f, start], f]
            for p in range(start, end - 1):
                s = idx[f, p]
                lw += w[s]
                l1 += wpos[s]
                lc += cnt[s]
                b = X[idx[f, p + 1], f]
                if a == b:
                    continue
                a_prev = a
                a = b
                if lc < min_samples_leaf or c - lc < min_samples_leaf:
                    continue
                l0 = lw - l1
                r0 = w0 - l0
                r1 = w1 - l1
                rw = r0 + r1
                if lw <= 0.0 or rw <= 0.0:
                    continue
                crit = lw - (l0 * l0 + l1 * l1) / lw + rw - (r0 * r0 + r1 * r1) / rw
                if crit < best_crit:
                    best_crit = crit
                    best_f = f
                    best_thr = _midpoint(a_prev, b)

        if best_f < 0:
            continue
        mid = _split_lists(idx, start, end, X, best_f, best_thr, flag, buf)
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is numbered first
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = rnode
        top += 1
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        st_node[top] = lnode
        top += 1

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def newton_gain(gl, hl, gr, hr, reg_lambda, gamma):
    """Loss reduction of a split under the second-order (Newton) approximation."""
    g = gl + gr
    h = hl + hr
    return 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - g * g / (h + reg_lambda)) - gamma


@njit(cache=True)
def newton_leaf(g, h, reg_lambda):
    d = h + reg_lambda
    if d <= 0.0:
        return 0.0
    return -g / d


@njit(cache=True)
def build_newton_tree(X, grad, hess, rows, cols, order, max_depth, min_child_weight, reg_lambda, gamma,
                      learning_rate):
    """Regression tree on gradient/hessian statistics, exact greedy, depth-limited.

    A split is made only when its gain (after subtracting ``gamma``) is
    positive and both children carry hessian mass >= ``min_child_weight``.
    Leaf values are already multiplied by ``learning_rate``. ``cols`` must be
    ascending; ``order`` is :func:`column_order` of ``X``.
    """
    n = rows.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    idx = _sorted_lists(order, rows, cols, X.shape[0])
    buf = np.empty(n, dtype=np.int64)
    flag = np.zeros(X.shape[0], dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]
        G = 0.0
        H = 0.0
        for i in range(start, end):
            s = idx[0, i]
            G += grad[s]
            H += hess[s]
        value[node] = learning_rate * newton_leaf(G, H, reg_lambda)
        if depth >= max_depth or end - start < 2:
            continue
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for ci in range(cols.shape[0]):
            f = cols[ci]
            gl = 0.0
            hl = 0.0
            for p in range(start, end - 1):
                s = idx[ci, p]
                gl += grad[s]
                hl += hess[s]
                a = X[s, f]
                b = X[idx[ci, p + 1], f]
                if a == b:
                    continue
                hr = H - hl
                if hl < min_child_weight or hr < min_child_weight:
                    continue
                gain = newton_gain(gl, hl, G - gl, hr, reg_lambda, gamma)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = _midpoint(a, b)
        if best_f < 0:
            continue
        mid = _split_lists(idx, start, end, X, best_f, best_thr, flag, buf)
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = rnode
        top += 1
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        st_node[top] = lnode
        top += 1

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _leaf(X, i, feature, threshold, left, right, node):
    while feature[node] != LEAF:
        if X[i, feature[node]] <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(cache=True)
def sum_leaves(X, feature, threshold, left, right, value, roots):
    """Per-row sum of the leaf values reached in every tree."""
    n = X.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(roots.shape[0]):
            acc += value[_leaf(X, i, feature, threshold, left, right, roots[j])]
        out[i] = acc
    return out


@njit(cache=True)
def vote_fraction(X, feature, threshold, left, right, value, roots):
    """Per-row fraction of trees whose leaf value exceeds 0.5."""
    n = X.shape[0]
    t = roots.shape[0]
    out = np.zeros(n)
    if t == 0:
        return out
    for i in range(n):
        votes = 0
        for j in range(t):
            if value[_leaf(X, i, feature, threshold, left, right, roots[j])] > 0.5:
                votes += 1
        out[i] = votes / t
    return out


@njit(cache=True)
def _grow(a, need):
    if need <= a.shape[0]:
        return a
    out = np.empty(max(need, 2 * a.shape[0]), dtype=a.dtype)
    out[:a.shape[0]] = a
    return out


@njit(cache=True)
def _put(store, off, tree):
    """Copy one tree into the flat ensemble arrays at ``off`` (children made absolute)."""
    feature, threshold, left, right, value = store
    f, th, lo, hi, v = tree
    k = f.shape[0]
    feature = _grow(feature, off + k)
    threshold = _grow(threshold, off + k)
    left = _grow(left, off + k)
    right = _grow(right, off + k)
    value = _grow(value, off + k)
    for i in range(k):
        feature[off + i] = f[i]
        threshold[off + i] = th[i]
        left[off + i] = lo[i] + off if lo[i] != LEAF else LEAF
        right[off + i] = hi[i] + off if hi[i] != LEAF else LEAF
        value[off + i] = v[i]
    return (feature, threshold, left, right, value)


@njit(cache=True)
def _empty_store(cap):
    return (np.empty(cap, dtype=np.int64), np.empty(cap), np.empty(cap, dtype=np.int64),
            np.empty(cap, dtype=np.int64), np.empty(cap))


@njit(cache=True)
def grow_forest(X, y, w, counts, seeds, order, max_depth, min_samples_leaf, max_features):
    """One :func:`build_cart` tree per row of ``counts`` (bootstrap multiplicities)."""
    T = counts.shape[0]
    store = _empty_store(64 * T)
    roots = np.empty(T, dtype=np.int64)
    off = 0
    for t in range(T):
        c = counts[t]
        rows = np.flatnonzero(c).astype(np.int64)
        tree = build_cart(X, y, w * c, c, rows, order, max_depth, min_samples_leaf, max_features, seeds[t])
        store = _put(store, off, tree)
        roots[t] = off
        off += tree[0].shape[0]
    return store[0][:off], store[1][:off], store[2][:off], store[3][:off], store[4][:off], roots


@njit(cache=True)
def grow_boosted(X, y, w, base, row_sets, col_sets, order, max_depth, min_child_weight, reg_lambda, gamma,
                 learning_rate):
    """Newton boosting on the logistic loss; tree ``t`` uses ``row_sets[t]`` and ``col_sets[t]``."""
    n = X.shape[0]
    T = row_sets.shape[0]
    margin = np.full(n, base)
    grad = np.empty(n)
    hess = np.empty(n)
    store = _empty_store(64 * T)
    roots = np.empty(T, dtype=np.int64)
    off = 0
    for t in range(T):
        for i in range(n):
            p = 0.5 * (1.0 + np.tanh(0.5 * margin[i]))
            grad[i] = w[i] * (p - y[i])
            hess[i] = w[i] * p * (1.0 - p)
        tree = build_newton_tree(X, grad, hess, row_sets[t], col_sets[t], order, max_depth, min_child_weight,
                                 reg_lambda, gamma, learning_rate)
        f, th, lo, hi, v = tree
        for i in range(n):
            margin[i] += v[_leaf(X, i, f, th, lo, hi, 0)]
        store = _put(store, off, tree)
        roots[t] = off
        off += f.shape[0]
    return store[0][:off], store[1][:off], store[2][:off], store[3][:off], store[4][:off], roots


class TreeEnsemble:
    """Flat storage of several trees built by the kernels above."""

    def __init__(self, feature=None, threshold=None, left=None, right=None, value=None, roots=None):
        self.feature = np.zeros(0, dtype=np.int64) if feature is None else np.asarray(feature, dtype=np.int64)
        self.threshold = np.zeros(0) if threshold is None else np.asarray(threshold, dtype=np.float64)
        self.left = np.zeros(0, dtype=np.int64) if left is None else np.asarray(left, dtype=np.int64)
        self.right = np.zeros(0, dtype=np.int64) if right is None else np.asarray(right, dtype=np.int64)
        self.value = np.zeros(0) if value is None else np.asarray(value, dtype=np.float64)
        self.roots = np.zeros(0, dtype=np.int64) if roots is None else np.asarray(roots, dtype=np.int64)
        self._parts: list[tuple] = []

    @property
    def n_trees(self) -> int:
        return len(self.roots) + len(self._parts)

    def append(self, tree) -> None:
        self._parts.append(tree)

    def freeze(self) -> "TreeEnsemble":
        """Concatenate appended trees into the flat arrays."""
        if not self._parts:
            return self
        sizes = np.array([len(self.feature)] + [len(p[0]) for p in self._parts], dtype=np.int64)
        starts = np.cumsum(sizes) - sizes
        shift = np.repeat(starts[1:], sizes[1:])
        lo = np.concatenate([p[2] for p in self._parts])
        hi = np.concatenate([p[3] for p in self._parts])
        self.feature = np.concatenate([self.feature] + [p[0] for p in self._parts])
        self.threshold = np.concatenate([self.threshold] + [p[1] for p in self._parts])
        self.left = np.concatenate([self.left, np.where(lo == LEAF, LEAF, lo + shift)])
        self.right = np.concatenate([self.right, np.where(hi == LEAF, LEAF, hi + shift)])
        self.value = np.concatenate([self.value] + [p[4] for p in self._parts])
        self.roots = np.concatenate([self.roots, starts[1:]])
        self._parts = []
        return self

    def _args(self, X, n_trees):
        self.freeze()
        roots = self.roots if n_trees is None else self.roots[:n_trees]
        X = np.ascontiguousarray(X, dtype=np.float64)
        return X, self.feature, self.threshold, self.left, self.right, self.value, roots

    def sum_leaves(self, X, n_trees: int | None = None) -> np.ndarray:
        return sum_leaves(*self._args(X, n_trees))

    def vote_fraction(self, X, n_trees: int | None = None) -> np.ndarray:
        return vote_fraction(*self._args(X, n_trees))

    def depths(self) -> list[int]:
        self.freeze()
        out = []
        for r in self.roots:
            best = 0
            stack = [(int(r), 0)]
            while stack:
                node, d = stack.pop()
                if self.feature[node] == LEAF:
                    best = max(best, d)
                else:
                    stack.append((int(self.left[node]), d + 1))
                    stack.append((int(self.right[node]), d + 1))
            out.append(best)
        return out

    def used_features(self) -> set[int]:
        self.freeze()
        return {int(f) for f in self.feature if f != LEAF}

    def to_dict(self) -> dict:
        self.freeze()
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "roots": self.roots.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"], d["roots"])
