"""Exhaustive tree edit distance for small trees.

A unit-cost edit script corresponds to a mapping between the node sets of
the two trees that is one-to-one and preserves both pre-order and
post-order (Tai).  Its cost is the number of mismatched mapped labels plus
the unmapped nodes on either side.  Enumerating every such mapping and
taking the minimum gives the edit distance without any dynamic programming.
"""

import itertools
from collections import defaultdict

import numpy as np


def nodes(tree):
    """(label, preorder rank, postorder rank) per node, in pre-order."""
    out, post = [], [0]

    def walk(t):
        idx = len(out)
        out.append([t if isinstance(t, str) else t[0], idx, None])
        if not isinstance(t, str):
            for ch in t[1:]:
                walk(ch)
        out[idx][2] = post[0]
        post[0] += 1

    walk(tree)
    return [tuple(n) for n in out]


def shape(tree):
    if isinstance(tree, str):
        return ()
    return tuple(shape(ch) for ch in tree[1:])


def valid_mappings(na, nb):
    """Every valid mapping between node lists ``na`` and ``nb`` as a list of pair lists."""
    found = []

    def ok(i, j, pairs):
        _, pi, qi = na[i]
        _, pj, qj = nb[j]
        for k, l in pairs:
            _, pk, qk = na[k]
            _, pl, ql = nb[l]
            if (pi < pk) != (pj < pl) or (qi < qk) != (qj < ql):
                return False
        return True

    def rec(i, pairs, used):
        if i == len(na):
            found.append(list(pairs))
            return
        rec(i + 1, pairs, used)
        for j in range(len(nb)):
            if j not in used and ok(i, j, pairs):
                rec(i + 1, pairs + [(i, j)], used | {j})

    rec(0, [], frozenset())
    return found


def brute_force_ted(a, b):
    na, nb = nodes(a), nodes(b)
    best = len(na) + len(nb)
    for m in valid_mappings(na, nb):
        cost = sum(na[i][0] != nb[j][0] for i, j in m) + len(na) + len(nb) - 2 * len(m)
        best = min(best, cost)
    return best


def all_small_trees(max_nodes, leaves, unary, binary):
    by_size = {1: list(leaves)}
    for n in range(2, max_nodes + 1):
        trees = [(u, t) for u in unary for t in by_size[n - 1]]
        for k in range(1, n - 1):
            for left, right in itertools.product(by_size[k], by_size[n - 1 - k]):
                trees += [(o, left, right) for o in binary]
        by_size[n] = trees
    return [t for n in sorted(by_size) for t in by_size[n]]


def brute_force_matrix(trees):
    """Exhaustive TED for all pairs, sharing the mapping enumeration per pair of shapes."""
    groups = defaultdict(list)
    for k, t in enumerate(trees):
        groups[shape(t)].append(k)
    alphabet = {}
    labels = {}
    for k, t in enumerate(trees):
        labels[k] = [alphabet.setdefault(n[0], len(alphabet)) for n in nodes(t)]

    out = np.full((len(trees), len(trees)), -1.0)
    for sa, ia in groups.items():
        na = nodes(trees[ia[0]])
        A = np.array([labels[k] for k in ia])
        for sb, ib in groups.items():
            nb = nodes(trees[ib[0]])
            B = np.array([labels[k] for k in ib])
            maps = valid_mappings(na, nb)
            M = np.zeros((len(maps), len(na), len(nb)))
            for r, m in enumerate(maps):
                for i, j in m:
                    M[r, i, j] = 1.0
            base = len(na) + len(nb) - 2 * M.sum(axis=(1, 2))
            mismatch = (A[:, None, :, None] != B[None, :, None, :]).astype(float)
            cost = np.einsum("abij,rij->abr", mismatch, M) + base
            out[np.ix_(ia, ib)] = cost.min(axis=2)
    return out
