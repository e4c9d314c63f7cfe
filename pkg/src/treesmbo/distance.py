"""Tree distances: phenotypic (PhD), tree edit (TED) and structural Hamming (SHD1/SHD2).

The scalar functions :func:`ted`, :func:`shd1` and :func:`shd2` work on a
single pair.  For model building, :class:`TreeSet` encodes many trees once
into packed post-order arrays and computes all three kernel distances
between two sets in compiled loops.
"""

from __future__ import annotations

import csv

import numpy as np
from numba import njit

from .expr import ARITY, CONST, Tree, compile_tree, format_sexpr, label

MEASURES = ("phd", "ted", "shd1", "shd2")

# Index of each distance along the first axis of stacked kernel distances.
KERNEL_ORDER = ("shd2", "phd", "ted")


def _hd(a, b):
    return 0.0 if a == b else 1.0


def shd1(x: Tree, y: Tree) -> float:
    ax, ay = _arity(x), _arity(y)
    if ax != ay:
        return 1.0
    h = _hd(label(x), label(y))
    if ax == 0:
        return h
    return (h + sum(shd1(a, b) for a, b in zip(x[1:], y[1:]))) / (ax + 1)


def shd2(x: Tree, y: Tree) -> float:
    """SHD with the cheaper of the two child alignments at binary nodes."""
    ax, ay = _arity(x), _arity(y)
    if ax != ay:
        return 1.0
    h = _hd(label(x), label(y))
    if ax == 0:
        return h
    if ax == 1:
        return (h + shd2(x[1], y[1])) / 2
    if ax > 2:
        raise ValueError("shd2 is defined for arity <= 2")
    straight = shd2(x[1], y[1]) + shd2(x[2], y[2])
    crossed = shd2(x[1], y[2]) + shd2(x[2], y[1])
    return (h + min(straight, crossed)) / 3


def _arity(t):
    return 0 if isinstance(t, str) else len(t) - 1


def ted(x: Tree, y: Tree) -> float:
    """Unit-cost ordered tree edit distance (Zhang-Shasha)."""
    a, b = _encode(x), _encode(y)
    m = max(a[5], b[5])
    td = np.zeros((m, m))
    fd = np.zeros((m + 1, m + 1))
    return float(_zs(a[0], a[3], a[4], a[5], b[0], b[3], b[4], b[5], td, fd))


def phenotype(tree: Tree, X: np.ndarray):
    """Centred, unit-norm output with every constant set to one.

    Returns ``None`` when the tree is infeasible on ``X`` or its output has
    no variance, both of which put it at distance one from everything.
    """
    fn = compile_tree(tree)
    out = fn(X, np.ones(fn.n_constants))
    if out is None:
        return None
    out = out - out.mean()
    norm = np.sqrt(out @ out)
    scale = np.abs(out).max()
    if scale == 0 or norm <= 1e-12 * max(1.0, scale) or not np.isfinite(norm):
        return None
    return out / norm


def phd(x: Tree, y: Tree, X: np.ndarray) -> float:
    if x == y:
        return 0.0
    px, py = phenotype(x, X), phenotype(y, X)
    if px is None or py is None:
        return 1.0
    return float(1.0 - min(abs(px @ py), 1.0))


# -- label codes and post-order encoding -----------------------------------

_OP_CODES = {s: i + 1 for i, s in enumerate(sorted(ARITY))}


def label_code(tok: str) -> int:
    if tok == CONST:
        return 0
    if tok in _OP_CODES:
        return _OP_CODES[tok]
    return 100 + int(tok[1:])


def _encode(tree):
    """Post-order arrays: labels, first child, second child, leftmost leaf, keyroots, size."""
    labels, c1, c2, lml = [], [], [], []

    def walk(t):
        if isinstance(t, str):
            i = len(labels)
            labels.append(label_code(t))
            c1.append(-1)
            c2.append(-1)
            lml.append(i)
            return i
        kids = [walk(ch) for ch in t[1:]]
        if len(kids) > 2:
            raise ValueError("arity > 2 is not supported")
        i = len(labels)
        labels.append(label_code(t[0]))
        c1.append(kids[0])
        c2.append(kids[1] if len(kids) > 1 else -1)
        lml.append(lml[kids[0]])
        return i

    walk(tree)
    n = len(labels)
    last = {}
    for i, l in enumerate(lml):
        last[l] = i
    keyroots = sorted(last.values())
    return (np.array(labels, np.int64), np.array(c1, np.int64), np.array(c2, np.int64),
            np.array(lml, np.int64), np.array(keyroots, np.int64), n)


@njit(cache=True)
def _zs(la, lla, kra, na, lb, llb, krb, nb, td, fd):
    for ii in range(kra.shape[0]):
        i = kra[ii]
        li = lla[i]
        m = i - li + 2
        for jj in range(krb.shape[0]):
            j = krb[jj]
            lj = llb[j]
            n = j - lj + 2
            fd[0, 0] = 0.0
            for x in range(1, m):
                fd[x, 0] = fd[x - 1, 0] + 1.0
            for y in range(1, n):
                fd[0, y] = fd[0, y - 1] + 1.0
            for x in range(1, m):
                i1 = li + x - 1
                for y in range(1, n):
                    j1 = lj + y - 1
                    dele = fd[x - 1, y] + 1.0
                    ins = fd[x, y - 1] + 1.0
                    if lla[i1] == li and llb[j1] == lj:
                        sub = fd[x - 1, y - 1] + (0.0 if la[i1] == lb[j1] else 1.0)
                        v = min(dele, ins, sub)
                        fd[x, y] = v
                        td[i1, j1] = v
                    else:
                        p = lla[i1] - li
                        q = llb[j1] - lj
                        fd[x, y] = min(dele, ins, fd[p, q] + td[i1, j1])
    return td[na - 1, nb - 1]


@njit(cache=True)
def _shd(la, c1a, c2a, na, lb, c1b, c2b, nb, t1, t2):
    for i in range(na):
        ai = (c1a[i] >= 0) + (c2a[i] >= 0)
        for j in range(nb):
            aj = (c1b[j] >= 0) + (c2b[j] >= 0)
            if ai != aj:
                t1[i, j] = 1.0
                t2[i, j] = 1.0
                continue
            h = 0.0 if la[i] == lb[j] else 1.0
            if ai == 0:
                t1[i, j] = h
                t2[i, j] = h
            elif ai == 1:
                t1[i, j] = (h + t1[c1a[i], c1b[j]]) / 2.0
                t2[i, j] = (h + t2[c1a[i], c1b[j]]) / 2.0
            else:
                p, q = c1a[i], c2a[i]
                r, s = c1b[j], c2b[j]
                t1[i, j] = (h + t1[p, r] + t1[q, s]) / 3.0
                t2[i, j] = (h + min(t2[p, r] + t2[q, s], t2[p, s] + t2[q, r])) / 3.0
    return t1[na - 1, nb - 1], t2[na - 1, nb - 1]


@njit(cache=True)
def _cross(la, c1a, c2a, lla, kra, nkra, na,
           lb, c1b, c2b, llb, krb, nkrb, nb, symmetric):
    """shd1, shd2 and ted between every tree of set A and every tree of set B."""
    ma, mb = na.shape[0], nb.shape[0]
    out = np.zeros((3, ma, mb))
    size = max(la.shape[1], lb.shape[1])
    td = np.zeros((size, size))
    fd = np.zeros((size + 1, size + 1))
    t1 = np.zeros((size, size))
    t2 = np.zeros((size, size))
    for a in range(ma):
        start = a + 1 if symmetric else 0
        for b in range(start, mb):
            s1, s2 = _shd(la[a], c1a[a], c2a[a], na[a], lb[b], c1b[b], c2b[b], nb[b], t1, t2)
            t = _zs(la[a], lla[a], kra[a, :nkra[a]], na[a],
                    lb[b], llb[b], krb[b, :nkrb[b]], nb[b], td, fd)
            out[0, a, b] = s1
            out[1, a, b] = s2
            out[2, a, b] = t
            if symmetric:
                out[0, b, a] = s1
                out[1, b, a] = s2
                out[2, b, a] = t
    return out


class TreeSet:
    """A list of trees with packed encodings and phenotypes over ``X``.

    With ``X=None`` only the genotypic distances are available.
    """

    def __init__(self, trees, X=None):
        self.trees = list(trees)
        self.X = None if X is None else np.asarray(X, dtype=float)
        enc = [_encode(t) for t in self.trees]
        m = len(enc)
        width = max([e[5] for e in enc] + [1])
        self.labels = np.full((m, width), -1, np.int64)
        self.c1 = np.full((m, width), -1, np.int64)
        self.c2 = np.full((m, width), -1, np.int64)
        self.lml = np.zeros((m, width), np.int64)
        self.keyroots = np.zeros((m, width), np.int64)
        self.nkr = np.zeros(m, np.int64)
        self.n = np.zeros(m, np.int64)
        for k, (lab, a, b, l, kr, n) in enumerate(enc):
            self.labels[k, :n] = lab
            self.c1[k, :n] = a
            self.c2[k, :n] = b
            self.lml[k, :n] = l
            self.keyroots[k, :len(kr)] = kr
            self.nkr[k] = len(kr)
            self.n[k] = n
        self.pheno = np.zeros((m, 0 if X is None else self.X.shape[0]))
        self.feasible = np.zeros(m, bool)
        for k, t in enumerate(self.trees if X is not None else ()):
            p = phenotype(t, self.X)
            if p is not None:
                self.pheno[k] = p
                self.feasible[k] = True

    def __len__(self):
        return len(self.trees)

    def _packed(self):
        return (self.labels, self.c1, self.c2, self.lml, self.keyroots, self.nkr, self.n)

    def genotypic(self, other=None):
        """(3, m, n) array of shd1, shd2, ted against ``other`` (self if omitted)."""
        if other is None:
            return _cross(*self._packed(), *self._packed(), True)
        return _cross(*self._packed(), *other._packed(), False)

    def phenotypic(self, other=None):
        if self.X is None:
            raise ValueError("phenotypic distances need data")
        sym = other is None
        other = self if sym else other
        cor = np.abs(self.pheno @ other.pheno.T)
        d = 1.0 - np.minimum(cor, 1.0)
        d[~self.feasible, :] = 1.0
        d[:, ~other.feasible] = 1.0
        return d

    def kernel_distances(self, other=None):
        """(3, m, n) array ordered as :data:`KERNEL_ORDER`.

        Structurally equal pairs (TED zero) get PhD zero.
        """
        g = self.genotypic(other)
        p = self.phenotypic(other)
        p[g[2] == 0.0] = 0.0
        if other is None:
            np.fill_diagonal(p, 0.0)
        return np.stack([g[1], p, g[2]])

    def extend(self, trees):
        return TreeSet(self.trees + list(trees), self.X)


class DistanceMatrix:
    def __init__(self, measure, values, trees):
        self.measure = measure
        self.values = values
        self.trees = list(trees)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([""] + [format_sexpr(t) for t in self.trees])
            for t, row in zip(self.trees, self.values):
                w.writerow([format_sexpr(t)] + [f"{v:.9g}" for v in row])


def distance_matrix(trees, measure, X=None) -> DistanceMatrix:
    trees = list(trees)
    if not trees:
        raise ValueError("need at least one tree")
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    if measure == "phd":
        if X is None:
            raise ValueError("phd needs data")
        ts = TreeSet(trees, X)
        d = ts.phenotypic()
        eq = np.array([[a == b for b in trees] for a in trees])
        d[eq] = 0.0
    else:
        ts = TreeSet(trees)
        g = ts.genotypic()
        d = g[{"shd1": 0, "shd2": 1, "ted": 2}[measure]]
    return DistanceMatrix(measure, d, trees)


def all_matrices(trees, X):
    """All four measures at once, sharing one encoding pass."""
    ts = TreeSet(trees, X)
    g = ts.genotypic()
    p = ts.phenotypic()
    p[g[2] == 0.0] = 0.0
    return {
        "phd": DistanceMatrix("phd", p, trees),
        "ted": DistanceMatrix("ted", g[2], trees),
        "shd1": DistanceMatrix("shd1", g[0], trees),
        "shd2": DistanceMatrix("shd2", g[1], trees),
    }
