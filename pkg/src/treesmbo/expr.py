"""Expression trees for symbolic regression.

Trees are nested tuples: an internal node is ``(symbol, child, ...)`` and a
leaf is a bare string, either a variable ``"z<k>"`` (1-based) or the
anonymous constant token ``"c"``.  Tuples are immutable and hashable, so
structural equality and dictionary caching come for free.

Constants carry no value inside the tree.  Their values are supplied at
evaluation time as a vector ordered by pre-order position.
"""

from __future__ import annotations

import re
from functools import lru_cache
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np

Tree = Union[str, tuple]

CONST = "c"

BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}
UNARY = {"sqrt": np.sqrt, "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}
ARITY = {**{s: 2 for s in BINARY}, **{s: 1 for s in UNARY}}

_VAR_RE = re.compile(r"z([1-9][0-9]*)$")


class Infeasible(Exception):
    """Raised when an expression yields a non-finite value on some row."""


class ParseError(ValueError):
    def __init__(self, msg, pos):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


@dataclass(frozen=True)
class NodeLabel:
    kind: str  # "operator" | "variable" | "constant"
    symbol: str
    index: int = 0

    @classmethod
    def of(cls, token: str) -> "NodeLabel":
        if token == CONST:
            return cls("constant", CONST)
        m = _VAR_RE.match(token)
        if m:
            return cls("variable", token, int(m.group(1)))
        if token in ARITY:
            return cls("operator", token)
        raise KeyError(token)


@dataclass(frozen=True)
class OperatorSet:
    """Operator symbols plus the terminal alphabet of a problem."""

    symbols: tuple
    n_vars: int
    constants: bool = True

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate operator symbols")
        unknown = [s for s in self.symbols if s not in ARITY]
        if unknown:
            raise ValueError(f"unknown operators: {unknown}")
        if self.n_vars < 1 and not self.constants:
            raise ValueError("operator set has no terminals")

    @property
    def entries(self):
        return [(s, ARITY[s]) for s in self.symbols]

    @property
    def variables(self):
        return tuple(f"z{i}" for i in range(1, self.n_vars + 1))

    def by_arity(self, arity):
        return tuple(s for s in self.symbols if ARITY[s] == arity)

    def to_dict(self):
        return {"symbols": list(self.symbols), "n_vars": self.n_vars, "constants": self.constants}


DEFAULT_OPERATORS = OperatorSet(("+", "-", "*", "/", "sqrt", "sin", "cos", "exp", "log"), 2)


@dataclass(frozen=True)
class GeneratorParams:
    max_depth: int = 4
    p_const: float = 0.2
    p_operator: float = 0.5  # grow mode, at depths below the target

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 <= self.p_const <= 1.0:
            raise ValueError("p_const must be in [0, 1]")


@dataclass(frozen=True)
class MutationParams:
    p_insert: float = 0.1
    p_delete: float = 0.1
    p_subtree: float = 0.1
    p_const: float = 0.2
    max_depth: int = 4

    def __post_init__(self):
        for name in ("p_insert", "p_delete", "p_subtree", "p_const"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


# -- structure -------------------------------------------------------------

def is_leaf(tree: Tree) -> bool:
    return isinstance(tree, str)


def label(tree: Tree) -> str:
    return tree if isinstance(tree, str) else tree[0]


def children(tree: Tree) -> tuple:
    return () if isinstance(tree, str) else tree[1:]


def depth(tree: Tree) -> int:
    if isinstance(tree, str):
        return 1
    return 1 + max(depth(ch) for ch in tree[1:])


def size(tree: Tree) -> int:
    if isinstance(tree, str):
        return 1
    return 1 + sum(size(ch) for ch in tree[1:])


def preorder(tree: Tree) -> Iterator[Tree]:
    yield tree
    if not isinstance(tree, str):
        for ch in tree[1:]:
            yield from preorder(ch)


def count_constants(tree: Tree) -> int:
    return sum(1 for node in preorder(tree) if node == CONST)


def variables_used(tree: Tree) -> set:
    return {node for node in preorder(tree) if isinstance(node, str) and node != CONST}


def check_arity(tree: Tree, ops: Optional[OperatorSet] = None) -> bool:
    """True if every node has as many children as its label's arity."""
    if isinstance(tree, str):
        if tree == CONST:
            return ops is None or ops.constants
        m = _VAR_RE.match(tree)
        return bool(m) and (ops is None or int(m.group(1)) <= ops.n_vars)
    if not isinstance(tree, tuple) or not tree or tree[0] not in ARITY:
        return False
    if ops is not None and tree[0] not in ops.symbols:
        return False
    return len(tree) - 1 == ARITY[tree[0]] and all(check_arity(ch, ops) for ch in tree[1:])


def paths(tree: Tree, prefix=()) -> Iterator[tuple]:
    """Yield (path, node_depth) for every node in pre-order; root depth is 1."""
    stack = [(tree, prefix)]
    while stack:
        node, p = stack.pop()
        yield p, len(p) + 1
        if not isinstance(node, str):
            for i in range(len(node) - 1, 0, -1):
                stack.append((node[i], p + (i,)))


def get_subtree(tree: Tree, path: Sequence[int]) -> Tree:
    for i in path:
        tree = tree[i]
    return tree


def replace_subtree(tree: Tree, path: Sequence[int], new: Tree) -> Tree:
    if not path:
        return new
    i = path[0]
    return tree[:i] + (replace_subtree(tree[i], path[1:], new),) + tree[i + 1:]


# -- evaluation ------------------------------------------------------------

def evaluate(tree: Tree, X: np.ndarray, c: Sequence[float] = ()) -> np.ndarray:
    """Evaluate ``tree`` row-wise on ``X`` (n x v).

    Constant leaves take the values of ``c`` in pre-order.  Raises
    :class:`Infeasible` if any intermediate or final value is non-finite.
    """
    X = np.asarray(X, dtype=float)
    c = np.asarray(c, dtype=float).ravel()
    n_const = count_constants(tree)
    if c.size != n_const:
        raise ValueError(f"expected {n_const} constants, got {c.size}")
    fn = compile_tree(tree)
    out = fn(X, c)
    if out is None:
        raise Infeasible(format_sexpr(tree))
    return out


def compile_tree(tree: Tree):
    """Build a closure ``f(X, c) -> ndarray | None`` for repeated evaluation.

    ``None`` signals infeasibility.  The lower-level optimiser evaluates the
    same tree thousands of times, so the tree walk is done once here.
    """
    counter = [0]
    fn = _compile(tree, counter)

    def run(X, c):
        with np.errstate(all="ignore"):
            try:
                out = fn(X, c)
            except _Bad:
                return None
        out = np.broadcast_to(out, (X.shape[0],)).astype(float, copy=True)
        return out

    run.n_constants = counter[0]
    return run


class _Bad(Exception):
    pass


def _finite(v):
    if isinstance(v, float):
        if v != v or v in (np.inf, -np.inf):
            raise _Bad
    elif not np.isfinite(v).all():
        raise _Bad
    return v


def _compile(tree, counter):
    if isinstance(tree, str):
        if tree == CONST:
            k = counter[0]
            counter[0] += 1
            return lambda X, c: float(c[k])
        col = int(tree[1:]) - 1
        return lambda X, c: X[:, col]
    sym = tree[0]
    if sym in BINARY:
        op = BINARY[sym]
        a = _compile(tree[1], counter)
        b = _compile(tree[2], counter)
        return lambda X, c: _finite(op(a(X, c), b(X, c)))
    op = UNARY[sym]
    a = _compile(tree[1], counter)
    return lambda X, c: _finite(op(a(X, c)))


# -- s-expressions ---------------------------------------------------------

def format_sexpr(tree: Tree) -> str:
    if isinstance(tree, str):
        return tree
    return "(" + " ".join([tree[0]] + [format_sexpr(ch) for ch in tree[1:]]) + ")"


_TOKEN_RE = re.compile(r"\s*(\(|\)|[^\s()]+)")


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ParseError("unexpected character", pos)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


def parse_sexpr(text: str, ops: Optional[OperatorSet] = None) -> Tree:
    """Parse the text produced by :func:`format_sexpr`.

    With ``ops`` given, operator symbols and variable indices are checked
    against it.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty input", 0)
    tree, i = _parse(tokens, 0, ops, len(text))
    if i != len(tokens):
        raise ParseError("trailing input", tokens[i][1])
    return tree


def _parse(tokens, i, ops, end):
    if i >= len(tokens):
        raise ParseError("unexpected end of input", end)
    tok, pos = tokens[i]
    if tok == ")":
        raise ParseError("unexpected ')'", pos)
    if tok != "(":
        _check_terminal(tok, pos, ops)
        return tok, i + 1
    if i + 1 >= len(tokens):
        raise ParseError("unexpected end of input", end)
    sym, spos = tokens[i + 1]
    if sym not in ARITY or (ops is not None and sym not in ops.symbols):
        raise ParseError(f"unknown operator {sym!r}", spos)
    i += 2
    kids = []
    while True:
        if i >= len(tokens):
            raise ParseError("missing ')'", end)
        if tokens[i][0] == ")":
            break
        kid, i = _parse(tokens, i, ops, end)
        kids.append(kid)
    if len(kids) != ARITY[sym]:
        raise ParseError(f"arity mismatch: {sym!r} takes {ARITY[sym]} arguments, got {len(kids)}", pos)
    return (sym, *kids), i + 1


def _check_terminal(tok, pos, ops):
    if tok == CONST:
        if ops is not None and not ops.constants:
            raise ParseError("constants not allowed", pos)
        return
    m = _VAR_RE.match(tok)
    if not m:
        raise ParseError(f"unknown symbol {tok!r}", pos)
    if ops is not None and int(m.group(1)) > ops.n_vars:
        raise ParseError(f"variable {tok!r} out of range", pos)


# -- generation ------------------------------------------------------------

def random_terminal(ops: OperatorSet, p_const: float, rng: np.random.Generator) -> str:
    if ops.constants and (ops.n_vars == 0 or rng.random() < p_const):
        return CONST
    return f"z{rng.integers(1, ops.n_vars + 1)}"


def _random_operator(ops, rng):
    return ops.symbols[rng.integers(len(ops.symbols))]


def random_tree(ops: OperatorSet, params: GeneratorParams, mode: str, rng: np.random.Generator,
                max_depth: Optional[int] = None) -> Tree:
    """Generate a tree of depth at most ``max_depth`` in ``"grow"`` or ``"full"`` mode."""
    if mode not in ("grow", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    target = params.max_depth if max_depth is None else max_depth
    return _gen(ops, params.p_const, params.p_operator, mode == "full", 1, target, rng)


def _gen(ops, p_const, p_op, full, d, target, rng):
    if d >= target or not ops.symbols:
        return random_terminal(ops, p_const, rng)
    if not full and rng.random() >= p_op:
        return random_terminal(ops, p_const, rng)
    sym = _random_operator(ops, rng)
    return (sym, *(_gen(ops, p_const, p_op, full, d + 1, target, rng) for _ in range(ARITY[sym])))


def ramped_half_and_half(ops: OperatorSet, params: GeneratorParams, rng: np.random.Generator) -> Tree:
    mode = "full" if rng.random() < 0.5 else "grow"
    lo = min(2, params.max_depth)
    target = int(rng.integers(lo, params.max_depth + 1))
    return random_tree(ops, params, mode, rng, max_depth=target)


# -- variation -------------------------------------------------------------

@lru_cache(maxsize=1 << 16)
def _node_info(tree):
    """(path, node depth, subtree height) for every node, in one pass."""
    out = []

    def walk(node, path):
        slot = len(out)
        out.append(None)
        h = 1
        if not isinstance(node, str):
            for i in range(1, len(node)):
                h = max(h, 1 + walk(node[i], path + (i,)))
        out[slot] = (path, len(path) + 1, h)
        return h

    walk(tree, ())
    return tuple(out)


def crossover_subtree(a: Tree, b: Tree, rng: np.random.Generator,
                      max_depth: Optional[int] = None) -> tuple:
    """Swap one uniformly chosen subtree of ``a`` with one of ``b``.

    With ``max_depth`` set, only swaps keeping both offspring within the cap
    are eligible; the root-for-root swap always is.
    """
    info_a = _node_info(a)
    pa, da, ha = info_a[rng.integers(len(info_a))]
    info_b = _node_info(b)
    if max_depth is not None:
        info_b = [(pb, db, hb) for pb, db, hb in info_b
                  if da - 1 + hb <= max_depth and db - 1 + ha <= max_depth]
        if not info_b:
            return b, a
    pb, _, _ = info_b[rng.integers(len(info_b))]
    sa = get_subtree(a, pa)
    sb = get_subtree(b, pb)
    return replace_subtree(a, pa, sb), replace_subtree(b, pb, sa)


def mutate_subtree(tree: Tree, ops: OperatorSet, params: MutationParams,
                   rng: np.random.Generator) -> Tree:
    """Pre-order subtree mutation.

    A leaf is replaced with probability ``p_insert`` by a newly grown subtree,
    where ``p_subtree`` is the chance of placing an operator at each level of
    that subtree (so most insertions swap in a fresh leaf).  An internal node
    is replaced with probability ``p_delete`` by a random leaf.  Replaced
    material is not visited again.
    """
    return _mutate(tree, 1, ops, params, rng)


def _mutate(node, d, ops, params, rng):
    if isinstance(node, str):
        if rng.random() < params.p_insert:
            room = max(params.max_depth - d + 1, 1)
            return _gen(ops, params.p_const, params.p_subtree, False, 1, room, rng)
        return node
    if rng.random() < params.p_delete:
        return random_terminal(ops, params.p_const, rng)
    kids = tuple(_mutate(ch, d + 1, ops, params, rng) for ch in node[1:])
    if all(k is o for k, o in zip(kids, node[1:])):
        return node
    return (node[0], *kids)
