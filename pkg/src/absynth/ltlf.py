"""LTL over finite traces: formulas, parser, progression and DFA construction.

Formulas are hash-consed, so structurally equal formulas (after the
simplifications applied by the constructors) are the same object. Derived
operators are rewritten on construction: F p = true U p, G p = !(true U !p),
p -> q = !p | q.

Progression rewrites a formula against one label and returns the obligation
left for the rest of the trace. ``accepts_empty`` decides whether that
obligation is met when the trace ends. Every simplification below preserves
both the satisfaction relation on nonempty traces and ``accepts_empty``; this
is why ``p U true`` is kept as is (it holds on any nonempty suffix but not on
the empty one) and why progressing a strong next adds that same ``true U true``
marker.
"""
from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyTrace, LtlfSyntaxError, StateExplosion, UnknownAtom

TRUE, FALSE, ATOM, NOT, AND, OR, NEXT, UNTIL = "true", "false", "atom", "not", "and", "or", "next", "until"

_TABLE: dict = {}


class Formula:
    __slots__ = ("kind", "args", "name", "key", "__weakref__")

    def __init__(self, kind, args, name, key):
        self.kind, self.args, self.name, self.key = kind, args, name, key

    def __repr__(self):
        return f"Formula({to_string(self)})"

    def __str__(self):
        return to_string(self)

    def __lt__(self, other):
        return self.key < other.key

    def __reduce__(self):
        return (parse, (to_string(self),))


def _intern(kind, args=(), name=None) -> Formula:
    if kind == ATOM:
        key = "a:" + name
    elif kind in (TRUE, FALSE):
        key = kind
    else:
        key = kind + "(" + ",".join(a.key for a in args) + ")"
    f = _TABLE.get(key)
    if f is None:
        f = _TABLE[key] = Formula(kind, tuple(args), name, key)
    return f


T = _intern(TRUE)
F = _intern(FALSE)


def atom(name: str) -> Formula:
    if name in ("true", "false", "X", "F", "G", "U"):
        raise ValueError(f"{name!r} is a keyword")
    return _intern(ATOM, name=name)


def neg(f: Formula) -> Formula:
    if f is T:
        return F
    if f is F:
        return T
    if f.kind == NOT:
        return f.args[0]
    return _intern(NOT, (f,))


def _nary(kind, unit, zero, fs) -> Formula:
    flat = []
    for f in fs:
        flat.extend(f.args if f.kind == kind else (f,))
    items = set()
    for f in flat:
        if f is zero:
            return zero
        if f is not unit:
            items.add(f)
    for f in items:
        if f.kind == NOT and f.args[0] in items:
            return zero
    if not items:
        return unit
    if len(items) == 1:
        return next(iter(items))
    return _intern(kind, sorted(items))


def conj(*fs: Formula) -> Formula:
    return _nary(AND, T, F, fs)


def disj(*fs: Formula) -> Formula:
    return _nary(OR, F, T, fs)


def nxt(f: Formula) -> Formula:
    return F if f is F else _intern(NEXT, (f,))


def until(a: Formula, b: Formula) -> Formula:
    return F if b is F else _intern(UNTIL, (a, b))


def eventually(f: Formula) -> Formula:
    return until(T, f)


def globally(f: Formula) -> Formula:
    return neg(until(T, neg(f)))


def implies(a: Formula, b: Formula) -> Formula:
    return disj(neg(a), b)


LIVE = until(T, T)  # holds exactly on nonempty suffixes


def atoms_of(f: Formula) -> set:
    if f.kind == ATOM:
        return {f.name}
    out = set()
    for a in f.args:
        out |= atoms_of(a)
    return out


def to_string(f: Formula) -> str:
    k = f.kind
    if k in (TRUE, FALSE):
        return k
    if k == ATOM:
        return f.name
    if k == NOT:
        return "!" + _wrap(f.args[0])
    if k == NEXT:
        return "X " + _wrap(f.args[0])
    if k == UNTIL:
        return _wrap(f.args[0]) + " U " + _wrap(f.args[1])
    sep = " & " if k == AND else " | "
    return sep.join(_wrap(a) for a in f.args)


def _wrap(f):
    s = to_string(f)
    return s if f.kind in (TRUE, FALSE, ATOM, NOT) else "(" + s + ")"


# -- parser ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(->)|([!&|()])|([A-Za-z_][A-Za-z0-9_]*))")
_UNARY = {"!": neg, "X": nxt, "F": eventually, "G": globally}


def _tokenize(text):
    pos, out = 0, []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise LtlfSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastindex)
        out.append((m.group(m.lastindex), start))
        pos = m.end()
    out.append(("<end>", len(text)))
    return out


class _Parser:
    def __init__(self, text, ap):
        self.toks = _tokenize(text)
        self.i = 0
        self.ap = ap

    def peek(self):
        return self.toks[self.i][0]

    def take(self, expected=None):
        tok, pos = self.toks[self.i]
        if expected is not None and tok != expected:
            raise LtlfSyntaxError(f"expected {expected!r}, found {tok!r}", pos)
        self.i += 1
        return tok, pos

    def formula(self):
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return implies(left, self.formula())
        return left

    def disj(self):
        parts = [self.conj()]
        while self.peek() == "|":
            self.take()
            parts.append(self.conj())
        return disj(*parts)

    def conj(self):
        parts = [self.until()]
        while self.peek() == "&":
            self.take()
            parts.append(self.until())
        return conj(*parts)

    def until(self):
        left = self.unary()
        if self.peek() == "U":
            self.take()
            return until(left, self.until())
        return left

    def unary(self):
        tok, pos = self.toks[self.i]
        if tok in _UNARY:
            self.take()
            return _UNARY[tok](self.unary())
        return self.primary()

    def primary(self):
        tok, pos = self.take()
        if tok == "(":
            f = self.formula()
            self.take(")")
            return f
        if tok == "true":
            return T
        if tok == "false":
            return F
        if tok in ("U", "->", "&", "|", ")", "<end>") or not re.match(r"[A-Za-z_]", tok):
            raise LtlfSyntaxError(f"unexpected {tok!r}", pos)
        if self.ap is not None and tok not in self.ap:
            raise UnknownAtom(f"atom {tok!r} at position {pos} is not in {sorted(self.ap)}")
        return atom(tok)


def parse(text: str, ap: Iterable[str] | None = None) -> Formula:
    """Grammar, loosest first: ``->`` (right assoc), ``|``, ``&``, ``U`` (right
    assoc), then the prefix operators ``! X F G``. ``true``/``false`` are constants."""
    p = _Parser(text, set(ap) if ap is not None else None)
    f = p.formula()
    tok, pos = p.toks[p.i]
    if tok != "<end>":
        raise LtlfSyntaxError(f"trailing input {tok!r}", pos)
    return f


# -- progression ---------------------------------------------------------------

def progress(f: Formula, label) -> Formula:
    """Residual obligation after reading ``label`` (a set of atom names)."""
    memo: dict = {}
    return _prog(f, frozenset(label), memo)


def _prog(f, label, memo):
    r = memo.get(f)
    if r is not None:
        return r
    k = f.kind
    if k in (TRUE, FALSE):
        r = f
    elif k == ATOM:
        r = T if f.name in label else F
    elif k == NOT:
        r = neg(_prog(f.args[0], label, memo))
    elif k == AND:
        r = conj(*(_prog(a, label, memo) for a in f.args))
    elif k == OR:
        r = disj(*(_prog(a, label, memo) for a in f.args))
    elif k == NEXT:
        r = conj(f.args[0], LIVE)
    else:
        a, b = f.args
        r = disj(_prog(b, label, memo), conj(_prog(a, label, memo), f))
    memo[f] = r
    return r


def accepts_empty(f: Formula) -> bool:
    k = f.kind
    if k == TRUE:
        return True
    if k in (FALSE, ATOM, NEXT, UNTIL):
        return False
    if k == NOT:
        return not accepts_empty(f.args[0])
    if k == AND:
        return all(accepts_empty(a) for a in f.args)
    return any(accepts_empty(a) for a in f.args)


def trace_sat(f: Formula, trace: Sequence) -> bool:
    """Direct finite-trace semantics at position 0 (independent of progression)."""
    if len(trace) == 0:
        raise EmptyTrace("trace must be nonempty")
    tr = [frozenset(l) for l in trace]
    memo: dict = {}

    def sat(g, i):
        key = (g, i)
        if key in memo:
            return memo[key]
        k = g.kind
        if k == TRUE:
            r = True
        elif k == FALSE:
            r = False
        elif k == ATOM:
            r = g.name in tr[i]
        elif k == NOT:
            r = not sat(g.args[0], i)
        elif k == AND:
            r = all(sat(a, i) for a in g.args)
        elif k == OR:
            r = any(sat(a, i) for a in g.args)
        elif k == NEXT:
            r = i + 1 < len(tr) and sat(g.args[0], i + 1)
        else:
            a, b = g.args
            r = any(sat(b, j) and all(sat(a, m) for m in range(i, j)) for j in range(i, len(tr)))
        memo[key] = r
        return r

    return sat(f, 0)


# -- automaton -----------------------------------------------------------------

@dataclass(frozen=True)
class Dfa:
    """Deterministic automaton over label bitmasks (bit i set iff ``ap[i]`` holds).

    Accepting states are absorbing; all residuals that accept the empty suffix
    are merged into one accepting sink. The initial state is never accepting
    unless the formula itself is ``true``, since acceptance needs at least one
    consumed label.
    """

    states: tuple
    ap: tuple
    delta: np.ndarray  # (n_states, 2**len(ap)) int32
    init: int
    accepting: np.ndarray  # bool mask
    reject: int  # -1 when the false state is unreachable

    @property
    def n_states(self) -> int:
        return len(self.states)

    def mask(self, label) -> int:
        return sum(1 << i for i, p in enumerate(self.ap) if p in label)

    def step(self, z: int, label) -> int:
        m = label if isinstance(label, (int, np.integer)) else self.mask(label)
        return int(self.delta[z, m])

    def run(self, trace) -> list:
        zs, z = [self.init], self.init
        for l in trace:
            z = self.step(z, l)
            zs.append(z)
        return zs

    def to_json(self) -> dict:
        return {
            "ap": list(self.ap),
            "states": [to_string(s) for s in self.states],
            "init": self.init,
            "accepting": np.flatnonzero(self.accepting).tolist(),
            "reject": self.reject,
            "delta": self.delta.tolist(),
        }

    def to_dot(self) -> str:
        lines = ["digraph dfa {", "  rankdir=LR;", '  start [shape=point];']
        for i, s in enumerate(self.states):
            shape = "doublecircle" if self.accepting[i] else "circle"
            text = to_string(s).replace('"', '\\"')
            lines.append(f'  z{i} [shape={shape}, label="z{i}: {text}"];')
        lines.append(f"  start -> z{self.init};")
        for i in range(self.n_states):
            groups: dict = {}
            for m, j in enumerate(self.delta[i]):
                groups.setdefault(int(j), []).append(m)
            for j, ms in groups.items():
                lab = ",".join(str(m) for m in ms)
                lines.append(f'  z{i} -> z{j} [label="{lab}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_dfa(f: Formula, ap: Sequence[str], max_states: int = 100_000) -> Dfa:
    ap = tuple(ap)
    if len(ap) > 16:
        raise ValueError("at most 16 atomic propositions")
    missing = atoms_of(f) - set(ap)
    if missing:
        raise UnknownAtom(f"atoms {sorted(missing)} not in {list(ap)}")
    labels = [frozenset(p for i, p in enumerate(ap) if m >> i & 1) for m in range(1 << len(ap))]
    states = [f]
    index = {f: 0}
    rows = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        src = states[i]
        row = []
        for lab in labels:
            g = progress(src, lab)
            if accepts_empty(g):
                g = T
            j = index.get(g)
            if j is None:
                if len(states) >= max_states:
                    raise StateExplosion(f"more than {max_states} automaton states")
                j = index[g] = len(states)
                states.append(g)
                queue.append(j)
            row.append(j)
        rows.append((i, row))
    delta = np.zeros((len(states), len(labels)), dtype=np.int32)
    for i, row in rows:
        delta[i] = row
    accepting = np.array([s is T for s in states])
    return Dfa(tuple(states), ap, delta, 0, accepting, index.get(F, -1))


def prefix_accepts(dfa: Dfa, trace) -> bool:
    z = dfa.init
    if dfa.accepting[z]:
        return True
    for l in trace:
        z = dfa.step(z, l)
        if dfa.accepting[z]:
            return True
    return False


def dfa_json(dfa: Dfa) -> str:
    return json.dumps(dfa.to_json(), indent=1)
