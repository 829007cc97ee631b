import itertools
import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from absynth.errors import EmptyTrace, LtlfSyntaxError, StateExplosion, UnknownAtom
from absynth.ltlf import (F, LIVE, T, accepts_empty, atom, build_dfa, conj, disj, dfa_json, eventually, globally,
                          implies, neg, nxt, parse, prefix_accepts, progress, to_string, trace_sat, until)

PHI1 = "F goal & G safe"
PHI2 = "G safe & G (water -> (!charge U carpet)) & F charge"

# 22 formulas over at most three atoms
FORMULAS = [
    ("F a", "abc"), ("G a", "abc"), ("a U b", "abc"), ("X a", "abc"), ("!X a", "abc"), ("X X a", "abc"),
    ("F a & G b", "abc"), ("G (a -> X b)", "abc"), ("G (a -> F b)", "abc"), ("(a U b) U c", "abc"),
    ("!(a U b)", "abc"), ("F (a & X F b)", "abc"), ("G F a", "abc"), ("F G a", "abc"), ("a | X (b & X c)", "abc"),
    ("(!b U a) & G c", "abc"), ("true", "abc"), ("false", "abc"), ("X true", "abc"), ("!a U (b | c)", "abc"),
    (PHI1, ("safe", "goal")), (PHI2, ("water", "charge", "carpet")),
]
# PHI2 has four atoms; its exhaustive run keeps "safe" true on every label so
# that three atoms vary
FIXED = {PHI2: frozenset({"safe"})}


def labels_of(ap):
    return [frozenset(p for i, p in enumerate(ap) if m >> i & 1) for m in range(1 << len(ap))]


def semantic_prefix(f, trace):
    return any(trace_sat(f, trace[:k]) for k in range(1, len(trace) + 1))


def test_parse_phi1_shape():
    f = parse(PHI1)
    g, s = atom("goal"), atom("safe")
    assert f is conj(until(T, g), neg(until(T, neg(s))))


def test_parse_phi2_shape():
    f = parse(PHI2)
    safe, water, charge, carpet = (atom(n) for n in ("safe", "water", "charge", "carpet"))
    expected = conj(globally(safe), globally(implies(water, until(neg(charge), carpet))), eventually(charge))
    assert f is expected


@pytest.mark.parametrize("text", ["U goal", "a &", "(a | b", "a b", "a $ b", ""])
def test_syntax_errors(text):
    with pytest.raises(LtlfSyntaxError):
        parse(text)


def test_syntax_error_position():
    with pytest.raises(LtlfSyntaxError) as e:
        parse("a & & b")
    assert e.value.position == 4


def test_unknown_atom():
    with pytest.raises(UnknownAtom):
        parse("F goal", ap=["safe"])
    with pytest.raises(UnknownAtom):
        build_dfa(parse("F goal"), ["safe"])


def test_round_trip_through_string():
    for text, _ in FORMULAS:
        f = parse(text)
        assert parse(to_string(f)) is f


def test_hash_consing_and_pickle():
    assert parse("a & b") is parse("b & a")
    assert parse("!!a") is atom("a")
    assert pickle.loads(pickle.dumps(parse(PHI2))) is parse(PHI2)


def test_progress_examples():
    p = atom("p")
    assert progress(eventually(p), {"p"}) is T
    assert progress(globally(p), set()) is F
    q = atom("q")
    assert progress(until(p, q), {"p"}) is until(p, q)


def test_accepts_empty_examples():
    p = atom("p")
    assert accepts_empty(globally(p))
    assert not accepts_empty(eventually(p))
    assert accepts_empty(T)
    assert not accepts_empty(LIVE)


def test_trace_sat_examples():
    f = parse(PHI1)
    assert trace_sat(f, [{"safe"}, {"safe", "goal"}])
    assert not trace_sat(f, [{"safe"}, {"goal"}])
    assert not trace_sat(parse(PHI2), [{"safe", "water"}, {"safe", "charge"}])
    with pytest.raises(EmptyTrace):
        trace_sat(f, [])


def test_strong_next_needs_a_successor():
    assert not trace_sat(nxt(atom("a")), [{"a"}])
    assert trace_sat(neg(nxt(atom("a"))), [{"a"}])


def test_dfa_phi1_has_three_states():
    dfa = build_dfa(parse(PHI1), ("safe", "goal"))
    assert dfa.n_states == 3
    assert not dfa.accepting[dfa.init]
    assert dfa.reject >= 0 and dfa.accepting.sum() == 1
    acc = int(np.flatnonzero(dfa.accepting)[0])
    for z in (acc, dfa.reject):
        assert np.all(dfa.delta[z] == z)
    assert dfa.step(dfa.init, {"safe", "goal"}) == acc
    assert dfa.step(dfa.init, {"goal"}) == dfa.reject
    assert dfa.step(dfa.init, {"safe"}) == dfa.init


def test_dfa_true_single_state():
    dfa = build_dfa(T, ("a",))
    assert dfa.n_states == 1 and dfa.accepting[0] and dfa.reject == -1


def test_dfa_globally_safe():
    dfa = build_dfa(parse("G safe"), ("safe",))
    # init, accepting sink, rejecting sink; init is not accepting because
    # acceptance needs one consumed label
    assert dfa.n_states == 3
    assert not dfa.accepting[dfa.init]
    assert dfa.accepting[dfa.step(dfa.init, {"safe"})]
    assert dfa.step(dfa.init, set()) == dfa.reject


def test_dfa_phi2_states_and_export():
    dfa = build_dfa(parse(PHI2), ("safe", "water", "charge", "carpet"))
    assert dfa.n_states == 4
    d = dfa.to_json()
    assert len(d["delta"]) == 4 and len(d["delta"][0]) == 16
    assert dfa_json(dfa).startswith("{")
    assert dfa.to_dot().count("->") >= 4


def test_state_explosion():
    with pytest.raises(StateExplosion):
        build_dfa(parse("X X X X X a"), ("a",), max_states=3)


def exhaustive_agreement(f, ap, labels, max_len):
    """Compares DFA prefix acceptance with the direct semantics on every trace up to ``max_len``."""
    dfa = build_dfa(f, ap)
    prev = {(): False}
    checked = 0
    for _ in range(max_len):
        cur = {}
        for tr, acc in prev.items():
            for lab in labels:
                t = tr + (lab,)
                # some prefix satisfies f: either a shorter one already did or the whole trace does
                cur[t] = acc or trace_sat(f, t)
                assert prefix_accepts(dfa, t) == cur[t], t
                checked += 1
        prev = cur
    return checked


@pytest.mark.parametrize("text,ap", FORMULAS, ids=[t for t, _ in FORMULAS])
def test_dfa_matches_semantics_on_all_short_traces(text, ap):
    ap = tuple(ap)
    fixed = FIXED.get(text, frozenset())
    labels = [lab | fixed for lab in labels_of(ap)]
    n = exhaustive_agreement(parse(text), ap + tuple(sorted(fixed)), labels, 5)
    assert n == sum(len(labels) ** k for k in range(1, 6))


def test_phi2_all_four_atoms_short_traces():
    ap = ("safe", "water", "charge", "carpet")
    exhaustive_agreement(parse(PHI2), ap, labels_of(ap), 3)


_atoms = st.sampled_from([atom("a"), atom("b"), T, F])


def _extend(children):
    return st.one_of(
        children.map(neg), children.map(nxt), children.map(eventually), children.map(globally),
        st.tuples(children, children).map(lambda t: conj(*t)),
        st.tuples(children, children).map(lambda t: disj(*t)),
        st.tuples(children, children).map(lambda t: until(*t)),
    )


formulas = st.recursive(_atoms, _extend, max_leaves=5)
traces = st.lists(st.frozensets(st.sampled_from(["a", "b"])), min_size=1, max_size=5)


@given(formulas, traces)
def test_progression_agrees_with_semantics(f, trace):
    # progressing through the whole trace leaves an obligation that holds on the empty suffix iff f holds
    g = f
    for lab in trace:
        g = progress(g, lab)
    assert accepts_empty(g) == trace_sat(f, trace)


@given(formulas, traces)
def test_random_dfa_prefix_acceptance(f, trace):
    dfa = build_dfa(f, ("a", "b"))
    assert prefix_accepts(dfa, trace) == semantic_prefix(f, trace)
    zs = dfa.run(trace)
    assert len(zs) == len(trace) + 1
    # accepting and rejecting sinks are absorbing
    for z in zs:
        if dfa.accepting[z] or z == dfa.reject:
            assert np.all(dfa.delta[z] == z)
