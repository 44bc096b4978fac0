import itertools

import numpy as np
import pytest

from avvad.taxonomy import (DEFAULT_RULES, AudioClass, RuleTable, TargetClass, VisualClass, apply_rule,
                            one_hot)

A, V, T = AudioClass, VisualClass, TargetClass

CANONICAL = {
    ("Silence", "Vocalizing"): "Silence", ("Silence", "NonVocalizing"): "Silence",
    ("Speech", "Vocalizing"): "Speech", ("Speech", "NonVocalizing"): "Others",
    ("Singing", "Vocalizing"): "Singing", ("Singing", "NonVocalizing"): "Others",
    ("Others", "Vocalizing"): "Others", ("Others", "NonVocalizing"): "Others",
}


@pytest.mark.parametrize("cell", sorted(CANONICAL))
def test_canonical_table_all_cells(cell):
    a, v = cell
    assert apply_rule(A.parse(a), V.parse(v)).label == CANONICAL[cell]


def test_rule_examples():
    assert apply_rule(A.SPEECH, V.VOCALIZING) is T.SPEECH
    assert apply_rule(A.SPEECH, V.NON_VOCALIZING) is T.OTHERS
    assert apply_rule(A.SILENCE, V.VOCALIZING) is T.SILENCE
    assert apply_rule(A.OTHERS, V.VOCALIZING) is T.OTHERS


def test_rule_is_total_and_pure():
    for a, v in itertools.product(A, V):
        first = apply_rule(a, v)
        assert first in T
        assert apply_rule(a, v) == first


def test_vectorised_rule_matches_scalar(rng):
    a = rng.integers(0, 4, 500)
    v = rng.integers(0, 2, 500)
    expected = [apply_rule(x, y) for x, y in zip(a, v)]
    assert np.array_equal(DEFAULT_RULES.apply_frames(a, v), expected)


def test_table_is_configurable_and_serialisable():
    custom = dict(CANONICAL)
    custom[("Others", "Vocalizing")] = "Speech"
    rules = RuleTable(custom)
    assert rules(A.OTHERS, V.VOCALIZING) is T.SPEECH
    assert RuleTable.from_dict(rules.to_dict()) == rules
    assert rules != DEFAULT_RULES


def test_partial_table_rejected():
    partial = dict(CANONICAL)
    del partial[("Speech", "Vocalizing")]
    with pytest.raises(ValueError, match="not total"):
        RuleTable(partial)


def test_cells_and_one_hot():
    assert set(DEFAULT_RULES.cells(T.OTHERS)) == {
        (A.SPEECH, V.NON_VOCALIZING), (A.SINGING, V.NON_VOCALIZING),
        (A.OTHERS, V.VOCALIZING), (A.OTHERS, V.NON_VOCALIZING)}
    oh = one_hot([0, 3, 1], 4)
    assert oh.tolist() == [[1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 0, 0]]
    with pytest.raises(ValueError):
        A.parse("Humming")
