import io
import json
import math

import pytest
from hypothesis import given, strategies as st

from qoiscore.errors import DimensionMismatch, EmptyBatch, NonFiniteFeature, ParseError
from qoiscore.indicators import (
    IndicatorBatch,
    LabeledSample,
    LabelSet,
    ReferenceDataset,
    derive_key,
    parse_reference,
    parse_samples,
    validate_batch,
    write_batch_csv,
    write_samples,
)

from conftest import make_batch, make_sample


def rec(**kw):
    return json.dumps(kw)


def test_two_lines_same_contributor_one_batch():
    text = "\n".join([
        rec(contributor_id="v1", label="Zeus", features=[1, 2, 3]),
        rec(contributor_id="v1", label="Avzhan", features=[4, 5, 6]),
    ])
    batches = parse_samples(text)
    assert len(batches) == 1
    assert batches[0].contributor_id == "v1"
    assert [s.declared_label for s in batches[0].samples] == ["Zeus", "Avzhan"]
    assert batches[0].samples[0].features == (1.0, 2.0, 3.0)


def test_empty_stream():
    assert parse_samples("") == []
    assert parse_samples(io.StringIO("\n\n")) == []


def test_dimension_mismatch_names_line_two():
    text = "\n".join([
        rec(contributor_id="v1", label="a", features=[1, 2, 3]),
        rec(contributor_id="v2", label="a", features=[1, 2, 3, 4]),
    ])
    with pytest.raises(ParseError) as err:
        parse_samples(text)
    assert err.value.line == 2
    assert "line 2" in str(err.value) and "v2" in str(err.value)


@pytest.mark.parametrize("line", [
    "{not json",
    "[1, 2]",
    rec(label="a", features=[1]),
    rec(contributor_id="v", features=[1]),
    rec(contributor_id="v", label="a", features=[]),
    rec(contributor_id="v", label="a", features=["x"]),
    rec(contributor_id="v", label="a", features=[True]),
    '{"contributor_id": "v", "label": "a", "features": [NaN]}',
])
def test_malformed_line_names_line_number(line):
    text = rec(contributor_id="ok", label="a", features=[0]) + "\n" + line
    with pytest.raises(ParseError) as err:
        parse_samples(text)
    assert err.value.line == 2


def test_grouping_preserves_order_and_sample_id():
    text = "\n".join([
        rec(contributor_id="b", label="x", features=[1]),
        rec(contributor_id="a", label="y", features=[2], sample_id="abc"),
        rec(contributor_id="b", label="z", features=[3]),
    ])
    batches = parse_samples(text)
    assert [b.contributor_id for b in batches] == ["b", "a"]
    assert [s.declared_label for s in batches[0].samples] == ["x", "z"]
    assert batches[1].samples[0].key == "abc"
    assert batches[0].samples[0].key == derive_key([1.0])


def test_derive_key_identity_and_exactness():
    a = make_sample([1.0, 2.5], "Zeus")
    b = make_sample([1.0, 2.5], "Avzhan")
    assert derive_key(a) == derive_key(b)
    assert a.key == b.key
    assert derive_key([1.0, 2.5]) != derive_key([1.0, 2.5 + 1e-9])
    assert derive_key([1, 2]) == derive_key([1.0, 2.0])


def test_derive_key_repeated_runs_frozen():
    # sha256 of "1.0,2.5"
    assert derive_key([1.0, 2.5]) == derive_key([1.0, 2.5])
    import hashlib
    assert derive_key([1.0, 2.5]) == hashlib.sha256(b"1.0,2.5").hexdigest()


def test_derive_key_rejects_non_finite():
    with pytest.raises(NonFiniteFeature):
        derive_key([1.0, math.inf])


def test_derive_key_collision_free_on_corpus():
    corpus = {(float(i), float(j) / 7) for i in range(40) for j in range(40)}
    keys = {derive_key(v) for v in corpus}
    assert len(keys) == len(corpus)


def test_validate_empty_batch():
    with pytest.raises(EmptyBatch) as err:
        validate_batch(IndicatorBatch("v", ()), 2)
    assert err.value.code == "empty_batch"


def test_validate_unknown_label_is_warning():
    batch = make_batch("v", [([0, 0], "unheard-of-family"), ([1, 1], "a")])
    result = validate_batch(batch, 2, LabelSet(("a", "b")))
    assert len(result.batch) == 2
    assert any("unheard-of-family" in w for w in result.warnings)


def test_validate_non_finite_and_dimension():
    nan_sample = LabeledSample("k", (float("nan"), 0.0), "a")
    with pytest.raises(NonFiniteFeature) as err:
        validate_batch(IndicatorBatch("v", (nan_sample,)), 2)
    assert err.value.code == "non_finite_feature"
    with pytest.raises(DimensionMismatch):
        validate_batch(make_batch("v", [([0, 0, 0], "a")]), 2)


def test_validate_collapses_duplicates():
    batch = make_batch("v", [([0, 0], "a"), ([0, 0], "b"), ([1, 0], "a")])
    result = validate_batch(batch, 2)
    assert len(result.batch) == 2
    assert result.duplicates_removed == 1
    assert result.batch.samples[0].declared_label == "a"  # smallest label of the pair survives
    assert any("duplicate" in w for w in result.warnings)


def test_label_set_lookup():
    ls = LabelSet(("Zeus", "Avzhan"))
    assert ls.index("zeus") == 0 and ls.find("AVZHAN") == 1
    assert ls.find("other") is None
    with pytest.raises(ValueError):
        LabelSet(("a", "A"))
    with pytest.raises(ValueError):
        LabelSet(())


def test_reference_counts_and_labels():
    samples = [make_sample([i, 0], lab) for i, lab in enumerate("aabbb")]
    ref = ReferenceDataset.from_samples(samples)
    assert ref.label_set.labels == ("a", "b")
    assert ref.counts == (2, 3)
    assert sum(ref.counts) == len(ref)
    with pytest.raises(ValueError):
        ReferenceDataset.from_samples(samples, labels=["a"])


def test_parse_reference_ignores_contributor():
    text = "\n".join([
        rec(label="a", features=[0]),
        rec(contributor_id="x", label="b", features=[1]),
    ])
    ref = parse_reference(text)
    assert ref.label_set.labels == ("a", "b")
    with pytest.raises(ParseError):
        parse_reference("")


def test_batch_csv_export():
    batch = make_batch("v", [([0.5, 1.0], "a")])
    out = io.StringIO()
    write_batch_csv(batch, out)
    lines = out.getvalue().splitlines()
    assert lines[0] == "contributor_id,sample_key,label,f0,f1"
    assert lines[1] == f"v,{batch.samples[0].key},a,0.5,1.0"


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
records = st.lists(
    st.tuples(
        st.sampled_from(["v1", "v2", "v3"]),
        st.text(min_size=1, max_size=8),
        st.one_of(st.none(), st.text(max_size=12)),
        st.lists(finite, min_size=3, max_size=3),
    ),
    max_size=15,
)


@given(records)
def test_parse_write_parse_roundtrip(rows):
    lines = [
        json.dumps({"contributor_id": c, "label": lab, "label_string": ls, "features": f})
        for c, lab, ls, f in rows
    ]
    first = parse_samples("\n".join(lines))
    buf = io.StringIO()
    write_samples(first, buf)
    second = parse_samples(buf.getvalue())
    assert first == second
