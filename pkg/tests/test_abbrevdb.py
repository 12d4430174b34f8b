import pytest
from hypothesis import given, strategies as st

from degreelevel.abbrevdb import AbbrevDb, canonical_key, expand_expression, load_db, parse_db
from degreelevel.errors import FormatError, UnknownLevel

HEADER = "abbreviation\texpansion\tlevels\tsource\n"


@pytest.mark.parametrize("raw,key", [("A.S.", "AS"), ("*AS", "AS"), ("", ""), ("a. s.", "AS"),
                                     ("Ph.D", "PHD"), ("DTA/MRP", "DTAMRP")])
def test_canonical_key(raw, key):
    assert canonical_key(raw) == key


@given(st.text())
def test_canonical_key_idempotent(s):
    k = canonical_key(s)
    assert canonical_key(k) == k
    assert all(c.isascii() and (c.isupper() or c.isdigit()) for c in k)


def test_seed_db_size(db):
    assert len(db) >= 300


def test_parse_rows(tx):
    d = parse_db(HEADER + "B.R.E.\tBACHELOR OF RELIGIOUS EDUCATION\tBachelor\n"
                 "DTA/MRP\tDIRECT TRANSFER AGREEMENT MAJOR RELATED PROGRAM\tAssociate\n", tx)
    (bre,) = d.lookup("BRE")
    assert bre.levels == tx.labelset(["Bachelor"])
    (dta,) = d.lookup("DTA/MRP")
    assert dta.levels == tx.labelset(["Associate"])


def test_header_only_is_empty(tx):
    d = parse_db(HEADER, tx)
    assert len(d) == 0 and d.lookup("AS") == []


def test_multi_level_entry(tx):
    d = parse_db(HEADER + "PHARMD/MBA\tDOCTOR OF PHARMACY MASTER OF BUSINESS ADMINISTRATION"
                 "\tDoctorate-Professional;Master\n", tx)
    assert d.entries[0].levels == tx.labelset(["Master", "Doctorate-Professional"])


def test_duplicate_keys_retained(tx):
    d = parse_db(HEADER + "AB\tBACHELOR OF ARTS\tBachelor\nA.B.\tASSOCIATE IN BUSINESS\tAssociate\n", tx)
    assert len(d.lookup("AB")) == 2


def test_format_errors(tx, tmp_path):
    with pytest.raises(FormatError) as e:
        parse_db(HEADER + "AS\tASSOCIATE OF SCIENCE\n", tx)
    assert e.value.line == 2
    with pytest.raises(FormatError):
        parse_db("abbr\texp\n", tx)
    with pytest.raises(UnknownLevel):
        parse_db(HEADER + "X\tXYZ\tNoSuchLevel\n", tx)
    p = tmp_path / "db.tsv"
    p.write_text(HEADER + "# comment\n\nAS\tASSOCIATE OF SCIENCE\tAssociate\n", encoding="utf-8")
    assert len(load_db(p, tx)) == 1


@pytest.mark.parametrize("variant", ["AS", "A.S.", "A. S.", "*AS", "A S", ".A.S."])
def test_associate_variants(db, tx, variant):
    assoc = tx.category_id("Associate")
    entries = db.lookup(variant) or [s.entry for s in expand_expression(db, variant).spans]
    assert any(assoc in e.levels for e in entries)


def test_lookup_examples(db, tx):
    assert any(tx.category_id("Bachelor") in e.levels for e in db.lookup("AB"))
    assert db.lookup("ZZZZ") == []


def test_expand_examples(db, tx):
    e = expand_expression(db, "B.R.E.")
    assert e.text == "BACHELOR OF RELIGIOUS EDUCATION"
    assert len(e.spans) == 1 and e.spans[0].source == "B.R.E."

    e = expand_expression(db, "DTA/MRP")
    assert e.text == "DIRECT TRANSFER AGREEMENT MAJOR RELATED PROGRAM"
    assert e.spans[0].entry.levels == tx.labelset(["Associate"])

    e = expand_expression(db, "BACHELOR OF ARTS")
    assert e.text == "BACHELOR OF ARTS" and e.spans == []


def test_longest_match_first(db):
    e = expand_expression(db, "ASN TO BSN")
    assert len(e.spans) == 1
    assert e.text.startswith("ASSOCIATE OF SCIENCE IN NURSING TO BACHELOR")


def test_ambiguous_left_in_place(tx):
    d = parse_db(HEADER + "AB\tBACHELOR OF ARTS\tBachelor\nA.B.\tASSOCIATE IN BUSINESS\tAssociate\n", tx)
    e = expand_expression(d, "AB IN HISTORY")
    assert e.text == "AB IN HISTORY"
    assert e.spans[0].ambiguous and e.spans[0].entry is None and len(e.spans[0].entries) == 2


def test_spans_index_both_strings(db):
    raw = "*A.S. IN NURSING / MBA"
    e = expand_expression(db, raw)
    for s in e.spans:
        assert raw[s.start:s.end] == s.source
        assert e.text[s.out_start:s.out_end] == s.replacement


@given(st.lists(st.sampled_from(["A.S.", "MBA", "NURSING", "*AS", "OF", "ZZQ", "B.R.E.", "/", "IN"]),
                max_size=6))
def test_expansion_keeps_unmatched_tokens(db, words):
    raw = " ".join(words)
    e = expand_expression(db, raw)
    assert expand_expression(db, raw) == e
    rebuilt, cursor = [], 0
    for s in e.spans:
        rebuilt += [raw[cursor:s.start], s.replacement]
        cursor = s.end
    rebuilt.append(raw[cursor:])
    assert "".join(rebuilt) == e.text
    # every input token survives either verbatim or inside a matched span
    covered = canonical_key("".join(rebuilt[::2])) + "".join(canonical_key(s.source) for s in e.spans)
    assert sorted(canonical_key(raw)) == sorted(covered)


def test_empty_db_expands_nothing():
    e = expand_expression(AbbrevDb(), "A.S.")
    assert e.text == "A.S." and e.spans == []
