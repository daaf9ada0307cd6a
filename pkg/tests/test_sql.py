import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jitindex.errors import SqlError, SqlSyntaxError, UnsupportedConstructError
from jitindex.sql import ColumnRef, JoinSpec, Predicate, QueryAst, parse, render, tokenize

Q1 = "select * from physicsmarks where m1 = 1"
Q4 = "select * from chemistrymarks INNER JOIN physicsmarks on chemistrymarks.m1 = physicsmarks.m1"


def test_query1_shape():
    q = parse(Q1)
    assert q.base_table == "PHYSICSMARKS"
    assert q.join is None
    assert q.where == (Predicate(ColumnRef("M1"), "=", 1),)
    assert q.where[0].sargable


def test_empty_where():
    q = parse("select * from t")
    assert q.base_table == "T" and q.where == () and q.n_columns == 0
    assert render(q) == "SELECT * FROM t"


def test_join_shape():
    q = parse(Q4)
    assert q.join == JoinSpec("PHYSICSMARKS", ColumnRef("M1", "CHEMISTRYMARKS"), ColumnRef("M1", "PHYSICSMARKS"))
    assert q.n_columns == 2
    assert parse(render(q)) == q


def test_render_canonical():
    assert render(parse(Q1)) == "SELECT * FROM physicsmarks WHERE m1 = 1"
    assert render(parse("SeLeCt  *\n FROM T  where A>=3 and b='x''y';")) == "SELECT * FROM t WHERE a >= 3 AND b = 'x''y'"


@pytest.mark.parametrize("text", [
    "select * from t where a = b or c = 1",
    "select * from t order by a",
    "select a from t",
    "select * from t where a in (1, 2)",
    "select * from t where a <> 1",
    "select * from t where a != 1",
    "select * from t, u",
    "select * from t left join u on t.a = u.a",
    "select * from t inner join u on t.a < u.a",
])
def test_unsupported(text):
    with pytest.raises(UnsupportedConstructError):
        parse(text)


@pytest.mark.parametrize("text, offset", [
    ("select * from", 13),
    ("select * frm t", 9),
    ("select * from t where", 21),
    ("select * from t where a = ", 26),
    ("select * from t where a = 'abc", 26),
    ("select * from t where a # 1", 24),
])
def test_syntax_error_offsets(text, offset):
    with pytest.raises(SqlSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset


def test_offsets_are_bytes():
    with pytest.raises(SqlSyntaxError) as info:
        parse("select * from t where b = 'é' #")
    assert info.value.offset == len("select * from t where b = 'é' ".encode())


# -- property tests -------------------------------------------------------------

IDENTS = ["a", "b", "m1", "m65", "total", "rownum", "x_1"]
TABLES = ["t", "u", "physicsmarks"]


def _case(draw, word):
    flips = draw(st.lists(st.booleans(), min_size=len(word), max_size=len(word)))
    return "".join(c.upper() if f else c for c, f in zip(word, flips))


@st.composite
def query_texts(draw):
    """Grammar-valid query strings with random casing and spacing."""
    sp = lambda: draw(st.sampled_from([" ", "  ", "\n", "\t "]))  # noqa: E731

    def col(tables):
        name = _case(draw, draw(st.sampled_from(IDENTS)))
        if draw(st.booleans()):
            return f"{_case(draw, draw(st.sampled_from(tables)))}.{name}"
        return name

    base = draw(st.sampled_from(TABLES))
    tables = [base]
    text = f"{_case(draw, 'select')}{sp()}*{sp()}{_case(draw, 'from')}{sp()}{_case(draw, base)}"
    if draw(st.booleans()):
        right = draw(st.sampled_from([t for t in TABLES if t != base]))
        tables.append(right)
        text += (f"{sp()}{_case(draw, 'inner')} {_case(draw, 'join')} {right}{sp()}on "
                 f"{base}.{draw(st.sampled_from(IDENTS))} = {right}.{draw(st.sampled_from(IDENTS))}")
    n_preds = draw(st.integers(0, 4))
    preds = []
    for _ in range(n_preds):
        op = draw(st.sampled_from(["=", "<", "<=", ">", ">="]))
        rhs = draw(st.one_of(
            st.integers(-1000, 1000).map(str),
            st.text(alphabet="abc' ", max_size=4).map(lambda s: "'" + s.replace("'", "''") + "'"),
            st.just(None),
        ))
        preds.append(f"{col(tables)}{sp()}{op}{sp()}{rhs if rhs is not None else col(tables)}")
    if preds:
        text += f"{sp()}{_case(draw, 'where')} " + f"{sp()}{_case(draw, 'and')} ".join(preds)
    if draw(st.booleans()):
        text += ";"
    return text


@settings(max_examples=300, deadline=None)
@given(query_texts())
def test_round_trip(text):
    q = parse(text)
    assert parse(render(q)) == q
    assert render(parse(render(q))) == render(q)


def brute_force_n(text: str) -> int:
    """Distinct column references after ON/WHERE, counted over raw tokens."""
    toks = tokenize(text)
    refs = set()
    active = False
    i = 0
    while i < len(toks):
        t = toks[i]
        word = t.text.upper()
        if t.kind == "ident" and word in ("ON", "WHERE"):
            active = True
        elif active and t.kind == "ident" and word != "AND":
            if toks[i + 1].text == ".":
                refs.add((word, toks[i + 2].text.upper()))
                i += 2
            else:
                refs.add((None, word))
        i += 1
    return len(refs)


@settings(max_examples=300, deadline=None)
@given(query_texts())
def test_n_matches_token_count(text):
    assert parse(text).n_columns == brute_force_n(text)


@settings(max_examples=500, deadline=None)
@given(st.one_of(st.binary(max_size=60), st.text(max_size=60)))
def test_parser_never_crashes(data):
    try:
        parse(data)
    except SqlError:
        pass


@settings(max_examples=300, deadline=None)
@given(query_texts(), st.sampled_from([" or a = 1", " order by a", " group by a"]))
def test_out_of_grammar_suffix_rejected(text, suffix):
    with pytest.raises(SqlError):
        parse(text.rstrip(";") + suffix)


def test_ast_is_frozen():
    q = parse(Q1)
    with pytest.raises(AttributeError):
        q.base_table = "X"
    assert isinstance(q, QueryAst)
