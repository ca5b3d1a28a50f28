"""Parser tests: printed syntax must read back as the same tree."""

import pytest
from hypothesis import given, settings, strategies as st

from metl.parse import ParseError, parse_core, parse_modality, parse_row, parse_type
from metl.syntax import (
    ABSENT,
    Absolute,
    App,
    Arrow,
    BOOL,
    BinOp,
    Box,
    CaseData,
    CaseList,
    CaseProd,
    CaseSum,
    Cons,
    Do,
    EMPTY_ROW,
    Fix,
    Fold,
    Forall,
    Handle,
    Handler,
    HandlerFlavor,
    IDENTITY,
    INT,
    If,
    Inl,
    Inr,
    IntLit,
    Kind,
    Lam,
    Letmod,
    ListType,
    Mask,
    Mod,
    NamedType,
    Nil,
    OpClause,
    OpSig,
    Pair,
    Product,
    Relative,
    Row,
    RowVar,
    STRING,
    StrLit,
    Sum,
    TyApp,
    TyLam,
    TyVar,
    UNIT,
    UnitVal,
    Var,
    pretty_modality,
    pretty_row,
    pretty_term,
    pretty_type,
    row,
)

SIG = OpSig(INT, UNIT)


def test_boxed_identity_function():
    t = parse_core("mod_[] (fun x:1 -> x)")
    assert t == Mod(Absolute(), Lam("x", UNIT, Var("x")))


def test_comment_handling():
    src = "# leading comment\nfun x -> x # trailing comment\n"
    assert parse_core(src) == Lam("x", None, Var("x"))


def test_hash_glued_to_handle_is_a_keyword():
    t = parse_core("handle# () with { return x ~> x }")
    assert isinstance(t, Handle)
    assert t.flavor == HandlerFlavor.ABS


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as e:
        parse_core("fun x ->\n  (1 +)")
    assert (e.value.line, e.value.col) == (2, 7)


def test_reserved_words_are_not_variables():
    with pytest.raises(ParseError):
        parse_core("fun return -> return")


def test_duplicate_handler_clause_rejected():
    with pytest.raises(ParseError):
        parse_core(
            "handle () with { return x ~> x"
            " | (a : 1 >> 1) p r ~> p | (a : 1 >> 1) p r ~> p }"
        )


def test_handler_requires_return_clause():
    with pytest.raises(ParseError):
        parse_core("handle () with { (a : 1 >> 1) p r ~> p }")


def test_row_annotation_only_on_absolute_handlers():
    with pytest.raises(ParseError):
        parse_core("handle{yield : Int >> 1} () with { return x ~> x }")


TYPES = [
    UNIT,
    INT,
    Arrow(INT, Arrow(INT, INT)),
    Arrow(Arrow(INT, INT), INT),
    Sum(Product(INT, BOOL), UNIT),
    Product(INT, Product(BOOL, STRING)),
    ListType(Arrow(UNIT, INT)),
    Box(Absolute(), Arrow(UNIT, UNIT)),
    Box(Absolute(row(("yield", SIG))), UNIT),
    Box(Relative((), (("yield", SIG),)), Arrow(UNIT, UNIT)),
    Box(Relative(("yield",)), INT),
    Box(Relative(("ask", "yield"), (("gen", ABSENT),)), INT),
    Forall("a", Kind.ANY, Arrow(TyVar("a"), TyVar("a"))),
    Forall("a", Kind.ABS, Box(Absolute(), TyVar("a"))),
    Forall("e", Kind.EFFECT, Box(Absolute(Row((), RowVar("e"))), UNIT)),
    Box(Absolute(Row((("yield", SIG),), RowVar("e", ("ask",)))), UNIT),
]


@pytest.mark.parametrize("ty", TYPES, ids=pretty_type)
def test_type_round_trip(ty):
    assert parse_type(pretty_type(ty)) == ty


MODALITIES = [
    IDENTITY,
    Absolute(),
    Absolute(row(("yield", SIG), ("yield", ABSENT))),
    Absolute(Row((), RowVar("e"))),
    Relative((), (("yield", SIG),)),
    Relative(("yield",)),
    Relative(("yield", "yield"), (("ask", OpSig(UNIT, INT)),)),
    Relative((), (("gen", ABSENT),)),
]


@pytest.mark.parametrize("m", MODALITIES, ids=pretty_modality)
def test_modality_round_trip(m):
    assert parse_modality(pretty_modality(m)) == m


ROWS = [
    EMPTY_ROW,
    row(("yield", SIG)),
    row(("yield", ABSENT), ("yield", SIG)),
    Row((), RowVar("e")),
    Row((("ask", OpSig(UNIT, INT)),), RowVar("e", ("yield", "ask"))),
]


@pytest.mark.parametrize("r", ROWS, ids=pretty_row)
def test_row_round_trip(r):
    assert parse_row(pretty_row(r)) == r


COLLECT = Handler(
    "x",
    Nil(ListType(INT)),
    (OpClause("yield", INT, UNIT, "p", "r", Cons(Var("p"), App(Var("r"), UnitVal()))),),
)

TERMS = [
    UnitVal(),
    IntLit(7),
    IntLit(-7),
    App(Var("f"), IntLit(-7)),
    StrLit('say "hi"\n'),
    Lam("x", None, Var("x")),
    Lam("x", Arrow(INT, INT), App(Var("x"), IntLit(0))),
    App(App(Var("f"), Var("x")), Var("y")),
    App(Var("f"), App(Var("g"), Var("x"))),
    BinOp("+", BinOp("-", IntLit(1), IntLit(2)), IntLit(3)),
    BinOp("-", IntLit(1), BinOp("-", IntLit(2), IntLit(3))),
    BinOp("==", BinOp("*", Var("x"), IntLit(2)), IntLit(6)),
    BinOp("<=", Var("x"), Var("y")),
    BinOp("++", Cons(IntLit(1), Nil(None)), Var("xs")),
    If(BinOp("<", Var("x"), IntLit(0)), IntLit(0), Var("x")),
    Mod(Absolute(), Lam("x", UNIT, Var("x"))),
    Mod(Relative((), (("yield", SIG),)), Var("v")),
    Letmod(IDENTITY, Absolute(), (), "y", Var("x"), Var("y")),
    Letmod(
        Relative(("yield",)),
        Absolute(row(("yield", SIG))),
        (("a", Kind.ANY), ("e", Kind.EFFECT)),
        "y",
        Var("x"),
        Var("y"),
    ),
    Do("yield", IntLit(3)),
    App(Do("ask", UnitVal()), IntLit(1)),
    Mask(("yield",), Do("yield", UnitVal())),
    Mask(("yield", "ask"), Var("x")),
    Handle(HandlerFlavor.DEEP, Do("yield", IntLit(1)), COLLECT),
    Handle(HandlerFlavor.SHALLOW, Var("m"), COLLECT),
    Handle(HandlerFlavor.ABS, Var("m"), COLLECT, row(("gen", SIG))),
    Handle(HandlerFlavor.ABS_SHALLOW, Var("m"), COLLECT, EMPTY_ROW),
    TyLam("a", Kind.ANY, Lam("x", TyVar("a"), Var("x"))),
    TyLam("e", Kind.EFFECT, Mod(Absolute(Row((), RowVar("e"))), Var("v"))),
    TyApp(Var("f"), INT),
    TyApp(Var("f"), EMPTY_ROW),
    TyApp(Var("f"), TyVar("a")),
    TyApp(Var("f"), row(("yield", SIG))),
    TyApp(Var("f"), Row((), RowVar("e", ("ask",)))),
    Pair(IntLit(1), Pair(IntLit(2), IntLit(3))),
    CaseProd(IDENTITY, Var("p"), "x", "y", Var("x")),
    Inl(Var("x")),
    Inr(UnitVal(), Sum(INT, UNIT)),
    CaseSum(Absolute(), Var("s"), "x", Inr(Var("x")), "y", Inl(Var("y"))),
    Nil(ListType(INT)),
    Cons(IntLit(1), Cons(IntLit(2), Nil(None))),
    Cons(IntLit(1), Cons(IntLit(2), Nil(ListType(INT)))),
    CaseList(
        Relative((), (("yield", SIG),)),
        Var("xs"),
        IntLit(0),
        "h",
        "t",
        Var("h"),
    ),
    Fix(
        "f",
        Arrow(INT, INT),
        Lam("n", INT, If(BinOp("==", Var("n"), IntLit(0)), IntLit(1), Var("n"))),
    ),
]


@pytest.mark.parametrize("t", TERMS, ids=lambda t: pretty_term(t)[:60])
def test_term_round_trip(t):
    assert parse_core(pretty_term(t)) == t


def test_fold_and_case_data_round_trip():
    t = Fold("proc", Lam("ps", ListType(NamedType("Proc")), UnitVal()))
    src = pretty_term(t)
    assert parse_core(src, ctors=frozenset({"proc"})) == t
    c = CaseData(IDENTITY, Var("x"), "proc", "p", App(Var("p"), Nil(None)))
    assert parse_core(pretty_term(c)) == c


label_st = st.sampled_from(["yield", "ask", "gen"])
presence_st = st.one_of(
    st.just(ABSENT), st.just(SIG), st.just(OpSig(UNIT, ListType(INT)))
)
entries_st = st.lists(st.tuples(label_st, presence_st), max_size=3).map(tuple)
mask_st = st.lists(label_st, max_size=2).map(tuple)
tail_st = st.one_of(st.none(), st.builds(RowVar, st.just("e"), mask_st))
row_st = st.builds(Row, entries_st, tail_st)
modality_st = st.one_of(
    st.builds(Absolute, row_st), st.builds(Relative, mask_st, entries_st)
)

type_st = st.recursive(
    st.one_of(
        st.just(UNIT),
        st.just(INT),
        st.just(BOOL),
        st.just(STRING),
        st.builds(TyVar, st.sampled_from(["a", "b"])),
    ),
    lambda inner: st.one_of(
        st.builds(Arrow, inner, inner),
        st.builds(Product, inner, inner),
        st.builds(Sum, inner, inner),
        st.builds(ListType, inner),
        st.builds(Box, modality_st, inner),
        st.builds(Forall, st.just("a"), st.sampled_from(list(Kind)), inner),
    ),
    max_leaves=8,
)


@settings(max_examples=250, derandomize=True)
@given(type_st)
def test_type_round_trip_generated(ty):
    assert parse_type(pretty_type(ty)) == ty


@settings(max_examples=250, derandomize=True)
@given(modality_st)
def test_modality_round_trip_generated(m):
    assert parse_modality(pretty_modality(m)) == m


@settings(max_examples=250, derandomize=True)
@given(row_st)
def test_row_round_trip_generated(r):
    assert parse_row(pretty_row(r)) == r
