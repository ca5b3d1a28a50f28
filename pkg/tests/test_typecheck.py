"""Core type checker tests.

Each test builds core terms directly and checks either the synthesized type
(compared with type_equiv) or the error code raised.  The coercion tests are
the boxing/unboxing idioms between modalities; the handler tests cover all
four flavors.
"""

import pytest

from metl.algebra import type_equiv
from metl.errors import (
    ANNOTATION_REQUIRED,
    ESCAPE_VIOLATION,
    HANDLER_CLAUSE_MISMATCH,
    KIND_MISMATCH,
    MODE_MISMATCH,
    OPERATION_ABSENT,
    UNBOUND_VAR,
    VAR_ACCESS_DENIED,
    CheckError,
)
from metl.syntax import (
    ABSENT,
    Absolute,
    App,
    Arrow,
    BinOp,
    BOOL,
    Box,
    CaseData,
    CaseList,
    CaseProd,
    CaseSum,
    Cons,
    Context,
    Do,
    EMPTY_CONTEXT,
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
    Lock,
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
    TyBind,
    TyLam,
    TyVar,
    UNIT,
    UnitVal,
    Var,
    VarBind,
    row,
)
from metl.typecheck import check_core, check_core_against, kind_of

GEN_INT = row(("yield", OpSig(INT, UNIT)))
GEN_STR = row(("yield", OpSig(STRING, UNIT)))
GEN_BOTH = row(("yield", OpSig(INT, UNIT)), ("yield", OpSig(STRING, UNIT)))
REL_GEN = Relative(ext=(("yield", OpSig(INT, UNIT)),))
ABS_GEN = Absolute(GEN_INT)
U2U = Arrow(UNIT, UNIT)


def check(term, amb=EMPTY_ROW, ctx=EMPTY_CONTEXT, data=None):
    return check_core(ctx, term, amb, data)


def check_err(code, term, amb=EMPTY_ROW, ctx=EMPTY_CONTEXT, data=None):
    with pytest.raises(CheckError) as e:
        check_core(ctx, term, amb, data)
    assert e.value.code == code, e.value.render()


def unbox_rebox(src, tgt, unboxed=U2U):
    """fun f -> f across two modalities: unbox at src, re-box at tgt."""
    return Lam(
        "f",
        Box(src, unboxed),
        Letmod(IDENTITY, src, (), "g", Var("f"), Mod(tgt, Var("g"))),
    )


# ---------------------------------------------------------------------------
# Kinding


def test_kind_empty_absolute_box_is_absolute():
    assert kind_of(EMPTY_CONTEXT, Box(Absolute(), U2U)) == Kind.ABS


def test_kind_bare_arrow_is_any():
    assert kind_of(EMPTY_CONTEXT, U2U) == Kind.ANY


def test_kind_relative_box_keeps_body_kind():
    assert kind_of(EMPTY_CONTEXT, Box(REL_GEN, U2U)) == Kind.ANY
    assert kind_of(EMPTY_CONTEXT, Box(REL_GEN, INT)) == Kind.ABS


def test_kind_base_types_and_lists():
    assert kind_of(EMPTY_CONTEXT, INT) == Kind.ABS
    assert kind_of(EMPTY_CONTEXT, UNIT) == Kind.ABS
    assert kind_of(EMPTY_CONTEXT, ListType(INT)) == Kind.ABS
    assert kind_of(EMPTY_CONTEXT, ListType(U2U)) == Kind.ANY


def test_kind_product_and_sum():
    assert kind_of(EMPTY_CONTEXT, Product(INT, BOOL)) == Kind.ABS
    assert kind_of(EMPTY_CONTEXT, Sum(INT, U2U)) == Kind.ANY


def test_kind_forall_follows_body():
    t = Forall("a", Kind.ANY, Arrow(TyVar("a"), TyVar("a")))
    assert kind_of(EMPTY_CONTEXT, t) == Kind.ANY


def test_kind_named_type_is_any():
    assert kind_of(EMPTY_CONTEXT, NamedType("Proc")) == Kind.ANY


def test_kind_effect_variable_not_a_type():
    ctx = Context((TyBind("e", Kind.EFFECT),))
    with pytest.raises(CheckError) as e:
        kind_of(ctx, TyVar("e"))
    assert e.value.code == KIND_MISMATCH


def test_kind_unbound_type_variable():
    with pytest.raises(CheckError) as e:
        kind_of(EMPTY_CONTEXT, TyVar("a"))
    assert e.value.code == KIND_MISMATCH


def test_kind_box_with_unbound_effect_variable():
    with pytest.raises(CheckError) as e:
        kind_of(EMPTY_CONTEXT, Box(Absolute(Row((), RowVar("e"))), U2U))
    assert e.value.code == KIND_MISMATCH


# ---------------------------------------------------------------------------
# Variables and locks


def test_var_crosses_matching_relative_lock():
    ctx = Context((VarBind("x", U2U, REL_GEN, EMPTY_ROW), Lock(REL_GEN, EMPTY_ROW)))
    assert type_equiv(check(Var("x"), GEN_INT, ctx), U2U)


def test_var_identity_binding_blocked_by_extension_lock():
    ctx = Context((VarBind("x", U2U, IDENTITY, EMPTY_ROW), Lock(REL_GEN, EMPTY_ROW)))
    check_err(VAR_ACCESS_DENIED, Var("x"), GEN_INT, ctx)


def test_absolute_box_crosses_any_locks():
    ctx = Context(
        (
            VarBind("x", Box(Absolute(), U2U), IDENTITY, EMPTY_ROW),
            Lock(REL_GEN, EMPTY_ROW),
            Lock(Absolute(GEN_STR), GEN_INT),
        )
    )
    assert type_equiv(check(Var("x"), GEN_STR, ctx), Box(Absolute(), U2U))


def test_base_types_cross_locks():
    ctx = Context((VarBind("n", INT, IDENTITY, EMPTY_ROW), Lock(REL_GEN, EMPTY_ROW)))
    assert type_equiv(check(Var("n"), GEN_INT, ctx), INT)


def test_unbound_variable():
    check_err(UNBOUND_VAR, Var("nope"))


# ---------------------------------------------------------------------------
# Boxing and unboxing


def test_unbox_then_upcast_to_wider_absolute():
    t = Lam(
        "x",
        Box(Absolute(), Arrow(INT, INT)),
        Letmod(IDENTITY, Absolute(), (), "y", Var("x"), Mod(ABS_GEN, Var("y"))),
    )
    want = Arrow(Box(Absolute(), Arrow(INT, INT)), Box(ABS_GEN, Arrow(INT, INT)))
    assert type_equiv(check(t), want)


def test_boxing_a_computation_needs_empty_absolute():
    check_err(ESCAPE_VIOLATION, Mod(ABS_GEN, Do("yield", IntLit(1))))
    check_err(ESCAPE_VIOLATION, Mod(REL_GEN, Do("yield", IntLit(1))), GEN_INT)


def test_empty_absolute_box_admits_computations():
    t = Mod(Absolute(), App(Lam("u", UNIT, IntLit(3)), UnitVal()))
    assert type_equiv(check(t, GEN_INT), Box(Absolute(), INT))


def test_letmod_annotation_must_match_subject():
    t = Lam(
        "f",
        Box(Absolute(), U2U),
        Letmod(IDENTITY, REL_GEN, (), "g", Var("f"), Var("g")),
    )
    check_err(MODE_MISMATCH, t)


def test_letmod_subject_must_be_boxed():
    t = Letmod(IDENTITY, Absolute(), (), "g", IntLit(3), Var("g"))
    check_err(MODE_MISMATCH, t)


# ---------------------------------------------------------------------------
# Coercions between modalities


def test_coerce_widens_absolute():
    t = unbox_rebox(ABS_GEN, Absolute(GEN_BOTH))
    want = Arrow(Box(ABS_GEN, U2U), Box(Absolute(GEN_BOTH), U2U))
    assert type_equiv(check(t, GEN_STR), want)


def test_coerce_absolute_to_relative():
    t = unbox_rebox(ABS_GEN, REL_GEN)
    want = Arrow(Box(ABS_GEN, U2U), Box(REL_GEN, U2U))
    assert type_equiv(check(t, GEN_STR), want)


def test_coerce_empty_absolute_anywhere():
    for tgt in (ABS_GEN, REL_GEN):
        t = unbox_rebox(Absolute(), tgt)
        want = Arrow(Box(Absolute(), U2U), Box(tgt, U2U))
        assert type_equiv(check(t, GEN_STR), want)


def test_coerce_cannot_extend_relative():
    check_err(VAR_ACCESS_DENIED, unbox_rebox(IDENTITY, REL_GEN), GEN_STR)


def test_coerce_cannot_drop_relative_to_absolute():
    check_err(VAR_ACCESS_DENIED, unbox_rebox(REL_GEN, ABS_GEN), GEN_STR)


def test_relative_function_cannot_run_at_ambient():
    t = Lam(
        "f",
        Box(REL_GEN, U2U),
        Letmod(IDENTITY, REL_GEN, (), "g", Var("f"), App(Var("g"), UnitVal())),
    )
    check_err(VAR_ACCESS_DENIED, t, GEN_STR)


# ---------------------------------------------------------------------------
# Operations


def test_do_uses_first_occurrence():
    assert type_equiv(check(Do("yield", IntLit(1)), GEN_INT), UNIT)
    assert type_equiv(check(Do("yield", IntLit(1)), GEN_BOTH), UNIT)
    check_err(MODE_MISMATCH, Do("yield", StrLit("s")), GEN_BOTH)


def test_do_argument_type_mismatch():
    check_err(MODE_MISMATCH, Do("yield", StrLit("s")), GEN_INT)


def test_do_missing_operation():
    check_err(OPERATION_ABSENT, Do("yield", IntLit(1)))


def test_do_first_occurrence_absent():
    amb = Row((("yield", ABSENT),) + GEN_INT.entries)
    check_err(OPERATION_ABSENT, Do("yield", IntLit(1)), amb)


def test_do_under_opaque_row_variable():
    check_err(OPERATION_ABSENT, Do("yield", IntLit(1)), Row((), RowVar("e")))


# ---------------------------------------------------------------------------
# Masking


def test_mask_boxes_its_result():
    t = Mask(("yield",), IntLit(3))
    assert type_equiv(check(t, GEN_INT), Box(Relative(("yield",)), INT))


def test_mask_hides_the_operation():
    check_err(OPERATION_ABSENT, Mask(("yield",), Do("yield", IntLit(1))), GEN_INT)


def test_mask_exposes_shadowed_occurrence():
    t = Mask(("yield",), Do("yield", StrLit("hi")))
    assert type_equiv(check(t, GEN_BOTH), Box(Relative(("yield",)), UNIT))


# ---------------------------------------------------------------------------
# Handlers


def collect_clause(body):
    return OpClause("yield", INT, UNIT, "p", "r", body)


def test_deep_handler_sums_yields():
    h = Handler(
        "x",
        IntLit(0),
        (collect_clause(BinOp("+", Var("p"), App(Var("r"), UnitVal()))),),
    )
    t = Handle(HandlerFlavor.DEEP, Do("yield", IntLit(4)), h)
    assert type_equiv(check(t), INT)


def test_deep_handler_collect_signature():
    h = Handler(
        "x",
        Nil(ListType(INT)),
        (collect_clause(Cons(Var("p"), App(Var("r"), UnitVal()))),),
    )
    body = Letmod(
        IDENTITY,
        REL_GEN,
        (),
        "fh",
        Var("f"),
        Handle(HandlerFlavor.DEEP, App(Var("fh"), UnitVal()), h),
    )
    t = Mod(Absolute(), Lam("f", Box(REL_GEN, U2U), body))
    want = Box(Absolute(), Arrow(Box(REL_GEN, U2U), ListType(INT)))
    assert type_equiv(check(t), want)


def test_handler_rejects_duplicate_labels():
    h = Handler(
        "x",
        IntLit(0),
        (collect_clause(IntLit(1)), collect_clause(IntLit(2))),
    )
    t = Handle(HandlerFlavor.DEEP, IntLit(9), h)
    check_err(HANDLER_CLAUSE_MISMATCH, t)


def test_handler_clause_must_agree_with_return():
    h = Handler("x", IntLit(0), (collect_clause(StrLit("bad")),))
    t = Handle(HandlerFlavor.DEEP, Do("yield", IntLit(4)), h)
    check_err(HANDLER_CLAUSE_MISMATCH, t)


def test_handler_signature_components_must_be_absolute():
    h = Handler(
        "x",
        UnitVal(),
        (OpClause("op", U2U, UNIT, "p", "r", UnitVal()),),
    )
    t = Handle(HandlerFlavor.DEEP, UnitVal(), h)
    check_err(KIND_MISMATCH, t)


def test_absolute_handler_boxes_resumption():
    clause = collect_clause(
        Letmod(
            IDENTITY,
            Absolute(),
            (),
            "rh",
            Var("r"),
            BinOp("+", Var("p"), App(Var("rh"), UnitVal())),
        )
    )
    h = Handler("x", IntLit(0), (clause,))
    t = Handle(HandlerFlavor.ABS, Do("yield", IntLit(4)), h)
    assert type_equiv(check(t), INT)


def test_absolute_handler_row_must_lower_into_ambient():
    h = Handler("x", IntLit(0), (collect_clause(Var("p")),))
    t = Handle(HandlerFlavor.ABS, Do("yield", IntLit(4)), h, row=GEN_STR)
    check_err(MODE_MISMATCH, t)


def test_absolute_handler_with_explicit_row():
    h = Handler("x", IntLit(0), (collect_clause(Var("p")),))
    t = Handle(HandlerFlavor.ABS, Do("yield", IntLit(4)), h, row=EMPTY_ROW)
    assert type_equiv(check(t, GEN_STR), INT)


def test_shallow_handler_boxes_resumption_relatively():
    d = (("yield", OpSig(INT, UNIT)),)
    inner_h = Handler(
        "y",
        Letmod(IDENTITY, Relative((), d), (), "yh", Var("y"), Var("yh")),
        (OpClause("yield", INT, UNIT, "p2", "r2", IntLit(99)),),
    )
    clause = OpClause(
        "yield",
        INT,
        UNIT,
        "p",
        "r",
        Letmod(
            IDENTITY,
            Relative((), d),
            (),
            "rh",
            Var("r"),
            Handle(HandlerFlavor.SHALLOW, App(Var("rh"), UnitVal()), inner_h),
        ),
    )
    outer_h = Handler(
        "x",
        Letmod(IDENTITY, Relative((), d), (), "xh", Var("x"), Var("xh")),
        (clause,),
    )
    body = App(Lam("u", UNIT, IntLit(7)), Do("yield", IntLit(1)))
    t = Handle(HandlerFlavor.SHALLOW, body, outer_h)
    assert type_equiv(check(t), INT)


def test_absolute_shallow_handler():
    clause = OpClause(
        "yield",
        INT,
        UNIT,
        "p",
        "r",
        Letmod(IDENTITY, ABS_GEN, (), "rh", Var("r"), Var("p")),
    )
    h = Handler("x", IntLit(0), (clause,))
    body = App(Lam("u", UNIT, IntLit(7)), Do("yield", IntLit(1)))
    t = Handle(HandlerFlavor.ABS_SHALLOW, body, h)
    assert type_equiv(check(t), INT)


# ---------------------------------------------------------------------------
# Case analysis


def test_pair_case_under_empty_absolute():
    t = Lam(
        "b",
        Box(Absolute(), Product(INT, INT)),
        Letmod(
            IDENTITY,
            Absolute(),
            (),
            "p",
            Var("b"),
            CaseProd(
                Absolute(), Var("p"), "x", "y", BinOp("+", Var("x"), Var("y"))
            ),
        ),
    )
    want = Arrow(Box(Absolute(), Product(INT, INT)), INT)
    assert type_equiv(check(t, GEN_INT), want)


def _sum_commute(m):
    sum_in = Sum(U2U, UNIT)
    sum_out = Sum(Box(m, U2U), Box(m, UNIT))
    t = Lam(
        "x",
        Box(m, sum_in),
        Letmod(
            IDENTITY,
            m,
            (),
            "xh",
            Var("x"),
            CaseSum(
                m,
                Var("xh"),
                "a",
                Inl(Mod(m, Var("a")), sum_out),
                "b",
                Inr(Mod(m, Var("b")), sum_out),
            ),
        ),
    )
    return t, Arrow(Box(m, sum_in), sum_out)


def test_sum_case_commutes_with_relative_box():
    t, want = _sum_commute(REL_GEN)
    assert type_equiv(check(t), want)


def test_sum_case_commutes_with_absolute_box():
    t, want = _sum_commute(ABS_GEN)
    assert type_equiv(check(t), want)


def test_sum_case_branches_must_agree():
    t = Lam(
        "s",
        Sum(INT, INT),
        CaseSum(IDENTITY, Var("s"), "a", Var("a"), "b", StrLit("no")),
    )
    check_err(MODE_MISMATCH, t)


def test_list_case_with_recursion():
    t = Fix(
        "sum",
        Arrow(ListType(INT), INT),
        Lam(
            "xs",
            ListType(INT),
            CaseList(
                IDENTITY,
                Var("xs"),
                IntLit(0),
                "h",
                "t",
                BinOp("+", Var("h"), App(Var("sum"), Var("t"))),
            ),
        ),
    )
    assert type_equiv(check(t), Arrow(ListType(INT), INT))


def test_data_fold_and_case():
    proc = NamedType("Proc")
    data = {"Proc": ("proc", Arrow(ListType(proc), UNIT))}
    v = Fold("proc", Lam("ps", ListType(proc), UnitVal()))
    assert type_equiv(check(v, data=data), proc)
    t = CaseData(IDENTITY, v, "proc", "p", App(Var("p"), Nil(ListType(proc))))
    assert type_equiv(check(t, data=data), UNIT)


# ---------------------------------------------------------------------------
# Polymorphism


def test_type_abstraction_and_application():
    idpoly = TyLam("a", Kind.ANY, Lam("y", TyVar("a"), Var("y")))
    ty = check(idpoly)
    assert type_equiv(ty, Forall("a", Kind.ANY, Arrow(TyVar("a"), TyVar("a"))))
    assert type_equiv(check(App(TyApp(idpoly, INT), IntLit(3))), INT)


def test_type_abstraction_needs_a_value():
    t = TyLam("a", Kind.ANY, App(Lam("u", UNIT, UnitVal()), UnitVal()))
    check_err(ESCAPE_VIOLATION, t)


def test_effect_polymorphic_box():
    evar = Row((), RowVar("e"))
    t = TyLam("e", Kind.EFFECT, Lam("x", Box(Absolute(evar), U2U), Var("x")))
    applied = TyApp(t, GEN_INT)
    want = Arrow(Box(ABS_GEN, U2U), Box(ABS_GEN, U2U))
    assert type_equiv(check(applied), want)


def test_type_application_kind_errors():
    idpoly = TyLam("a", Kind.ANY, Lam("y", TyVar("a"), Var("y")))
    epoly = TyLam(
        "e", Kind.EFFECT, Lam("x", Box(Absolute(Row((), RowVar("e"))), U2U), Var("x"))
    )
    check_err(KIND_MISMATCH, TyApp(idpoly, GEN_INT))
    check_err(KIND_MISMATCH, TyApp(epoly, INT))


def test_unbox_generalizes_over_type_binders():
    t = Letmod(
        IDENTITY,
        Absolute(),
        (("a", Kind.ANY),),
        "pid",
        Mod(Absolute(), Lam("y", TyVar("a"), Var("y"))),
        App(TyApp(Var("pid"), INT), IntLit(3)),
    )
    assert type_equiv(check(t, GEN_INT), INT)


def test_generalizing_a_computation_is_rejected():
    t = Letmod(
        IDENTITY,
        Absolute(),
        (("a", Kind.ANY),),
        "x",
        App(Lam("u", UNIT, Mod(Absolute(), Lam("y", TyVar("a"), Var("y")))), UnitVal()),
        IntLit(0),
    )
    check_err(ESCAPE_VIOLATION, t)


# ---------------------------------------------------------------------------
# Conditionals, operators, recursion, lists


def test_if_and_arithmetic():
    t = If(BinOp("==", IntLit(1), IntLit(2)), IntLit(3), IntLit(4))
    assert type_equiv(check(t), INT)
    assert type_equiv(check(BinOp("<", IntLit(1), IntLit(2))), BOOL)
    check_err(MODE_MISMATCH, BinOp("+", IntLit(1), StrLit("x")))


def test_append_concatenates_lists():
    ones = Cons(IntLit(1), Nil(ListType(INT)))
    assert type_equiv(check(BinOp("++", ones, ones)), ListType(INT))
    check_err(MODE_MISMATCH, BinOp("++", IntLit(1), IntLit(2)))


def test_recursive_binding_must_be_a_value():
    t = Fix("f", Arrow(INT, INT), App(Lam("u", UNIT, IntLit(0)), UnitVal()))
    check_err(ESCAPE_VIOLATION, t)


def test_recursive_function_types():
    t = Fix(
        "f",
        Arrow(INT, INT),
        Lam(
            "n",
            INT,
            If(
                BinOp("==", Var("n"), IntLit(0)),
                IntLit(0),
                App(Var("f"), BinOp("-", Var("n"), IntLit(1))),
            ),
        ),
    )
    assert type_equiv(check(t), Arrow(INT, INT))


def test_injections_require_annotations_in_synthesis():
    check_err(ANNOTATION_REQUIRED, Inl(IntLit(1)))
    check_err(ANNOTATION_REQUIRED, Nil())
    got = check(Inl(IntLit(1), Sum(INT, BOOL)))
    assert type_equiv(got, Sum(INT, BOOL))


def test_checking_mode_pushes_through_structure():
    xs = Cons(IntLit(1), Cons(IntLit(2), Nil()))
    check_core_against(EMPTY_CONTEXT, xs, EMPTY_ROW, ListType(INT))
    with pytest.raises(CheckError) as e:
        check_core_against(EMPTY_CONTEXT, xs, EMPTY_ROW, ListType(BOOL))
    assert e.value.code == MODE_MISMATCH
    check_core_against(
        EMPTY_CONTEXT,
        Pair(Inl(UnitVal()), Nil()),
        EMPTY_ROW,
        Product(Sum(UNIT, INT), ListType(STRING)),
    )


def test_pair_synthesis():
    assert type_equiv(check(Pair(IntLit(1), StrLit("a"))), Product(INT, STRING))
