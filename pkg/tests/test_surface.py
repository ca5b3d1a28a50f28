"""Front-end tests: whole programs through parse, elaboration, and linking.

The golden programs are the worked examples for the language: a list
iterator, handlers that collect yields into a list or thread state,
cooperative scheduling over a process queue, masking inside a predicate,
and the polymorphic generalizations.  Every accepted definition's core
term is re-checked against its announced type with the core checker, so
elaboration soundness is asserted on the same corpus.  The rejection
tests pin one diagnostic code each.
"""

import pytest

from metl.algebra import row_equiv, type_equiv
from metl.errors import (
    ANNOTATION_REQUIRED,
    ARITY_MISMATCH,
    ESCAPE_VIOLATION,
    KIND_MISMATCH,
    MODE_MISMATCH,
    VAR_ACCESS_DENIED,
    CheckError,
    ParseError,
)
from metl.parse import parse_type
from metl.semantics import Value, evaluate
from metl.surface import check_program, check_term
from metl.syntax import (
    EMPTY_ROW,
    IDENTITY,
    INT,
    UNIT,
    Arrow,
    Cons,
    Context,
    IntLit,
    ListType,
    Nil,
    VarBind,
)
from metl.typecheck import check_core_against

# ---------------------------------------------------------------------------
# Golden sources

GEN = "eff Gen a = yield : a >> 1\n"
STATE_EFF = "eff State s = get : Unit >> s, put : s >> Unit\n"

ITER = (
    GEN
    + """
iter : []((Int -> 1) -> List Int -> 1)
iter f nil = ()
iter f (cons x xs) = f x; iter f xs
"""
)

ASLIST = """
asList : [](<Gen Int>(Unit -> Unit) -> List Int)
asList f = handle f () with
  | return () ~> nil
  | (yield : Int >> Unit) x r ~> cons x (r ())
"""

STATE = """
state : [](<State Int>(Unit -> Unit) -> Int -> Unit)
state m = handle m () with
  | return x ~> fun s -> x
  | (get : Unit >> Int) () r ~> fun s -> r s s
  | (put : Int >> Unit) s' r ~> fun s -> r () s'
"""

PIPELINE = (
    ITER
    + STATE_EFF
    + ASLIST
    + STATE
    + """
prefixSum : [Gen Int, State Int](List Int -> Unit)
prefixSum xs = iter (fun x -> do put (do get () + x); do yield (do get ())) xs

main : [](List Int)
main = asList (fun () -> state (fun () -> prefixSum [3, 1, 4, 1, 5, 9]) 0)
"""
)

THREE_YIELDS = (
    GEN
    + ASLIST
    + """
main : [](List Int)
main = asList (fun () -> do yield 1; do yield 2; do yield 3)
"""
)

COOP = """
eff Coop = ufork : Unit >> Bool, suspend : Unit >> Unit

data Proc = proc (List Proc -> 1)

push : [](Proc -> List Proc -> List Proc)
push x xs = xs ++ cons x nil

next : [](List Proc -> 1)
next ps = case ps of nil -> () | cons (proc p) ps' -> p ps'

schedule : [](<Coop>(Unit -> Unit) -> List Proc -> Unit)
schedule m = handle m () with
  | return () ~> fun ps -> next ps
  | (suspend : Unit >> Unit) () r ~>
      fun ps -> next (push (proc (fun ps' -> r () ps')) ps)
  | (ufork : Unit >> Bool) () r ~>
      fun ps -> r true (push (proc (fun ps' -> r false ps')) ps)
"""

FIND = (
    ITER
    + """
find : []((Int -> Bool) -> List Int -> (1 + Int))
find p xs =
  handle iter (fun x -> if mask<yield>(p x) then do yield x else ()) xs with
  | return _ ~> inl ()
  | (yield : Int >> Unit) x _ ~> inr x
"""
)

STATE_FN = (
    STATE_EFF
    + """
state' : [](<State Int>(Unit -> (Unit -> Unit)) -> Int -> <State Int>(Unit -> Unit))
state' m = handle m () with
  | return x ~> fun s -> x
  | (get : Unit >> Int) () r ~> fun s -> r s s
  | (put : Int >> Unit) s' r ~> fun s -> r () s'
"""
)

POLY = (
    GEN
    + STATE_EFF
    + """
iter : forall a . []((a -> Unit) -> List a -> Unit)
iter {a} f nil = ()
iter {a} f (cons x xs) = f x; iter {a} f xs

state : forall [a] . [](<State Int>(Unit -> a) -> Int -> a)
state {a} m = handle m () with
  | return x ~> fun s -> x
  | (get : Unit >> Int) () r ~> fun s -> r s s
  | (put : Int >> Unit) s' r ~> fun s -> r () s'

state' : forall a . [](<State Int>(Unit -> a) -> Int -> <State Int>a)
state' {a} m = handle m () with
  | return x ~> fun s -> x
  | (get : Unit >> Int) () r ~> fun s -> r s s
  | (put : Int >> Unit) s' r ~> fun s -> r () s'
"""
)

PAIRS = (
    GEN
    + """
foo : [Gen Int](Int -> 1)
foo x = do yield (x + 42)

pair1 : [Gen Int](Int -> 1, Int -> 1)
pair1 = (fun x -> do yield (x + 42), fun x -> do yield (x + 42))

pair2 : ([Gen Int](Int -> 1), [Gen Int](Int -> 1))
pair2 = (foo, foo)

compose : forall a b c . []((a -> b) -> (b -> c) -> (a -> c))
compose {a} {b} {c} f g x = g (f x)
"""
)

HANDLE_TWO = (
    GEN
    + STATE_EFF
    + ASLIST
    + STATE
    + """
handleTwo : []((<Gen Int>(Unit -> Unit), <State Int>(Unit -> Unit)) -> (List Int, Unit))
handleTwo (f, g) = (asList f, state g 42)
"""
)

SHARE = """
app : forall a b . [](a -> b) -> [](a) -> [](b)
app {a} {b} f x = f x
"""


@pytest.fixture(scope="module")
def p_iter():
    return check_program(ITER)


@pytest.fixture(scope="module")
def p_pipeline():
    return check_program(PIPELINE)


@pytest.fixture(scope="module")
def p_coop():
    return check_program(COOP)


@pytest.fixture(scope="module")
def p_find():
    return check_program(FIND)


@pytest.fixture(scope="module")
def p_state_fn():
    return check_program(STATE_FN)


@pytest.fixture(scope="module")
def p_poly():
    return check_program(POLY)


@pytest.fixture(scope="module")
def p_pairs():
    return check_program(PAIRS)


@pytest.fixture(scope="module")
def p_handle_two():
    return check_program(HANDLE_TWO)


@pytest.fixture(scope="module")
def p_share():
    return check_program(SHARE)


def recheck(cp):
    """Every elaborated core term checks against its announced type."""
    for d in cp.defs:
        check_core_against(
            cp.context_before(d.name), d.core, EMPTY_ROW, d.type, cp.data_env
        )


def as_int_list(term):
    out = []
    while isinstance(term, Cons):
        assert isinstance(term.head, IntLit)
        out.append(term.head.value)
        term = term.tail
    assert isinstance(term, Nil)
    return out


def run_main(cp):
    out = evaluate(cp.link("main"))
    assert isinstance(out, Value), out
    return out.term


# ---------------------------------------------------------------------------
# Golden signatures


def test_iter_signature(p_iter):
    assert type_equiv(
        p_iter.named("iter").type,
        parse_type("[]((Int -> 1) -> List Int -> 1)"),
    )


def test_iter_judgment_under_yield_row(p_iter):
    amb = p_iter.effect_row("Gen", INT)
    ty, core = check_term(
        "iter (fun x -> do yield x)", amb=amb, program=p_iter
    )
    assert type_equiv(ty, Arrow(ListType(INT), UNIT))
    ctx = Context(
        tuple(VarBind(d.name, d.type, IDENTITY, amb) for d in p_iter.defs)
    )
    check_core_against(ctx, core, amb, ty, p_iter.data_env)


def test_pipeline_signatures(p_pipeline):
    for name, sig in [
        ("asList", "[](<Gen Int>(Unit -> Unit) -> List Int)"),
        ("state", "[](<State Int>(Unit -> Unit) -> Int -> Unit)"),
    ]:
        got = p_pipeline.named(name).type
        want = check_term(
            f"((fun h -> h) : ({sig} -> {sig}))", program=p_pipeline
        )
        # the alias-bearing signature is parsed through the program itself
        assert type_equiv(got, want[0].dom)


def test_prefix_sum_signature(p_pipeline):
    got = p_pipeline.named("prefixSum").type
    gi = p_pipeline.effect_row("Gen", INT)
    si = p_pipeline.effect_row("State", INT)
    from metl.syntax import Absolute, Box, Row

    want = Box(
        Absolute(Row(gi.entries + si.entries)), Arrow(ListType(INT), UNIT)
    )
    assert type_equiv(got, want)


def test_scheduler_checks(p_coop):
    names = [d.name for d in p_coop.defs]
    assert names == ["push", "next", "schedule"]


def test_find_with_mask_checks(p_find):
    assert type_equiv(
        p_find.named("find").type,
        parse_type("[]((Int -> Bool) -> List Int -> (1 + Int))"),
    )


def test_state_returning_function_checks(p_state_fn):
    assert p_state_fn.named("state'") is not None


def test_polymorphic_versions_check(p_poly):
    assert [d.name for d in p_poly.defs] == ["iter", "state", "state'"]


def test_eta_expansion_reaches_nonmodal_type(p_poly):
    # state' only promises its result under the state modality, but its
    # eta-expansion checks at the modality-free signature: the result
    # type variable is bound at the absolute kind, so it crosses freely.
    ty, core = check_term(
        "((fun {a} m s -> state' {a} m s)"
        " : (forall [a] . [](<State Int>(Unit -> a) -> Int -> a)))",
        program=p_poly,
    )
    ctx = Context(
        tuple(
            VarBind(d.name, d.type, IDENTITY, EMPTY_ROW) for d in p_poly.defs
        )
    )
    check_core_against(ctx, core, EMPTY_ROW, ty, p_poly.data_env)


def test_pairs_and_compose_check(p_pairs):
    assert [d.name for d in p_pairs.defs] == ["foo", "pair1", "pair2", "compose"]


def test_two_handlers_over_product(p_handle_two):
    assert p_handle_two.named("handleTwo") is not None


def test_boxed_application_shares_nothing(p_share):
    assert type_equiv(
        p_share.named("app").type,
        parse_type("forall a b . [](a -> b) -> [](a) -> [](b)"),
    )


# ---------------------------------------------------------------------------
# Elaboration soundness: re-check every core term


@pytest.mark.parametrize(
    "src",
    [ITER, PIPELINE, THREE_YIELDS, COOP, FIND, STATE_FN, POLY, PAIRS,
     HANDLE_TWO, SHARE],
    ids=["iter", "pipeline", "three", "coop", "find", "statefn", "poly",
         "pairs", "two", "share"],
)
def test_elaboration_soundness(src):
    recheck(check_program(src))


# ---------------------------------------------------------------------------
# Boxed-function coercions, accepted and rejected

GEN_ONLY = check_program(GEN)


def coercion(src_mod, tgt_mod):
    text = (
        f"((fun f -> f)"
        f" : ({src_mod}(Unit -> Unit) -> {tgt_mod}(Unit -> Unit)))"
    )
    return check_term(text, program=GEN_ONLY)


@pytest.mark.parametrize(
    "src_mod,tgt_mod",
    [
        ("[Gen Int]", "[Gen Int, Gen String]"),
        ("[Gen Int]", "<Gen Int>"),
        ("[]", "[Gen Int]"),
        ("[]", "<Gen Int>"),
    ],
)
def test_coercion_accepted(src_mod, tgt_mod):
    ty, core = coercion(src_mod, tgt_mod)
    check_core_against(Context(), core, EMPTY_ROW, ty)


@pytest.mark.parametrize(
    "src_mod,tgt_mod",
    [
        ("<>", "<Gen Int>"),
        ("<Gen Int>", "[Gen Int]"),
    ],
)
def test_coercion_rejected(src_mod, tgt_mod):
    with pytest.raises(CheckError) as e:
        coercion(src_mod, tgt_mod)
    assert e.value.code == MODE_MISMATCH


def test_relative_box_cannot_be_called_outside():
    with pytest.raises(CheckError) as e:
        check_term(
            "((fun f -> f ()) : (<Gen Int>(Unit -> Unit) -> Unit))",
            program=GEN_ONLY,
        )
    assert e.value.code == MODE_MISMATCH


# ---------------------------------------------------------------------------
# Rejection suite

NAIVE_ASLIST = (
    GEN
    + """
asList : []((Unit -> Unit) -> List Int)
asList f = handle f () with
  | return () ~> nil
  | (yield : Int >> Unit) x r ~> cons x (r ())
"""
)

CRASH = (
    GEN
    + ASLIST
    + """
crash : [Gen String](String -> List Int)
crash s = asList (fun () -> do yield s)
"""
)

NAIVE_FIND = (
    ITER
    + """
find : []((Int -> Bool) -> List Int -> (1 + Int))
find p xs =
  handle iter (fun x -> if p x then do yield x else ()) xs with
  | return _ ~> inl ()
  | (yield : Int >> Unit) x _ ~> inr x
"""
)

NAIVE_STATE_FN = (
    STATE_EFF
    + """
state' : [](<State Int>(Unit -> (Unit -> Unit)) -> Int -> (Unit -> Unit))
state' m = handle m () with
  | return x ~> fun s -> x
  | (get : Unit >> Int) () r ~> fun s -> r s s
  | (put : Int >> Unit) s' r ~> fun s -> r () s'
"""
)

CAPTURE = (
    GEN
    + """
sneak : []((Unit -> Unit) -> [Gen Int](Unit -> Unit))
sneak f = f
"""
)


@pytest.mark.parametrize(
    "src,code",
    [
        (NAIVE_ASLIST, MODE_MISMATCH),
        (CRASH, MODE_MISMATCH),
        (NAIVE_FIND, MODE_MISMATCH),
        (NAIVE_STATE_FN, MODE_MISMATCH),
        (CAPTURE, VAR_ACCESS_DENIED),
    ],
    ids=["naive-aslist", "crash", "naive-find", "naive-statefn", "capture"],
)
def test_rejected_program(src, code):
    with pytest.raises(CheckError) as e:
        check_program(src)
    assert e.value.code == code


def test_operation_argument_must_stay_first_order():
    # A handler clause whose operation smuggles a function out of its own
    # scope is stopped at the signature: operation types must be absolute.
    cp = check_program(GEN + ASLIST)
    with pytest.raises(CheckError) as e:
        check_term(
            """
            handle asList (fun () -> do leak (fun () -> do yield 42)) with
            | return _ ~> fun () -> 37
            | (leak : (Unit -> Unit) >> Unit) p _ ~> p
            """,
            program=cp,
        )
    assert e.value.code == KIND_MISMATCH


def test_recursive_effect_alias_rejected():
    with pytest.raises(ParseError):
        check_program("eff Loop a = tick : a >> Unit, Loop a\n")


# ---------------------------------------------------------------------------
# Program structure errors


def test_underscore_names_reserved():
    with pytest.raises(ParseError):
        check_program("_x : Int\n_x = 3\n")


def test_equations_must_be_adjacent():
    src = (
        GEN
        + """
iter : []((Int -> 1) -> List Int -> 1)
iter f nil = ()

other : Int
other = 1

iter f (cons x xs) = f x; iter f xs
"""
    )
    with pytest.raises(ParseError):
        check_program(src)


def test_duplicate_signature_rejected():
    with pytest.raises(ParseError):
        check_program("f : Int\nf : Int\nf = 1\n")


def test_signature_without_definition_rejected():
    with pytest.raises(ParseError):
        check_program("f : Int\n")


def test_duplicate_effect_rejected():
    with pytest.raises(ParseError):
        check_program(GEN + GEN)


def test_clause_arities_must_agree():
    src = """
f : [](Int -> Int -> Int)
f x y = x
f x = x
"""
    with pytest.raises(CheckError) as e:
        check_program(src)
    assert e.value.code == ARITY_MISMATCH


def test_unknown_type_in_signature():
    with pytest.raises(CheckError) as e:
        check_program("f : [](Foo -> Foo)\nf x = x\n")
    assert e.value.code == KIND_MISMATCH


def test_unannotated_function_needs_signature():
    with pytest.raises(CheckError) as e:
        check_program("g = fun x -> x\n")
    assert e.value.code == ANNOTATION_REQUIRED


# ---------------------------------------------------------------------------
# Evaluation


def test_pipeline_evaluates():
    cp = check_program(PIPELINE)
    assert as_int_list(run_main(cp)) == [3, 4, 8, 9, 14, 23]


def test_yields_collected_in_order():
    cp = check_program(THREE_YIELDS)
    assert as_int_list(run_main(cp)) == [1, 2, 3]
