"""Kinding and type checking for the core calculus.

The judgment is syntax-directed: every term synthesizes a type at an ambient
effect row, with a checking mode used where an expected type is available
(application arguments, handler clause bodies, annotated injections).

Contexts carry variable bindings (with the modality and ambient row at their
binding site) and locks (recording modality applications); variable access is
gated by the modality transformation relation composed over the locks to the
right of the binding.
"""

from __future__ import annotations

from typing import Optional

from . import syntax
from .algebra import (
    act,
    compose,
    ext_plus,
    locks_of,
    mod_equiv,
    normalize,
    restrict,
    row_equiv,
    row_minus,
    subst_type,
    transform,
    type_equiv,
)
from .errors import (
    ANNOTATION_REQUIRED,
    ARITY_MISMATCH,
    ESCAPE_VIOLATION,
    HANDLER_CLAUSE_MISMATCH,
    KIND_MISMATCH,
    MODE_MISMATCH,
    OPERATION_ABSENT,
    UNBOUND_VAR,
    VAR_ACCESS_DENIED,
    CheckError,
)
from .syntax import (
    Absolute,
    Arrow,
    BOOL,
    BinOp,
    BoolLit,
    Box,
    Context,
    Cons,
    CaseData,
    CaseList,
    CaseProd,
    CaseSum,
    Do,
    Fix,
    Fold,
    Forall,
    Handle,
    HandlerFlavor,
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
    OpSig,
    Pair,
    Product,
    Relative,
    RowVar,
    Row,
    STRING,
    StrLit,
    Sum,
    Term,
    TyApp,
    TyBind,
    TyLam,
    TyVar,
    Type,
    TypeArg,
    UNIT,
    UnitVal,
    Var,
    VarBind,
    pretty_modality,
    pretty_row_or_dot,
    pretty_type,
    subkind,
)

# Data declarations: type name -> (constructor name, payload type).
DataEnv = dict[str, tuple[str, Type]]


# ---------------------------------------------------------------------------
# Kinding and well-formedness


def kind_of(ctx: Context, t: Type) -> Kind:
    """Least kind of a well-formed type; raises KindMismatch on ill-formed
    types (unbound type variables, non-absolute operation signatures)."""
    match t:
        case syntax.UnitType() | syntax.IntType() | syntax.BoolType() | syntax.StringType():
            return Kind.ABS
        case ListType(elem):
            return kind_of(ctx, elem)
        case NamedType(_):
            return Kind.ANY
        case TyVar(name):
            k = ctx.lookup_tyvar(name)
            if k is None:
                raise CheckError(KIND_MISMATCH, f"unbound type variable {name}")
            if k == Kind.EFFECT:
                raise CheckError(
                    KIND_MISMATCH, f"effect variable {name} used as a type"
                )
            return k
        case Arrow(dom, cod):
            kind_of(ctx, dom)
            kind_of(ctx, cod)
            return Kind.ANY
        case Box(modality, body):
            check_modality(ctx, modality)
            inner = kind_of(ctx, body)
            return Kind.ABS if isinstance(modality, Absolute) else inner
        case Forall(var, kind, body):
            return kind_of(ctx.push(TyBind(var, kind)), body)
        case Product(left, right) | Sum(left, right):
            kl = kind_of(ctx, left)
            kr = kind_of(ctx, right)
            return Kind.ABS if kl == Kind.ABS and kr == Kind.ABS else Kind.ANY
    raise CheckError(KIND_MISMATCH, f"ill-formed type {t!r}")


def check_presence(ctx: Context, label: str, p: syntax.Presence) -> None:
    if isinstance(p, OpSig):
        for side, ty in (("argument", p.arg), ("result", p.res)):
            if kind_of(ctx, ty) != Kind.ABS:
                raise CheckError(
                    KIND_MISMATCH,
                    f"operation {label} has a non-absolute {side} type "
                    f"{pretty_type(ty)}",
                )


def check_row(ctx: Context, r: Row) -> None:
    for label, p in r.entries:
        check_presence(ctx, label, p)
    if r.tail is not None:
        k = ctx.lookup_tyvar(r.tail.name)
        if k is None:
            raise CheckError(
                KIND_MISMATCH, f"unbound effect variable {r.tail.name}"
            )
        if k != Kind.EFFECT:
            raise CheckError(
                KIND_MISMATCH,
                f"row tail {r.tail.name} is not an effect variable",
            )


def check_type_arg(ctx: Context, arg: TypeArg, kind: Kind) -> None:
    if kind == Kind.EFFECT:
        if not isinstance(arg, Row):
            raise CheckError(
                KIND_MISMATCH, "effect application expects a row argument"
            )
        check_row(ctx, arg)
        return
    if isinstance(arg, Row):
        raise CheckError(
            KIND_MISMATCH, "type application expects a type argument"
        )
    k = kind_of(ctx, arg)
    if not subkind(k, kind):
        raise CheckError(
            KIND_MISMATCH,
            f"argument kind {k.value} is not below {kind.value}",
            actual=pretty_type(arg),
        )


def check_modality(ctx: Context, m: syntax.Modality) -> None:
    if isinstance(m, Absolute):
        check_row(ctx, m.row)
    else:
        for label, p in m.ext:
            check_presence(ctx, label, p)


def check_value_restriction(m: Term) -> bool:
    return syntax.is_value(m)


# ---------------------------------------------------------------------------
# The checker


class _Core:
    def __init__(self, data_env: Optional[DataEnv]):
        self.data = data_env or {}

    # -- helpers

    def lookup_data(self, name: str) -> tuple[str, Type]:
        if name not in self.data:
            raise CheckError(KIND_MISMATCH, f"unknown data type {name}")
        return self.data[name]

    def ctor_payload(self, ctor: str) -> tuple[str, Type]:
        for name, (c, payload) in self.data.items():
            if c == ctor:
                return name, payload
        raise CheckError(KIND_MISMATCH, f"unknown constructor {ctor}")

    # -- modes

    def synth(self, ctx: Context, amb: Row, t: Term) -> Type:
        match t:
            case UnitVal():
                return UNIT
            case IntLit(_):
                return INT
            case BoolLit(_):
                return BOOL
            case StrLit(_):
                return STRING
            case Var(name):
                return self.var(ctx, amb, name)
            case Lam(param, param_type, body):
                kind_of(ctx, param_type)
                bctx = ctx.push(VarBind(param, param_type, index=amb))
                cod = self.synth(bctx, amb, body)
                return Arrow(param_type, cod)
            case syntax.App(fn, arg):
                fty = self.synth(ctx, amb, fn)
                if not isinstance(fty, Arrow):
                    raise CheckError(
                        MODE_MISMATCH,
                        "application of a non-function",
                        actual=pretty_type(fty),
                    )
                self.check(ctx, amb, arg, fty.dom)
                return fty.cod
            case TyLam(var, kind, body):
                if not syntax.is_value(body):
                    raise CheckError(
                        ESCAPE_VIOLATION,
                        "type abstraction over a computation",
                    )
                bty = self.synth(ctx.push(TyBind(var, kind)), amb, body)
                return Forall(var, kind, bty)
            case TyApp(fn, arg):
                fty = self.synth(ctx, amb, fn)
                if not isinstance(fty, Forall):
                    raise CheckError(
                        MODE_MISMATCH,
                        "type application of a non-polymorphic term",
                        actual=pretty_type(fty),
                    )
                # A bare effect variable is written like a type variable;
                # resolve it to a row tail when a row is expected.
                if (
                    fty.kind == Kind.EFFECT
                    and isinstance(arg, TyVar)
                    and ctx.lookup_tyvar(arg.name) == Kind.EFFECT
                ):
                    arg = Row((), RowVar(arg.name))
                self.check_type_arg(ctx, arg, fty.kind)
                return subst_type(fty.body, fty.var, arg)
            case Mod(modality, body):
                return self.mod(ctx, amb, modality, body)
            case Letmod():
                return self.letmod(ctx, amb, t)
            case Do(label, arg):
                return self.do(ctx, amb, label, arg)
            case Mask(ls, body):
                m = Relative(ls)
                inner = act(m, amb)
                bty = self.synth(ctx.push(Lock(m, amb)), inner, body)
                return Box(m, bty)
            case Handle(_, _, _, _):
                return self.handle(ctx, amb, t)
            case Pair(left, right):
                lt = self.synth(ctx, amb, left)
                rt = self.synth(ctx, amb, right)
                return Product(lt, rt)
            case Inl(body, ann):
                if ann is None:
                    raise CheckError(
                        ANNOTATION_REQUIRED, "inl needs a sum type annotation"
                    )
                return self.check_injection(ctx, amb, t, ann)
            case Inr(body, ann):
                if ann is None:
                    raise CheckError(
                        ANNOTATION_REQUIRED, "inr needs a sum type annotation"
                    )
                return self.check_injection(ctx, amb, t, ann)
            case CaseProd(modality, subject, left, right, body):
                sty = self.subject(ctx, amb, modality, subject)
                if not isinstance(sty, Product):
                    raise CheckError(
                        MODE_MISMATCH,
                        "pair case on a non-product",
                        actual=pretty_type(sty),
                    )
                bctx = ctx.push(
                    VarBind(left, sty.left, modality, amb),
                    VarBind(right, sty.right, modality, amb),
                )
                return self.synth(bctx, amb, body)
            case CaseSum(modality, subject, left, left_body, right, right_body):
                sty = self.subject(ctx, amb, modality, subject)
                if not isinstance(sty, Sum):
                    raise CheckError(
                        MODE_MISMATCH,
                        "sum case on a non-sum",
                        actual=pretty_type(sty),
                    )
                lt = self.synth(
                    ctx.push(VarBind(left, sty.left, modality, amb)), amb, left_body
                )
                self.check(
                    ctx.push(VarBind(right, sty.right, modality, amb)),
                    amb,
                    right_body,
                    lt,
                )
                return lt
            case Nil(ann):
                if ann is None:
                    raise CheckError(
                        ANNOTATION_REQUIRED, "nil needs a list type annotation"
                    )
                kind_of(ctx, ann)
                if not isinstance(ann, ListType):
                    raise CheckError(
                        MODE_MISMATCH,
                        "nil annotated with a non-list type",
                        actual=pretty_type(ann),
                    )
                return ann
            case Cons(head, tail):
                ht = self.synth(ctx, amb, head)
                self.check(ctx, amb, tail, ListType(ht))
                return ListType(ht)
            case CaseList(modality, subject, nil_body, head, rest, cons_body):
                sty = self.subject(ctx, amb, modality, subject)
                if not isinstance(sty, ListType):
                    raise CheckError(
                        MODE_MISMATCH,
                        "list case on a non-list",
                        actual=pretty_type(sty),
                    )
                bty = self.synth(ctx, amb, nil_body)
                bctx = ctx.push(
                    VarBind(head, sty.elem, modality, amb),
                    VarBind(rest, sty, modality, amb),
                )
                self.check(bctx, amb, cons_body, bty)
                return bty
            case Fold(ctor, body):
                name, payload = self.ctor_payload(ctor)
                self.check(ctx, amb, body, payload)
                return NamedType(name)
            case CaseData(modality, subject, ctor, var, body):
                sty = self.subject(ctx, amb, modality, subject)
                if not isinstance(sty, NamedType):
                    raise CheckError(
                        MODE_MISMATCH,
                        "data case on a non-data type",
                        actual=pretty_type(sty),
                    )
                dc, payload = self.lookup_data(sty.name)
                if dc != ctor:
                    raise CheckError(
                        HANDLER_CLAUSE_MISMATCH,
                        f"constructor {ctor} does not build {sty.name}",
                    )
                bctx = ctx.push(VarBind(var, payload, modality, amb))
                return self.synth(bctx, amb, body)
            case If(cond, then_branch, else_branch):
                self.check(ctx, amb, cond, BOOL)
                tt = self.synth(ctx, amb, then_branch)
                self.check(ctx, amb, else_branch, tt)
                return tt
            case BinOp(op, left, right):
                return self.binop(ctx, amb, op, left, right)
            case Fix(name, ftype, body):
                kind_of(ctx, ftype)
                if not syntax.is_value(body):
                    raise CheckError(
                        ESCAPE_VIOLATION, "recursive binding of a computation"
                    )
                bctx = ctx.push(VarBind(name, ftype, index=amb))
                self.check(bctx, amb, body, ftype)
                return ftype
        raise CheckError(MODE_MISMATCH, f"cannot type {t!r}")

    def check(self, ctx: Context, amb: Row, t: Term, expected: Type) -> None:
        match t:
            case Inl(_, _) | Inr(_, _):
                self.check_injection(ctx, amb, t, expected)
                return
            case Nil(ann):
                if not isinstance(expected, ListType):
                    raise CheckError(
                        MODE_MISMATCH,
                        "nil against a non-list type",
                        expected=pretty_type(expected),
                    )
                if ann is not None and not type_equiv(ann, expected):
                    raise CheckError(
                        MODE_MISMATCH,
                        "list annotation disagrees with the expected type",
                        expected=pretty_type(expected),
                        actual=pretty_type(ann),
                    )
                return
            case Cons(head, tail) if isinstance(expected, ListType):
                self.check(ctx, amb, head, expected.elem)
                self.check(ctx, amb, tail, expected)
                return
            case Pair(left, right) if isinstance(expected, Product):
                self.check(ctx, amb, left, expected.left)
                self.check(ctx, amb, right, expected.right)
                return
            case If(cond, then_branch, else_branch):
                self.check(ctx, amb, cond, BOOL)
                self.check(ctx, amb, then_branch, expected)
                self.check(ctx, amb, else_branch, expected)
                return
            case _:
                actual = self.synth(ctx, amb, t)
                if not type_equiv(actual, expected):
                    raise CheckError(
                        MODE_MISMATCH,
                        "type mismatch",
                        expected=pretty_type(expected),
                        actual=pretty_type(actual),
                    )

    # -- rule bodies

    def var(self, ctx: Context, amb: Row, name: str) -> Type:
        hit = ctx.lookup_var(name)
        if hit is None:
            raise CheckError(UNBOUND_VAR, f"unbound variable {name}")
        bind, suffix = hit
        nu = locks_of(suffix)
        assert row_equiv(act(nu, bind.index), amb)
        if kind_of(ctx, bind.type) == Kind.ABS:
            return bind.type
        if not transform(bind.modality, nu, bind.index):
            raise CheckError(
                VAR_ACCESS_DENIED,
                f"variable {name} bound under modality "
                f"{pretty_modality(bind.modality)} cannot cross locks "
                f"{pretty_modality(nu)} at {pretty_row_or_dot(bind.index)}",
            )
        return bind.type

    def mod(self, ctx: Context, amb: Row, m: syntax.Modality, body: Term) -> Type:
        check_modality(ctx, m)
        empty_absolute = isinstance(m, Absolute) and not m.row.entries and m.row.tail is None
        if not syntax.is_value(body) and not empty_absolute:
            raise CheckError(
                ESCAPE_VIOLATION,
                "boxing a computation requires the empty absolute modality",
            )
        inner = act(m, amb)
        bty = self.synth(ctx.push(Lock(m, amb)), inner, body)
        return Box(m, bty)

    def letmod(self, ctx: Context, amb: Row, t: Letmod) -> Type:
        check_modality(ctx, t.outer)
        check_modality(ctx, t.inner)
        inner_amb = act(t.outer, amb)
        sctx = ctx.push(Lock(t.outer, amb), *(TyBind(v, k) for v, k in t.binders))
        if t.binders and not syntax.is_value(t.subject):
            raise CheckError(
                ESCAPE_VIOLATION, "generalizing over a computation"
            )
        sty = self.synth(sctx, inner_amb, t.subject)
        if not isinstance(sty, Box):
            raise CheckError(
                MODE_MISMATCH,
                "unboxing a non-boxed term",
                actual=pretty_type(sty),
            )
        if not mod_equiv(sty.modality, t.inner):
            raise CheckError(
                MODE_MISMATCH,
                "modality annotation disagrees with the subject",
                expected=pretty_modality(t.inner),
                actual=pretty_modality(sty.modality),
            )
        bound = sty.body
        for v, k in reversed(t.binders):
            bound = Forall(v, k, bound)
        bctx = ctx.push(VarBind(t.var, bound, compose(t.outer, t.inner), amb))
        return self.synth(bctx, amb, t.body)

    def do(self, ctx: Context, amb: Row, label: str, arg: Term) -> Type:
        first = None
        for l, p in normalize(amb).entries:
            if l == label:
                first = p
                break
        if first is None or isinstance(first, syntax.Absent):
            raise CheckError(
                OPERATION_ABSENT,
                f"operation {label} is not available in the ambient row "
                f"{pretty_row_or_dot(amb)}",
            )
        self.check(ctx, amb, arg, first.arg)
        return first.res

    def subject(self, ctx: Context, amb: Row, m: syntax.Modality, subject: Term) -> Type:
        check_modality(ctx, m)
        inner = act(m, amb)
        return self.synth(ctx.push(Lock(m, amb)), inner, subject)

    def handle(self, ctx: Context, amb: Row, t: Handle) -> Type:
        h = t.handler
        seen = set()
        for c in h.clauses:
            if c.label in seen:
                raise CheckError(
                    HANDLER_CLAUSE_MISMATCH, f"duplicate clause for {c.label}"
                )
            seen.add(c.label)
            check_presence(ctx, c.label, OpSig(c.arg_type, c.res_type))
        d = tuple((c.label, OpSig(c.arg_type, c.res_type)) for c in h.clauses)
        flavor = t.flavor
        if flavor.absolute:
            e = t.row if t.row is not None else amb
            check_row(ctx, e)
            if not transform(Absolute(e), syntax.IDENTITY, amb):
                raise CheckError(
                    MODE_MISMATCH,
                    "handler row annotation is not below the ambient row",
                    expected=pretty_row_or_dot(amb),
                    actual=pretty_row_or_dot(e),
                )
            inner_amb = ext_plus(d, e)
            lock_m: syntax.Modality = Absolute(inner_amb)
            box_m: syntax.Modality = Absolute(inner_amb)
            resume_box: syntax.Modality = Absolute(e)
        else:
            e = amb
            inner_amb = ext_plus(d, amb)
            lock_m = Relative((), d)
            box_m = Relative((), d)
            resume_box = Relative((), d)
        a = self.synth(ctx.push(Lock(lock_m, amb)), inner_amb, t.body)

        if flavor == HandlerFlavor.DEEP:
            rctx = ctx.push(VarBind(h.ret_var, Box(box_m, a), index=amb))
            b = self.synth(rctx, amb, h.ret_body)
            for c in h.clauses:
                cctx = ctx.push(
                    VarBind(c.param, c.arg_type, index=amb),
                    VarBind(c.resume, Arrow(c.res_type, b), index=amb),
                )
                self.clause_body(cctx, amb, c, b)
            return b
        if flavor == HandlerFlavor.ABS:
            rctx = ctx.push(
                Lock(Absolute(e), amb),
                VarBind(h.ret_var, Box(box_m, a), index=e),
            )
            b = self.synth(rctx, e, h.ret_body)
            for c in h.clauses:
                cctx = ctx.push(
                    Lock(Absolute(e), amb),
                    VarBind(c.param, c.arg_type, index=e),
                    VarBind(c.resume, Box(resume_box, Arrow(c.res_type, b)), index=e),
                )
                self.clause_body(cctx, e, c, b)
            return b
        if flavor == HandlerFlavor.SHALLOW:
            rctx = ctx.push(VarBind(h.ret_var, Box(box_m, a), index=amb))
            b = self.synth(rctx, amb, h.ret_body)
            for c in h.clauses:
                cctx = ctx.push(
                    VarBind(c.param, c.arg_type, index=amb),
                    VarBind(c.resume, Box(resume_box, Arrow(c.res_type, a)), index=amb),
                )
                self.clause_body(cctx, amb, c, b)
            return b
        # Absolute shallow: the return and clause bodies run back at the
        # ambient row with no lock; resumptions are boxed at the handled row.
        rctx = ctx.push(VarBind(h.ret_var, Box(box_m, a), index=amb))
        b = self.synth(rctx, amb, h.ret_body)
        for c in h.clauses:
            cctx = ctx.push(
                VarBind(c.param, c.arg_type, index=amb),
                VarBind(c.resume, Box(box_m, Arrow(c.res_type, a)), index=amb),
            )
            self.clause_body(cctx, amb, c, b)
        return b

    def clause_body(self, ctx: Context, amb: Row, c: syntax.OpClause, b: Type) -> None:
        try:
            self.check(ctx, amb, c.body, b)
        except CheckError as err:
            if err.code == MODE_MISMATCH:
                raise CheckError(
                    HANDLER_CLAUSE_MISMATCH,
                    f"clause for {c.label} disagrees with the return clause: "
                    + err.message,
                    span=err.span,
                    expected=err.expected,
                    actual=err.actual,
                ) from None
            raise

    def check_injection(self, ctx: Context, amb: Row, t: Term, expected: Type) -> Type:
        kind_of(ctx, expected)
        if not isinstance(expected, Sum):
            raise CheckError(
                MODE_MISMATCH,
                "injection against a non-sum type",
                expected=pretty_type(expected),
            )
        if isinstance(t, Inl):
            if t.ann is not None and not type_equiv(t.ann, expected):
                raise CheckError(
                    MODE_MISMATCH,
                    "sum annotation disagrees with the expected type",
                    expected=pretty_type(expected),
                    actual=pretty_type(t.ann),
                )
            self.check(ctx, amb, t.body, expected.left)
        else:
            assert isinstance(t, Inr)
            if t.ann is not None and not type_equiv(t.ann, expected):
                raise CheckError(
                    MODE_MISMATCH,
                    "sum annotation disagrees with the expected type",
                    expected=pretty_type(expected),
                    actual=pretty_type(t.ann),
                )
            self.check(ctx, amb, t.body, expected.right)
        return expected

    def check_type_arg(self, ctx: Context, arg: TypeArg, kind: Kind) -> None:
        check_type_arg(ctx, arg, kind)

    def binop(self, ctx: Context, amb: Row, op: str, left: Term, right: Term) -> Type:
        if op == "++":
            lt = self.synth(ctx, amb, left)
            if not isinstance(lt, ListType):
                raise CheckError(
                    MODE_MISMATCH,
                    "++ expects lists",
                    actual=pretty_type(lt),
                )
            self.check(ctx, amb, right, lt)
            return lt
        if op not in syntax.BINOPS:
            raise CheckError(MODE_MISMATCH, f"unknown operator {op}")
        self.check(ctx, amb, left, INT)
        self.check(ctx, amb, right, INT)
        return BOOL if op in ("==", "<", "<=") else INT


def check_core(
    ctx: Context,
    term: Term,
    ambient: Row,
    data_env: Optional[DataEnv] = None,
) -> Type:
    return _Core(data_env).synth(ctx, ambient, term)


def check_core_against(
    ctx: Context,
    term: Term,
    ambient: Row,
    expected: Type,
    data_env: Optional[DataEnv] = None,
) -> None:
    _Core(data_env).check(ctx, ambient, term, expected)
