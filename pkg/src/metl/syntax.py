"""Abstract syntax for the core calculus.

Covers kinds, presences, effect rows, modalities, types, terms, handlers, and
typing contexts, together with pretty-printing, free-variable computation, and
capture-avoiding term substitution.

Representation notes:
  - An effect row is a sequence of (label, presence) entries plus an optional
    variable tail; the tail carries a mask of labels already subtracted from
    whatever the variable stands for.  Entries with the same label keep their
    relative order; distinct labels commute.
  - A mask is a multiset of labels, stored as a sorted tuple.
  - Extensions (closed entry sequences) reuse the entry representation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

# ---------------------------------------------------------------------------
# Kinds


class Kind(Enum):
    ABS = "Abs"
    ANY = "Any"
    EFFECT = "Effect"


def subkind(a: Kind, b: Kind) -> bool:
    """Abs is a subkind of Any; Effect stands alone."""
    return a == b or (a == Kind.ABS and b == Kind.ANY)


# ---------------------------------------------------------------------------
# Presences, rows, masks, modalities

Labels = tuple[str, ...]  # multiset of labels, kept sorted


def labels(*ls: str) -> Labels:
    return tuple(sorted(ls))


@dataclass(frozen=True)
class Absent:
    """The label is in the row but its operation cannot be invoked."""


ABSENT = Absent()


@dataclass(frozen=True)
class OpSig:
    """An invokable operation taking `arg` and resuming with `res`."""

    arg: "Type"
    res: "Type"


Presence = Union[Absent, OpSig]

Entry = tuple[str, Presence]
Ext = tuple[Entry, ...]  # closed extension row


def ext(*pairs: Entry) -> Ext:
    return tuple(pairs)


@dataclass(frozen=True)
class RowVar:
    """Row tail: an effect variable minus a mask of subtracted labels."""

    name: str
    mask: Labels = ()


@dataclass(frozen=True)
class Row:
    entries: Ext = ()
    tail: Optional[RowVar] = None


EMPTY_ROW = Row()


def row(*entries: Entry, tail: Optional[RowVar] = None) -> Row:
    return Row(tuple(entries), tail)


@dataclass(frozen=True)
class Absolute:
    """[E]: replaces the ambient effect context outright."""

    row: Row = EMPTY_ROW


@dataclass(frozen=True)
class Relative:
    """<L|D>: masks L from the ambient context, then extends with D."""

    mask: Labels = ()
    ext: Ext = ()


Modality = Union[Absolute, Relative]

IDENTITY = Relative()


def is_identity(m: Modality) -> bool:
    return isinstance(m, Relative) and not m.mask and not m.ext


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class UnitType:
    pass


@dataclass(frozen=True)
class IntType:
    pass


@dataclass(frozen=True)
class BoolType:
    pass


@dataclass(frozen=True)
class StringType:
    pass


@dataclass(frozen=True)
class ListType:
    elem: "Type"


@dataclass(frozen=True)
class NamedType:
    """A declared (possibly recursive) single-constructor data type."""

    name: str


@dataclass(frozen=True)
class TyVar:
    name: str


@dataclass(frozen=True)
class Arrow:
    dom: "Type"
    cod: "Type"


@dataclass(frozen=True)
class Box:
    modality: Modality
    body: "Type"


@dataclass(frozen=True)
class Forall:
    var: str
    kind: Kind
    body: "Type"


@dataclass(frozen=True)
class Product:
    left: "Type"
    right: "Type"


@dataclass(frozen=True)
class Sum:
    left: "Type"
    right: "Type"


Type = Union[
    UnitType,
    IntType,
    BoolType,
    StringType,
    ListType,
    NamedType,
    TyVar,
    Arrow,
    Box,
    Forall,
    Product,
    Sum,
]

# A type argument in a type application: a proper type or an effect row.
TypeArg = Union[Type, Row]

UNIT = UnitType()
INT = IntType()
BOOL = BoolType()
STRING = StringType()


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class UnitVal:
    pass


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class StrLit:
    value: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lam:
    param: str
    param_type: Type
    body: "Term"


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"


@dataclass(frozen=True)
class TyLam:
    var: str
    kind: Kind
    body: "Term"  # must be a value


@dataclass(frozen=True)
class TyApp:
    fn: "Term"
    arg: TypeArg


@dataclass(frozen=True)
class Mod:
    modality: Modality
    body: "Term"


@dataclass(frozen=True)
class Letmod:
    """let_outer mod_inner {binders} var = subject in body."""

    outer: Modality
    inner: Modality
    binders: tuple[tuple[str, Kind], ...]
    var: str
    subject: "Term"
    body: "Term"


@dataclass(frozen=True)
class Do:
    label: str
    arg: "Term"


@dataclass(frozen=True)
class Mask:
    labels: Labels
    body: "Term"


class HandlerFlavor(Enum):
    DEEP = "handle"
    ABS = "handle#"
    SHALLOW = "handle!"
    ABS_SHALLOW = "handle#!"

    @property
    def absolute(self) -> bool:
        return self in (HandlerFlavor.ABS, HandlerFlavor.ABS_SHALLOW)

    @property
    def shallow(self) -> bool:
        return self in (HandlerFlavor.SHALLOW, HandlerFlavor.ABS_SHALLOW)


@dataclass(frozen=True)
class OpClause:
    label: str
    arg_type: Type
    res_type: Type
    param: str
    resume: str
    body: "Term"


@dataclass(frozen=True)
class Handler:
    ret_var: str
    ret_body: "Term"
    clauses: tuple[OpClause, ...]

    def clause_for(self, label: str) -> Optional[OpClause]:
        for c in self.clauses:
            if c.label == label:
                return c
        return None

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.clauses)


@dataclass(frozen=True)
class Handle:
    flavor: HandlerFlavor
    body: "Term"
    handler: Handler
    # Outer-row annotation for the absolute flavors; defaults to the ambient
    # row at the handler when omitted.
    row: Optional[Row] = None


@dataclass(frozen=True)
class Pair:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Inl:
    body: "Term"
    ann: Optional[Type] = None  # full sum type, when given


@dataclass(frozen=True)
class Inr:
    body: "Term"
    ann: Optional[Type] = None


@dataclass(frozen=True)
class CaseProd:
    modality: Modality
    subject: "Term"
    left: str
    right: str
    body: "Term"


@dataclass(frozen=True)
class CaseSum:
    modality: Modality
    subject: "Term"
    left: str
    left_body: "Term"
    right: str
    right_body: "Term"


@dataclass(frozen=True)
class Nil:
    ann: Optional[Type] = None  # full list type, when given


@dataclass(frozen=True)
class Cons:
    head: "Term"
    tail: "Term"


@dataclass(frozen=True)
class CaseList:
    modality: Modality
    subject: "Term"
    nil_body: "Term"
    head: str
    rest: str
    cons_body: "Term"


@dataclass(frozen=True)
class Fold:
    """Constructor application of a declared data type."""

    ctor: str
    body: "Term"


@dataclass(frozen=True)
class CaseData:
    modality: Modality
    subject: "Term"
    ctor: str
    var: str
    body: "Term"


@dataclass(frozen=True)
class If:
    cond: "Term"
    then_branch: "Term"
    else_branch: "Term"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * == < <=
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Fix:
    """rec name : type . body — a recursive value, unfolded on demand."""

    name: str
    type: Type
    body: "Term"  # must be a value


Term = Union[
    UnitVal,
    IntLit,
    BoolLit,
    StrLit,
    Var,
    Lam,
    App,
    TyLam,
    TyApp,
    Mod,
    Letmod,
    Do,
    Mask,
    Handle,
    Pair,
    Inl,
    Inr,
    CaseProd,
    CaseSum,
    Nil,
    Cons,
    CaseList,
    Fold,
    CaseData,
    If,
    BinOp,
    Fix,
]

UNITV = UnitVal()

BINOPS = ("+", "-", "*", "++", "==", "<", "<=")


# ---------------------------------------------------------------------------
# Value predicates


def is_value(t: Term) -> bool:
    """The value grammar; type application of a value counts as a value."""
    match t:
        case UnitVal() | IntLit() | BoolLit() | StrLit() | Var() | Lam() | TyLam() | Nil() | Fix():
            return True
        case TyApp(fn, _):
            return is_value(fn)
        case Mod(_, body) | Inl(body, _) | Inr(body, _) | Fold(_, body):
            return is_value(body)
        case Pair(left, right) | Cons(left, right):
            return is_value(left) and is_value(right)
        case _:
            return False


def is_value_nf(t: Term) -> bool:
    """Value normal forms: values with no type-application redex left."""
    match t:
        case UnitVal() | IntLit() | BoolLit() | StrLit() | Var() | Lam() | TyLam() | Nil() | Fix():
            return True
        case Mod(_, body) | Inl(body, _) | Inr(body, _) | Fold(_, body):
            return is_value_nf(body)
        case Pair(left, right) | Cons(left, right):
            return is_value_nf(left) and is_value_nf(right)
        case _:
            return False


# ---------------------------------------------------------------------------
# Typing contexts


@dataclass(frozen=True)
class VarBind:
    name: str
    type: Type
    modality: Modality = IDENTITY
    index: Row = EMPTY_ROW  # ambient row at the binding position


@dataclass(frozen=True)
class Lock:
    modality: Modality
    index: Row  # ambient row outside the lock


@dataclass(frozen=True)
class TyBind:
    name: str
    kind: Kind


CtxEntry = Union[VarBind, Lock, TyBind]


@dataclass(frozen=True)
class Context:
    entries: tuple[CtxEntry, ...] = ()

    def push(self, *entries: CtxEntry) -> "Context":
        return Context(self.entries + entries)

    def lookup_var(self, name: str) -> Optional[tuple[VarBind, tuple[CtxEntry, ...]]]:
        """Innermost binding for `name` plus the context suffix after it."""
        for i in range(len(self.entries) - 1, -1, -1):
            e = self.entries[i]
            if isinstance(e, VarBind) and e.name == name:
                return e, self.entries[i + 1 :]
        return None

    def lookup_tyvar(self, name: str) -> Optional[Kind]:
        for e in reversed(self.entries):
            if isinstance(e, TyBind) and e.name == name:
                return e.kind
        return None


EMPTY_CONTEXT = Context()


# ---------------------------------------------------------------------------
# Free variables and fresh names

_fresh_counter = itertools.count(1)


def fresh_name(base: str = "x", avoid: frozenset[str] = frozenset()) -> str:
    base = base.rstrip("0123456789_")
    if not base:
        base = "x"
    while True:
        name = f"_{base}{next(_fresh_counter)}"
        if name not in avoid:
            return name


def free_term_vars(t: Term) -> frozenset[str]:
    match t:
        case Var(name):
            return frozenset({name})
        case Lam(param, _, body):
            return free_term_vars(body) - {param}
        case App(fn, arg):
            return free_term_vars(fn) | free_term_vars(arg)
        case TyLam(_, _, body) | TyApp(body, _) | Mod(_, body) | Do(_, body):
            return free_term_vars(body)
        case Mask(_, body) | Inl(body, _) | Inr(body, _) | Fold(_, body):
            return free_term_vars(body)
        case Letmod(_, _, _, var, subject, body):
            return free_term_vars(subject) | (free_term_vars(body) - {var})
        case Handle(_, body, handler, _):
            out = free_term_vars(body)
            out |= free_term_vars(handler.ret_body) - {handler.ret_var}
            for c in handler.clauses:
                out |= free_term_vars(c.body) - {c.param, c.resume}
            return out
        case Pair(left, right) | Cons(left, right):
            return free_term_vars(left) | free_term_vars(right)
        case CaseProd(_, subject, x, y, body):
            return free_term_vars(subject) | (free_term_vars(body) - {x, y})
        case CaseSum(_, subject, x, bl, y, br):
            return (
                free_term_vars(subject)
                | (free_term_vars(bl) - {x})
                | (free_term_vars(br) - {y})
            )
        case CaseList(_, subject, nil_body, h, r, cons_body):
            return (
                free_term_vars(subject)
                | free_term_vars(nil_body)
                | (free_term_vars(cons_body) - {h, r})
            )
        case CaseData(_, subject, _, var, body):
            return free_term_vars(subject) | (free_term_vars(body) - {var})
        case If(c, a, b):
            return free_term_vars(c) | free_term_vars(a) | free_term_vars(b)
        case BinOp(_, left, right):
            return free_term_vars(left) | free_term_vars(right)
        case Fix(name, _, body):
            return free_term_vars(body) - {name}
        case _:
            return frozenset()


def _rename_bound(t: Term, old: str, new: str) -> Term:
    """Replace free occurrences of `old` with `new` (both plain variables)."""
    return subst_term(t, old, Var(new))


def subst_term(t: Term, name: str, value: Term) -> Term:
    """Capture-avoiding substitution of a value for a term variable."""
    fv = None  # computed lazily; most substitutions hit no binders

    def fvs() -> frozenset[str]:
        nonlocal fv
        if fv is None:
            fv = free_term_vars(value)
        return fv

    def freshen(binder: str, bodies: list[Term]) -> tuple[str, list[Term]]:
        if binder != name and binder in fvs():
            avoid = fvs() | frozenset().union(*(free_term_vars(b) for b in bodies))
            nb = fresh_name(binder, avoid)
            return nb, [_rename_bound(b, binder, nb) for b in bodies]
        return binder, bodies

    def go(t: Term) -> Term:
        match t:
            case Var(n):
                return value if n == name else t
            case Lam(param, pt, body):
                if param == name:
                    return t
                param, [body] = freshen(param, [body])
                return Lam(param, pt, go(body))
            case App(fn, arg):
                return App(go(fn), go(arg))
            case TyLam(v, k, body):
                return TyLam(v, k, go(body))
            case TyApp(fn, arg):
                return TyApp(go(fn), arg)
            case Mod(m, body):
                return Mod(m, go(body))
            case Letmod(outer, inner, binders, var, subject, body):
                subject = go(subject)
                if var == name:
                    return Letmod(outer, inner, binders, var, subject, body)
                var, [body] = freshen(var, [body])
                return Letmod(outer, inner, binders, var, subject, go(body))
            case Do(label, arg):
                return Do(label, go(arg))
            case Mask(ls, body):
                return Mask(ls, go(body))
            case Handle(flavor, body, handler, ann):
                body = go(body)
                rv, rb = handler.ret_var, handler.ret_body
                if rv != name:
                    rv, [rb] = freshen(rv, [rb])
                    rb = go(rb)
                clauses = []
                for c in handler.clauses:
                    if name in (c.param, c.resume):
                        clauses.append(c)
                        continue
                    p, r, cb = c.param, c.resume, c.body
                    if p in fvs() or r in fvs():
                        avoid = fvs() | free_term_vars(cb) | {p, r}
                        np = fresh_name(p, avoid)
                        nr = fresh_name(r, avoid | {np})
                        cb = _rename_bound(_rename_bound(cb, p, np), r, nr)
                        p, r = np, nr
                    clauses.append(
                        OpClause(c.label, c.arg_type, c.res_type, p, r, go(cb))
                    )
                return Handle(flavor, body, Handler(rv, rb, tuple(clauses)), ann)
            case Pair(left, right):
                return Pair(go(left), go(right))
            case Inl(body, ann):
                return Inl(go(body), ann)
            case Inr(body, ann):
                return Inr(go(body), ann)
            case CaseProd(m, subject, x, y, body):
                subject = go(subject)
                if name in (x, y):
                    return CaseProd(m, subject, x, y, body)
                if x in fvs() or y in fvs():
                    avoid = fvs() | free_term_vars(body) | {x, y}
                    nx = fresh_name(x, avoid)
                    ny = fresh_name(y, avoid | {nx})
                    body = _rename_bound(_rename_bound(body, x, nx), y, ny)
                    x, y = nx, ny
                return CaseProd(m, subject, x, y, go(body))
            case CaseSum(m, subject, x, bl, y, br):
                subject = go(subject)
                if x != name:
                    x, [bl] = freshen(x, [bl])
                    bl = go(bl)
                if y != name:
                    y, [br] = freshen(y, [br])
                    br = go(br)
                return CaseSum(m, subject, x, bl, y, br)
            case Nil():
                return t
            case Cons(h, tl):
                return Cons(go(h), go(tl))
            case CaseList(m, subject, nil_body, h, r, cons_body):
                subject = go(subject)
                nil_body = go(nil_body)
                if name in (h, r):
                    return CaseList(m, subject, nil_body, h, r, cons_body)
                if h in fvs() or r in fvs():
                    avoid = fvs() | free_term_vars(cons_body) | {h, r}
                    nh = fresh_name(h, avoid)
                    nr = fresh_name(r, avoid | {nh})
                    cons_body = _rename_bound(
                        _rename_bound(cons_body, h, nh), r, nr
                    )
                    h, r = nh, nr
                return CaseList(m, subject, nil_body, h, r, go(cons_body))
            case Fold(ctor, body):
                return Fold(ctor, go(body))
            case CaseData(m, subject, ctor, var, body):
                subject = go(subject)
                if var == name:
                    return CaseData(m, subject, ctor, var, body)
                var, [body] = freshen(var, [body])
                return CaseData(m, subject, ctor, var, go(body))
            case If(c, a, b):
                return If(go(c), go(a), go(b))
            case BinOp(op, left, right):
                return BinOp(op, go(left), go(right))
            case Fix(n, ty, body):
                if n == name:
                    return t
                n, [body] = freshen(n, [body])
                return Fix(n, ty, go(body))
            case _:
                return t

    return go(t)


# ---------------------------------------------------------------------------
# Pretty-printing

_PREC_ARROW = 1
_PREC_SUM = 2
_PREC_PROD = 3
_PREC_APP = 4
_PREC_ATOM = 5


def pretty_labels(ls: Labels) -> str:
    return ", ".join(ls)


def pretty_presence(p: Presence) -> str:
    if isinstance(p, Absent):
        return "-"
    return f"{pretty_type(p.arg, _PREC_APP)} >> {pretty_type(p.res, _PREC_APP)}"


def pretty_ext(d: Ext) -> str:
    return ", ".join(f"{l} : {pretty_presence(p)}" for l, p in d)


def pretty_row(r: Row) -> str:
    parts = [f"{l} : {pretty_presence(p)}" for l, p in r.entries]
    if r.tail is not None:
        t = r.tail.name
        if r.tail.mask:
            t += " - {" + pretty_labels(r.tail.mask) + "}"
        parts.append(t)
    return ", ".join(parts)


def pretty_row_or_dot(r: Row) -> str:
    s = pretty_row(r)
    return s if s else "."


def pretty_modality(m: Modality) -> str:
    if isinstance(m, Absolute):
        return f"[{pretty_row(m.row)}]"
    if not m.mask and not m.ext:
        return "<>"
    if not m.mask:
        return f"<{pretty_ext(m.ext)}>"
    if not m.ext:
        return f"<{pretty_labels(m.mask)}|>"
    return f"<{pretty_labels(m.mask)} | {pretty_ext(m.ext)}>"


def pretty_kind(k: Kind) -> str:
    return k.value


def _forall_binder(var: str, kind: Kind) -> str:
    if kind == Kind.ABS:
        return f"[{var}]"
    if kind == Kind.EFFECT:
        return "{" + var + "}"
    return var


def pretty_type(t: Type, prec: int = 0) -> str:
    def wrap(s: str, p: int) -> str:
        return f"({s})" if p < prec else s

    match t:
        case UnitType():
            return "1"
        case IntType():
            return "Int"
        case BoolType():
            return "Bool"
        case StringType():
            return "String"
        case TyVar(name) | NamedType(name):
            return name
        case ListType(elem):
            return wrap(f"List {pretty_type(elem, _PREC_ATOM)}", _PREC_APP)
        case Arrow(dom, cod):
            s = f"{pretty_type(dom, _PREC_SUM)} -> {pretty_type(cod, _PREC_ARROW)}"
            return wrap(s, _PREC_ARROW)
        case Sum(left, right):
            s = f"{pretty_type(left, _PREC_SUM)} + {pretty_type(right, _PREC_PROD)}"
            return wrap(s, _PREC_SUM)
        case Product(left, right):
            s = f"{pretty_type(left, _PREC_PROD)} * {pretty_type(right, _PREC_APP)}"
            return wrap(s, _PREC_PROD)
        case Box(modality, body):
            return f"{pretty_modality(modality)}({pretty_type(body)})"
        case Forall(var, kind, body):
            s = f"forall {_forall_binder(var, kind)} . {pretty_type(body)}"
            return wrap(s, _PREC_ARROW)
    raise AssertionError(f"bad type: {t!r}")


def pretty_type_arg(a: TypeArg) -> str:
    if isinstance(a, Row):
        return pretty_row_or_dot(a)
    return pretty_type(a)


# Term precedences.
_TPREC_LOW = 0  # fun, handlers, let, case, if, rec
_TPREC_CMP = 1
_TPREC_ADD = 2
_TPREC_MUL = 3
_TPREC_APP = 4
_TPREC_ATOM = 5

_BINOP_PREC = {"==": _TPREC_CMP, "<": _TPREC_CMP, "<=": _TPREC_CMP,
               "+": _TPREC_ADD, "-": _TPREC_ADD, "++": _TPREC_ADD,
               "*": _TPREC_MUL}


def _as_list_literal(t: Term, strict: bool = False) -> Optional[list[Term]]:
    """Unfold a cons chain; in strict mode an annotated nil blocks the sugar."""
    items: list[Term] = []
    while True:
        match t:
            case Nil(ann) if ann is None or not strict:
                return items
            case Cons(h, rest):
                items.append(h)
                t = rest
            case _:
                return None


def pretty_term(t: Term, prec: int = 0) -> str:
    def wrap(s: str, p: int) -> str:
        return f"({s})" if p < prec else s

    lit = _as_list_literal(t, strict=True)
    if lit is not None:
        return "[" + ", ".join(pretty_term(x) for x in lit) + "]"

    match t:
        case UnitVal():
            return "()"
        case IntLit(v):
            return wrap(str(v), _TPREC_ADD) if v < 0 else str(v)
        case BoolLit(v):
            return "true" if v else "false"
        case StrLit(v):
            esc = (
                v.replace("\\", "\\\\")
                .replace('"', '\\"')
                .replace("\n", "\\n")
                .replace("\t", "\\t")
            )
            return '"' + esc + '"'
        case Var(name):
            return name
        case Lam(param, pt, body):
            ann = f" : {pretty_type(pt, _PREC_SUM)}" if pt is not None else ""
            return wrap(f"fun {param}{ann} -> {pretty_term(body)}", _TPREC_LOW)
        case App(fn, arg):
            s = f"{pretty_term(fn, _TPREC_APP)} {pretty_term(arg, _TPREC_ATOM)}"
            return wrap(s, _TPREC_APP)
        case TyLam(var, kind, body):
            k = "" if kind == Kind.ANY else f" : {pretty_kind(kind)}"
            return wrap(f"fun {{{var}{k}}} -> {pretty_term(body)}", _TPREC_LOW)
        case TyApp(fn, arg):
            s = f"{pretty_term(fn, _TPREC_APP)} {{{pretty_type_arg(arg)}}}"
            return wrap(s, _TPREC_APP)
        case Mod(m, body):
            s = f"mod_{pretty_modality(m)} {pretty_term(body, _TPREC_ATOM)}"
            return wrap(s, _TPREC_APP)
        case Letmod(outer, inner, binders, var, subject, body):
            bs = ""
            if binders:
                bs = "{" + ", ".join(
                    v if k == Kind.ANY else f"{v} : {pretty_kind(k)}"
                    for v, k in binders
                ) + "} "
            s = (
                f"let_{pretty_modality(outer)} mod_{pretty_modality(inner)} "
                f"{bs}{var} = {pretty_term(subject)} in {pretty_term(body)}"
            )
            return wrap(s, _TPREC_LOW)
        case Do(label, arg):
            s = f"do {label} {pretty_term(arg, _TPREC_ATOM)}"
            return wrap(s, _TPREC_APP)
        case Mask(ls, body):
            s = f"mask_{{{pretty_labels(ls)}}} {pretty_term(body, _TPREC_ATOM)}"
            return wrap(s, _TPREC_APP)
        case Handle(flavor, body, handler, ann):
            kw = flavor.value
            if ann is not None and flavor.absolute:
                kw += "{" + pretty_row(ann) + "}"
            parts = [f"return {handler.ret_var} ~> {pretty_term(handler.ret_body)}"]
            for c in handler.clauses:
                sig = f"({c.label} : {pretty_type(c.arg_type, _PREC_APP)} >> {pretty_type(c.res_type, _PREC_APP)})"
                parts.append(f"{sig} {c.param} {c.resume} ~> {pretty_term(c.body)}")
            s = f"{kw} {pretty_term(body)} with {{ " + " | ".join(parts) + " }"
            return wrap(s, _TPREC_LOW)
        case Pair(left, right):
            return f"({pretty_term(left)}, {pretty_term(right)})"
        case Inl(body, ann):
            s = f"inl {pretty_term(body, _TPREC_ATOM)}"
            if ann is not None:
                return f"({s} : {pretty_type(ann)})"
            return wrap(s, _TPREC_APP)
        case Inr(body, ann):
            s = f"inr {pretty_term(body, _TPREC_ATOM)}"
            if ann is not None:
                return f"({s} : {pretty_type(ann)})"
            return wrap(s, _TPREC_APP)
        case CaseProd(m, subject, x, y, body):
            s = (
                f"case_{pretty_modality(m)} {pretty_term(subject, _TPREC_APP)} of "
                f"({x}, {y}) ~> {pretty_term(body)}"
            )
            return wrap(s, _TPREC_LOW)
        case CaseSum(m, subject, x, bl, y, br):
            s = (
                f"case_{pretty_modality(m)} {pretty_term(subject, _TPREC_APP)} of "
                f"{{ inl {x} ~> {pretty_term(bl)} | inr {y} ~> {pretty_term(br)} }}"
            )
            return wrap(s, _TPREC_LOW)
        case Nil(ann):
            if ann is not None:
                return f"(nil : {pretty_type(ann)})"
            return "nil"
        case Cons(h, tl):
            s = f"cons {pretty_term(h, _TPREC_ATOM)} {pretty_term(tl, _TPREC_ATOM)}"
            return wrap(s, _TPREC_APP)
        case CaseList(m, subject, nil_body, h, r, cons_body):
            s = (
                f"case_{pretty_modality(m)} {pretty_term(subject, _TPREC_APP)} of "
                f"{{ nil ~> {pretty_term(nil_body)} | cons {h} {r} ~> {pretty_term(cons_body)} }}"
            )
            return wrap(s, _TPREC_LOW)
        case Fold(ctor, body):
            s = f"{ctor} {pretty_term(body, _TPREC_ATOM)}"
            return wrap(s, _TPREC_APP)
        case CaseData(m, subject, ctor, var, body):
            s = (
                f"case_{pretty_modality(m)} {pretty_term(subject, _TPREC_APP)} of "
                f"{{ {ctor} {var} ~> {pretty_term(body)} }}"
            )
            return wrap(s, _TPREC_LOW)
        case If(c, a, b):
            s = f"if {pretty_term(c)} then {pretty_term(a)} else {pretty_term(b)}"
            return wrap(s, _TPREC_LOW)
        case BinOp(op, left, right):
            p = _BINOP_PREC[op]
            s = f"{pretty_term(left, p)} {op} {pretty_term(right, p + 1)}"
            return wrap(s, p)
        case Fix(name, ty, body):
            s = f"rec {name} : {pretty_type(ty)} . {pretty_term(body)}"
            return wrap(s, _TPREC_LOW)
    raise AssertionError(f"bad term: {t!r}")


def render_value(t: Term) -> str:
    """Compact display of an evaluated result, e.g. `[3,4,8]` or `(1, 2)`."""
    lit = _as_list_literal(t)
    if lit is not None:
        return "[" + ",".join(render_value(x) for x in lit) + "]"
    match t:
        case UnitVal():
            return "()"
        case IntLit(v):
            return str(v)
        case BoolLit(v):
            return "true" if v else "false"
        case StrLit(v):
            return '"' + v + '"'
        case Pair(a, b):
            return f"({render_value(a)}, {render_value(b)})"
        case Inl(b, _):
            return f"inl {render_value(b)}"
        case Inr(b, _):
            return f"inr {render_value(b)}"
        case Cons(h, tl):
            return f"cons {render_value(h)} ({render_value(tl)})"
        case Mod(m, b):
            return f"mod_{pretty_modality(m)} {render_value(b)}"
        case Lam() | TyLam() | Fix():
            return "<fun>"
        case _:
            return pretty_term(t)
