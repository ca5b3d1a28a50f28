"""Small-step evaluation for the core calculus.

Each step decomposes the term into an evaluation context and a focus.  The
focus is either a redex (contracted in place), a value normal form, or an
operation request `do l U`.  Operation requests travel outward through the
frame stack until a handler catches them; masks shift which handler that is,
following the usual free-occurrence counting: a mask over l skips one more
candidate, a passed handler for l consumes one skip.

Handlers reinstall themselves in the resumption when deep; shallow handlers
substitute the bare continuation, boxed at the handler's modality.  Absolute
flavors box at their row annotation, defaulting to the ambient row threaded
through the decomposition when the annotation is omitted.

Recursive values unfold on demand: only when applied, eliminated by a case,
or used as an operand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

from . import syntax
from .algebra import act, ext_plus, row_minus, subst_type_in_term
from .syntax import (
    Absolute,
    App,
    BinOp,
    BoolLit,
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
    Handle,
    Handler,
    HandlerFlavor,
    If,
    Inl,
    Inr,
    IntLit,
    Labels,
    Lam,
    Letmod,
    Mask,
    Mod,
    Nil,
    Pair,
    Relative,
    Row,
    StrLit,
    Term,
    TyApp,
    TyLam,
    UnitVal,
    Var,
    free_term_vars,
    fresh_name,
    is_value_nf,
    pretty_term,
    subst_term,
)


class StuckError(Exception):
    """An elimination reached an argument of the wrong shape; well-typed
    closed programs never trigger this."""


@dataclass(frozen=True)
class _Frame:
    rebuild: Callable[[Term], Term]
    mask: Optional[Labels] = None  # set for mask frames
    dom: Optional[frozenset[str]] = None  # set for handler frames


@dataclass(frozen=True)
class _Step:
    """The focused subtree reduced to `term`; plug it back through frames."""

    term: Term
    frames: tuple[_Frame, ...]


@dataclass(frozen=True)
class _Op:
    """An operation request not yet caught by any handler in frames."""

    label: str
    arg: Term
    frames: tuple[_Frame, ...]


_VAL = None  # decomposition result for value normal forms

_Dec = Union[None, _Step, _Op]


@dataclass(frozen=True)
class Value:
    term: Term


@dataclass(frozen=True)
class OperationStuck:
    """The program stopped at `do label arg`; `shift` says which occurrence
    of the label in the ambient row the request refers to."""

    label: str
    arg: Term
    shift: int


@dataclass(frozen=True)
class OutOfFuel:
    term: Term


Outcome = Union[Value, OperationStuck, OutOfFuel]


def unfold(f: Fix) -> Term:
    return subst_term(f.body, f.name, f)


def _wrap(res: _Dec, rebuild: Callable[[Term], Term], *,
          mask: Optional[Labels] = None,
          dom: Optional[frozenset[str]] = None) -> _Dec:
    frame = _Frame(rebuild, mask, dom)
    if isinstance(res, _Step):
        return _Step(res.term, res.frames + (frame,))
    assert isinstance(res, _Op)
    return _Op(res.label, res.arg, res.frames + (frame,))


def _plug(term: Term, frames: tuple[_Frame, ...]) -> Term:
    for f in frames:
        term = f.rebuild(term)
    return term


def _shift(label: str, frames: tuple[_Frame, ...]) -> int:
    """Free-occurrence count of `label` over frames, innermost first."""
    n = 0
    for f in frames:
        if f.mask is not None:
            n += f.mask.count(label)
        elif f.dom is not None and label in f.dom:
            n -= 1
    return n


def _handler_ext(h: Handler) -> tuple[tuple[str, syntax.OpSig], ...]:
    return tuple((c.label, syntax.OpSig(c.arg_type, c.res_type)) for c in h.clauses)


def _resume_body(frames: tuple[_Frame, ...]) -> tuple[str, Term]:
    """Fresh hole variable plus the context plugged around it."""
    probe = _plug(Var("?"), frames)
    y = fresh_name("y", free_term_vars(probe))
    return y, _plug(Var(y), frames)


def _fire(t: Handle, op: _Op, amb: Row) -> Term:
    h = t.handler
    c = h.clause_for(op.label)
    assert c is not None
    y, around = _resume_body(op.frames)
    d = _handler_ext(h)
    e = t.row if t.row is not None else amb
    if t.flavor == HandlerFlavor.DEEP:
        resume: Term = Lam(y, c.res_type, Handle(t.flavor, around, h, t.row))
    elif t.flavor == HandlerFlavor.ABS:
        resume = Mod(Absolute(e), Lam(y, c.res_type, Handle(t.flavor, around, h, t.row)))
    elif t.flavor == HandlerFlavor.SHALLOW:
        resume = Mod(Relative((), d), Lam(y, c.res_type, around))
    else:
        resume = Mod(Absolute(ext_plus(d, e)), Lam(y, c.res_type, around))
    body = subst_term(c.body, c.param, op.arg)
    return subst_term(body, c.resume, resume)


def _ret(t: Handle, value: Term, amb: Row) -> Term:
    h = t.handler
    d = _handler_ext(h)
    if t.flavor.absolute:
        e = t.row if t.row is not None else amb
        boxed: Term = Mod(Absolute(ext_plus(d, e)), value)
    else:
        boxed = Mod(Relative((), d), value)
    return subst_term(h.ret_body, h.ret_var, boxed)


def _append(left: Term, right: Term) -> Term:
    match left:
        case Nil():
            return right
        case Cons(head, tail):
            return Cons(head, BinOp("++", tail, right))
        case Fix():
            return BinOp("++", unfold(left), right)
    raise StuckError(f"++ applied to a non-list: {pretty_term(left)}")


def _arith(op: str, left: Term, right: Term) -> Term:
    if isinstance(left, Fix):
        return BinOp(op, unfold(left), right)
    if isinstance(right, Fix):
        return BinOp(op, left, unfold(right))
    if not isinstance(left, IntLit) or not isinstance(right, IntLit):
        raise StuckError(f"{op} applied to non-integers")
    a, b = left.value, right.value
    if op == "+":
        return IntLit(a + b)
    if op == "-":
        return IntLit(a - b)
    if op == "*":
        return IntLit(a * b)
    if op == "==":
        return BoolLit(a == b)
    if op == "<":
        return BoolLit(a < b)
    if op == "<=":
        return BoolLit(a <= b)
    raise StuckError(f"unknown operator {op}")


def _dec(t: Term, amb: Row) -> _Dec:
    match t:
        case UnitVal() | IntLit() | BoolLit() | StrLit() | Var() | Lam() | TyLam() | Nil() | Fix():
            return _VAL
        case App(fn, arg):
            r = _dec(fn, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: App(h, arg))
            r = _dec(arg, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: App(fn, h))
            if isinstance(fn, Fix):
                return _Step(App(unfold(fn), arg), ())
            if isinstance(fn, Lam):
                return _Step(subst_term(fn.body, fn.param, arg), ())
            raise StuckError(f"applying a non-function: {pretty_term(fn)}")
        case TyApp(fn, targ):
            r = _dec(fn, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: TyApp(h, targ))
            if isinstance(fn, Fix):
                return _Step(TyApp(unfold(fn), targ), ())
            if isinstance(fn, TyLam):
                return _Step(subst_type_in_term(fn.body, fn.var, targ), ())
            raise StuckError("type-applying a non-polymorphic value")
        case Mod(m, body):
            r = _dec(body, act(m, amb))
            if r is not _VAL:
                return _wrap(r, lambda h: Mod(m, h))
            return _VAL
        case Letmod(outer, inner, binders, var, subject, body):
            r = _dec(subject, act(outer, amb))
            if r is not _VAL:
                return _wrap(
                    r, lambda h: Letmod(outer, inner, binders, var, h, body)
                )
            if isinstance(subject, Fix):
                return _Step(
                    Letmod(outer, inner, binders, var, unfold(subject), body), ()
                )
            if not isinstance(subject, Mod):
                raise StuckError("unboxing a non-boxed value")
            u: Term = subject.body
            for v, k in reversed(binders):
                u = TyLam(v, k, u)
            return _Step(subst_term(body, var, u), ())
        case Do(label, arg):
            r = _dec(arg, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Do(label, h))
            return _Op(label, arg, ())
        case Mask(ls, body):
            r = _dec(body, row_minus(amb, ls))
            if r is not _VAL:
                return _wrap(r, lambda h: Mask(ls, h), mask=ls)
            return _Step(Mod(Relative(ls), body), ())
        case Handle(flavor, body, handler, row_ann):
            d = _handler_ext(handler)
            if flavor.absolute:
                inner = ext_plus(d, row_ann if row_ann is not None else amb)
            else:
                inner = ext_plus(d, amb)
            r = _dec(body, inner)
            if isinstance(r, _Op) and handler.clause_for(r.label) is not None \
                    and _shift(r.label, r.frames) == 0:
                return _Step(_fire(t, r, amb), ())
            if r is not _VAL:
                dom = frozenset(handler.labels)
                return _wrap(
                    r, lambda h: Handle(flavor, h, handler, row_ann), dom=dom
                )
            return _Step(_ret(t, body, amb), ())
        case Pair(left, right):
            r = _dec(left, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Pair(h, right))
            r = _dec(right, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Pair(left, h))
            return _VAL
        case Cons(head, tail):
            r = _dec(head, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Cons(h, tail))
            r = _dec(tail, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Cons(head, h))
            return _VAL
        case Inl(body, ann):
            r = _dec(body, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Inl(h, ann))
            return _VAL
        case Inr(body, ann):
            r = _dec(body, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Inr(h, ann))
            return _VAL
        case Fold(ctor, body):
            r = _dec(body, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: Fold(ctor, h))
            return _VAL
        case CaseProd(m, subject, x, y, body):
            r = _dec(subject, act(m, amb))
            if r is not _VAL:
                return _wrap(r, lambda h: CaseProd(m, h, x, y, body))
            if isinstance(subject, Fix):
                return _Step(CaseProd(m, unfold(subject), x, y, body), ())
            if not isinstance(subject, Pair):
                raise StuckError("pair case on a non-pair")
            return _Step(
                subst_term(subst_term(body, x, subject.left), y, subject.right),
                (),
            )
        case CaseSum(m, subject, x, bl, y, br):
            r = _dec(subject, act(m, amb))
            if r is not _VAL:
                return _wrap(r, lambda h: CaseSum(m, h, x, bl, y, br))
            if isinstance(subject, Fix):
                return _Step(CaseSum(m, unfold(subject), x, bl, y, br), ())
            if isinstance(subject, Inl):
                return _Step(subst_term(bl, x, subject.body), ())
            if isinstance(subject, Inr):
                return _Step(subst_term(br, y, subject.body), ())
            raise StuckError("sum case on a non-injection")
        case CaseList(m, subject, nil_body, hd, tl, cons_body):
            r = _dec(subject, act(m, amb))
            if r is not _VAL:
                return _wrap(
                    r, lambda h: CaseList(m, h, nil_body, hd, tl, cons_body)
                )
            if isinstance(subject, Fix):
                return _Step(
                    CaseList(m, unfold(subject), nil_body, hd, tl, cons_body), ()
                )
            if isinstance(subject, Nil):
                return _Step(nil_body, ())
            if isinstance(subject, Cons):
                out = subst_term(cons_body, hd, subject.head)
                return _Step(subst_term(out, tl, subject.tail), ())
            raise StuckError("list case on a non-list")
        case CaseData(m, subject, ctor, var, body):
            r = _dec(subject, act(m, amb))
            if r is not _VAL:
                return _wrap(r, lambda h: CaseData(m, h, ctor, var, body))
            if isinstance(subject, Fix):
                return _Step(CaseData(m, unfold(subject), ctor, var, body), ())
            if not isinstance(subject, Fold):
                raise StuckError("data case on a non-constructor")
            return _Step(subst_term(body, var, subject.body), ())
        case If(cond, then_branch, else_branch):
            r = _dec(cond, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: If(h, then_branch, else_branch))
            if isinstance(cond, Fix):
                return _Step(If(unfold(cond), then_branch, else_branch), ())
            if not isinstance(cond, BoolLit):
                raise StuckError("if on a non-boolean")
            return _Step(then_branch if cond.value else else_branch, ())
        case BinOp(op, left, right):
            r = _dec(left, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: BinOp(op, h, right))
            r = _dec(right, amb)
            if r is not _VAL:
                return _wrap(r, lambda h: BinOp(op, left, h))
            if op == "++":
                return _Step(_append(left, right), ())
            return _Step(_arith(op, left, right), ())
    raise StuckError(f"cannot evaluate {t!r}")


def step(t: Term, amb: Row = EMPTY_ROW) -> Optional[Term]:
    """One reduction step, or None when `t` is in normal form."""
    r = _dec(t, amb)
    if r is _VAL or isinstance(r, _Op):
        return None
    return _plug(r.term, r.frames)


def evaluate(t: Term, amb: Row = EMPTY_ROW, fuel: int = 10**6) -> Outcome:
    while fuel > 0:
        r = _dec(t, amb)
        if r is _VAL:
            return Value(t)
        if isinstance(r, _Op):
            return OperationStuck(r.label, r.arg, _shift(r.label, r.frames))
        t = _plug(r.term, r.frames)
        fuel -= 1
    return OutOfFuel(t)
