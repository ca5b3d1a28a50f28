"""Effect-row and modality algebra.

Implements row normalization and equivalence, sub-effecting, the row
operations (extension, subtraction, mask meet), modality action and
composition, the modality transformation relation, right residuals, and the
partial joins used when merging branch types.

All functions are pure; rows and modalities are the immutable values from
`syntax`.
"""

from __future__ import annotations

from collections import Counter
from typing import Optional, Union

from .syntax import (
    ABSENT,
    Absent,
    Absolute,
    Arrow,
    Box,
    Ext,
    Forall,
    Kind,
    Labels,
    ListType,
    Lock,
    Modality,
    NamedType,
    OpSig,
    Presence,
    Product,
    Relative,
    Row,
    RowVar,
    Sum,
    TyVar,
    Type,
    TypeArg,
    fresh_name,
    labels,
)
from . import syntax

# ---------------------------------------------------------------------------
# Buckets and normal forms


def _buckets(entries: Ext) -> dict[str, list[Presence]]:
    out: dict[str, list[Presence]] = {}
    for label, p in entries:
        out.setdefault(label, []).append(p)
    return out


def _from_buckets(buckets: dict[str, list[Presence]]) -> Ext:
    out: list[tuple[str, Presence]] = []
    for label in sorted(buckets):
        out.extend((label, p) for p in buckets[label])
    return tuple(out)


def normalize(r: Row) -> Row:
    """Canonical form: per-label order kept, labels sorted, and (for closed
    rows only) trailing absent entries dropped per label."""
    buckets = _buckets(r.entries)
    tail = r.tail
    if tail is None:
        for label in list(buckets):
            seq = buckets[label]
            while seq and isinstance(seq[-1], Absent):
                seq.pop()
            if not seq:
                del buckets[label]
    else:
        tail = RowVar(tail.name, labels(*tail.mask))
    return Row(_from_buckets(buckets), tail)


def normalize_ext(d: Ext) -> Ext:
    return _from_buckets(_buckets(d))


# ---------------------------------------------------------------------------
# Equivalence


def labels_equiv(a: Labels, b: Labels) -> bool:
    return Counter(a) == Counter(b)


def presence_equiv(p: Presence, q: Presence) -> bool:
    if isinstance(p, Absent) and isinstance(q, Absent):
        return True
    if isinstance(p, OpSig) and isinstance(q, OpSig):
        return type_equiv(p.arg, q.arg) and type_equiv(p.res, q.res)
    return False


def _entries_equiv(a: Ext, b: Ext) -> bool:
    ba, bb = _buckets(a), _buckets(b)
    if set(ba) != set(bb):
        return False
    for label, sa in ba.items():
        sb = bb[label]
        if len(sa) != len(sb):
            return False
        if not all(presence_equiv(p, q) for p, q in zip(sa, sb)):
            return False
    return True


def ext_equiv(a: Ext, b: Ext) -> bool:
    return _entries_equiv(a, b)


def row_equiv(a: Row, b: Row) -> bool:
    na, nb = normalize(a), normalize(b)
    if (na.tail is None) != (nb.tail is None):
        return False
    if na.tail is not None and (
        na.tail.name != nb.tail.name or not labels_equiv(na.tail.mask, nb.tail.mask)
    ):
        return False
    return _entries_equiv(na.entries, nb.entries)


def mod_equiv(m: Modality, n: Modality) -> bool:
    if isinstance(m, Absolute) and isinstance(n, Absolute):
        return row_equiv(m.row, n.row)
    if isinstance(m, Relative) and isinstance(n, Relative):
        return labels_equiv(m.mask, n.mask) and ext_equiv(m.ext, n.ext)
    return False


def type_equiv(a: Type, b: Type) -> bool:
    match a, b:
        case (syntax.UnitType(), syntax.UnitType()):
            return True
        case (syntax.IntType(), syntax.IntType()):
            return True
        case (syntax.BoolType(), syntax.BoolType()):
            return True
        case (syntax.StringType(), syntax.StringType()):
            return True
        case (ListType(ea), ListType(eb)):
            return type_equiv(ea, eb)
        case (NamedType(na), NamedType(nb)):
            return na == nb
        case (TyVar(na), TyVar(nb)):
            return na == nb
        case (Arrow(da, ca), Arrow(db, cb)):
            return type_equiv(da, db) and type_equiv(ca, cb)
        case (Product(la, ra), Product(lb, rb)) | (Sum(la, ra), Sum(lb, rb)):
            return type_equiv(la, lb) and type_equiv(ra, rb)
        case (Box(ma, ba), Box(mb, bb)):
            return mod_equiv(ma, mb) and type_equiv(ba, bb)
        case (Forall(va, ka, ba), Forall(vb, kb, bb)):
            if ka != kb:
                return False
            if va == vb:
                return type_equiv(ba, bb)
            z = fresh_name(va, free_tyvars(ba) | free_tyvars(bb))
            arg: TypeArg
            arg = Row((), RowVar(z)) if ka == Kind.EFFECT else TyVar(z)
            return type_equiv(subst_type(ba, va, arg), subst_type(bb, vb, arg))
    return False


def type_arg_equiv(a: TypeArg, b: TypeArg) -> bool:
    if isinstance(a, Row) and isinstance(b, Row):
        return row_equiv(a, b)
    if isinstance(a, Row) or isinstance(b, Row):
        return False
    return type_equiv(a, b)


# ---------------------------------------------------------------------------
# Sub-effecting


def presence_sub(p: Presence, q: Presence) -> bool:
    return isinstance(p, Absent) or presence_equiv(p, q)


def subeffect(a: Row, b: Row) -> bool:
    na, nb = normalize(a), normalize(b)
    ba, bb = _buckets(na.entries), _buckets(nb.entries)
    if na.tail is not None:
        if nb.tail is None:
            return False
        if na.tail.name != nb.tail.name or not labels_equiv(
            na.tail.mask, nb.tail.mask
        ):
            return False
        if set(ba) != set(bb):
            return False
        for label, sa in ba.items():
            sb = bb[label]
            if len(sa) != len(sb):
                return False
            if not all(presence_sub(p, q) for p, q in zip(sa, sb)):
                return False
        return True
    # Closed left side: every entry must sit below a prefix of the matching
    # bucket on the right; the empty remainder is below anything.
    for label, sa in ba.items():
        sb = bb.get(label, [])
        if len(sa) > len(sb):
            return False
        if not all(presence_sub(p, q) for p, q in zip(sa, sb)):
            return False
    return True


def ext_sub(a: Ext, b: Ext) -> bool:
    ba, bb = _buckets(a), _buckets(b)
    if set(ba) != set(bb):
        return False
    for label, sa in ba.items():
        sb = bb[label]
        if len(sa) != len(sb):
            return False
        if not all(presence_sub(p, q) for p, q in zip(sa, sb)):
            return False
    return True


# ---------------------------------------------------------------------------
# Row operations


def row_minus(e: Row, l: Labels) -> Row:
    """Remove the leftmost occurrence of each masked label; leftovers land on
    the variable tail when there is one and vanish on closed rows."""
    remaining = Counter(l)
    kept: list[tuple[str, Presence]] = []
    for label, p in e.entries:
        if remaining[label] > 0:
            remaining[label] -= 1
        else:
            kept.append((label, p))
    tail = e.tail
    if tail is not None:
        leftover = tuple(remaining.elements())
        if leftover:
            tail = RowVar(tail.name, labels(*tail.mask, *leftover))
    return Row(tuple(kept), tail)


def ext_plus(d: Ext, e: Row) -> Row:
    return Row(tuple(d) + e.entries, e.tail)


def mask_meet(l: Labels, d: Ext) -> tuple[Labels, Ext]:
    """Cancel masked labels against extension entries; returns the leftover
    mask and the surviving extension."""
    remaining = Counter(l)
    kept: list[tuple[str, Presence]] = []
    for label, p in d:
        if remaining[label] > 0:
            remaining[label] -= 1
        else:
            kept.append((label, p))
    return labels(*remaining.elements()), tuple(kept)


# ---------------------------------------------------------------------------
# Modality action, composition, transformation


def act(m: Modality, f: Row) -> Row:
    if isinstance(m, Absolute):
        return m.row
    return ext_plus(m.ext, row_minus(f, m.mask))


def compose(m: Modality, n: Modality) -> Modality:
    """Left-to-right composition: act(compose(m, n), F) = act(n, act(m, F))."""
    if isinstance(n, Absolute):
        return n
    if isinstance(m, Absolute):
        return Absolute(act(n, m.row))
    leftover_mask, leftover_ext = mask_meet(n.mask, m.ext)
    return Relative(labels(*m.mask, *leftover_mask), tuple(n.ext) + leftover_ext)


def chain_compose(chain: tuple[Modality, ...]) -> Modality:
    out: Modality = syntax.IDENTITY
    for m in chain:
        out = compose(out, m)
    return out


def decompose_box(t: Type) -> tuple[tuple[Modality, ...], Type]:
    """Strip every top-level box, outermost first."""
    chain: list[Modality] = []
    while isinstance(t, Box):
        chain.append(t.modality)
        t = t.body
    return tuple(chain), t


def _f_entry(
    fbuckets: dict[str, list[Presence]], f_closed: bool, label: str, i: int
) -> Optional[Presence]:
    """The i-th entry of F's bucket; closed rows pad with Absent, variable
    tails are opaque (None)."""
    seq = fbuckets.get(label, [])
    if i < len(seq):
        return seq[i]
    return ABSENT if f_closed else None


def transform(m: Modality, n: Modality, f: Row) -> bool:
    """Decides the coercion m_F => n_F."""
    if isinstance(m, Absolute):
        return subeffect(m.row, act(n, f))
    if isinstance(n, Absolute):
        return False

    nf = normalize(f)
    fbuckets = _buckets(nf.entries)
    f_closed = nf.tail is None
    sbuckets = _buckets(m.ext)
    tbuckets = _buckets(n.ext)
    amask = Counter(m.mask)
    bmask = Counter(n.mask)

    all_labels = set(sbuckets) | set(tbuckets) | set(amask) | set(bmask)
    for label in all_labels:
        s = sbuckets.get(label, [])
        t = tbuckets.get(label, [])
        a = amask.get(label, 0)
        b = bmask.get(label, 0)
        if len(s) - a != len(t) - b:
            return False
        lo = max(0, a - len(s), b - len(t))
        hi = min(a, b)
        ok = False
        for shared in range(lo, hi + 1):
            c = len(s) - (a - shared)
            if not all(presence_sub(s[i], t[i]) for i in range(c)):
                continue
            good = True
            for i, p in enumerate(s[c:]):
                q = _f_entry(fbuckets, f_closed, label, shared + i)
                if q is None or not presence_equiv(p, q):
                    good = False
                    break
            if not good:
                continue
            for i, p in enumerate(t[c:]):
                q = _f_entry(fbuckets, f_closed, label, shared + i)
                if (
                    q is None
                    or not isinstance(q, OpSig)
                    or not presence_equiv(p, q)
                ):
                    good = False
                    break
            if good:
                ok = True
                break
        if not ok:
            return False
    return True


# ---------------------------------------------------------------------------
# Restriction, residuals


def to_labels(d: Ext) -> Labels:
    return labels(*(label for label, _ in d))


def present(d: Ext) -> bool:
    return all(isinstance(p, OpSig) for _, p in d)


def restrict(f: Row, l: Labels) -> Optional[Ext]:
    """F|_L: the first occurrences of the requested labels; fails when the
    row runs out of concrete entries for some label."""
    nf = normalize(f)
    buckets = _buckets(nf.entries)
    need = Counter(l)
    out: dict[str, list[Presence]] = {}
    for label in sorted(need):
        count = need[label]
        seq = buckets.get(label, [])
        if len(seq) < count:
            return None
        out[label] = seq[:count]
    return _from_buckets(out)


def _mask_diff(a: Labels, b: Labels) -> Labels:
    return labels(*(Counter(a) - Counter(b)).elements())


def residual(m: Modality, n: Modality, f: Row) -> Optional[Modality]:
    """Least z with m_F => compose(n, z)_F, indexed at act(n, f)."""
    if isinstance(m, Absolute):
        return Absolute(m.row)
    if isinstance(n, Absolute):
        return None
    extra = _mask_diff(n.mask, m.mask)  # labels n masks that m does not
    r = restrict(f, extra)
    if r is None or not present(r):
        return None
    mask = labels(*to_labels(n.ext), *_mask_diff(m.mask, n.mask))
    return Relative(mask, tuple(m.ext) + r)


# ---------------------------------------------------------------------------
# Joins and meets


def join_presence(p: Presence, q: Presence) -> Optional[Presence]:
    if isinstance(p, Absent):
        return q
    if isinstance(q, Absent):
        return p
    return p if presence_equiv(p, q) else None


def join_row(a: Row, b: Row) -> Optional[Row]:
    na, nb = normalize(a), normalize(b)
    if (na.tail is None) != (nb.tail is None):
        return None
    ba, bb = _buckets(na.entries), _buckets(nb.entries)
    if na.tail is not None:
        if na.tail.name != nb.tail.name or not labels_equiv(
            na.tail.mask, nb.tail.mask
        ):
            return None
        if set(ba) != set(bb) or any(
            len(ba[label]) != len(bb[label]) for label in ba
        ):
            return None
    out: dict[str, list[Presence]] = {}
    for label in set(ba) | set(bb):
        sa, sb = ba.get(label, []), bb.get(label, [])
        width = max(len(sa), len(sb))
        joined: list[Presence] = []
        for i in range(width):
            p = sa[i] if i < len(sa) else ABSENT
            q = sb[i] if i < len(sb) else ABSENT
            j = join_presence(p, q)
            if j is None:
                return None
            joined.append(j)
        out[label] = joined
    return normalize(Row(_from_buckets(out), na.tail))


def join_ext_row(d: Ext, e: Row) -> Optional[Ext]:
    """D v E: joins each extension entry against the first occurrences in E,
    keeping D's shape."""
    ne = normalize(e)
    buckets = _buckets(ne.entries)
    closed = ne.tail is None
    seen: Counter[str] = Counter()
    out: list[tuple[str, Presence]] = []
    for label, p in d:
        i = seen[label]
        seen[label] += 1
        q = _f_entry(buckets, closed, label, i)
        if q is None:
            return None
        j = join_presence(p, q)
        if j is None:
            return None
        out.append((label, j))
    return tuple(out)


def meet_ext(a: Ext, b: Ext) -> Optional[Ext]:
    """D ^ D': intersection of shapes with joined presences."""
    bb = _buckets(b)
    seen: Counter[str] = Counter()
    out: list[tuple[str, Presence]] = []
    for label, p in a:
        i = seen[label]
        seen[label] += 1
        sb = bb.get(label, [])
        if i >= len(sb):
            continue
        j = join_presence(p, sb[i])
        if j is None:
            return None
        out.append((label, j))
    return tuple(out)


def _mask_intersection(a: Labels, b: Labels) -> Labels:
    return labels(*(Counter(a) & Counter(b)).elements())


def join_modality(m: Modality, n: Modality, f: Row) -> Optional[Modality]:
    if isinstance(m, Absolute) and isinstance(n, Absolute):
        jr = join_row(m.row, n.row)
        return None if jr is None else Absolute(jr)
    if isinstance(m, Absolute) and isinstance(n, Relative):
        return _join_abs_rel(m, n, f)
    if isinstance(m, Relative) and isinstance(n, Absolute):
        return _join_abs_rel(n, m, f)
    assert isinstance(m, Relative) and isinstance(n, Relative)
    de = meet_ext(m.ext, n.ext)
    if de is None:
        return None
    cand = Relative(_mask_intersection(m.mask, n.mask), de)
    if transform(m, cand, f) and transform(n, cand, f):
        return cand
    return None


def _join_abs_rel(m: Absolute, n: Relative, f: Row) -> Optional[Modality]:
    de = join_ext_row(n.ext, m.row)
    if de is None:
        return None
    cand = Relative(n.mask, de)
    if subeffect(m.row, act(cand, f)):
        return cand
    return None


# ---------------------------------------------------------------------------
# Locks


def locks_of(entries: tuple) -> Modality:
    out: Modality = syntax.IDENTITY
    for e in entries:
        if isinstance(e, Lock):
            out = compose(out, e.modality)
    return out


# ---------------------------------------------------------------------------
# Free type variables and substitution


def free_tyvars(t: Union[Type, Row, Modality, Presence]) -> frozenset[str]:
    match t:
        case TyVar(name):
            return frozenset({name})
        case ListType(elem):
            return free_tyvars(elem)
        case Arrow(dom, cod):
            return free_tyvars(dom) | free_tyvars(cod)
        case Product(left, right) | Sum(left, right):
            return free_tyvars(left) | free_tyvars(right)
        case Box(modality, body):
            return free_tyvars(modality) | free_tyvars(body)
        case Forall(var, _, body):
            return free_tyvars(body) - {var}
        case Row(entries, tail):
            out = frozenset()
            for _, p in entries:
                out |= free_tyvars(p)
            if tail is not None:
                out |= {tail.name}
            return out
        case Absolute(r):
            return free_tyvars(r)
        case Relative(_, d):
            out = frozenset()
            for _, p in d:
                out |= free_tyvars(p)
            return out
        case OpSig(arg, res):
            return free_tyvars(arg) | free_tyvars(res)
        case _:
            return frozenset()


def subst_presence(p: Presence, name: str, arg: TypeArg) -> Presence:
    if isinstance(p, OpSig):
        return OpSig(subst_type(p.arg, name, arg), subst_type(p.res, name, arg))
    return p


def subst_ext(d: Ext, name: str, arg: TypeArg) -> Ext:
    return tuple((label, subst_presence(p, name, arg)) for label, p in d)


def subst_row(r: Row, name: str, arg: TypeArg) -> Row:
    entries = subst_ext(r.entries, name, arg)
    tail = r.tail
    if tail is not None and tail.name == name:
        if not isinstance(arg, Row):
            raise ValueError("effect variable instantiated with a non-row")
        spliced = row_minus(arg, tail.mask)
        return Row(entries + spliced.entries, spliced.tail)
    return Row(entries, tail)


def subst_modality(m: Modality, name: str, arg: TypeArg) -> Modality:
    if isinstance(m, Absolute):
        return Absolute(subst_row(m.row, name, arg))
    return Relative(m.mask, subst_ext(m.ext, name, arg))


def subst_type(t: Type, name: str, arg: TypeArg) -> Type:
    match t:
        case TyVar(n):
            if n != name:
                return t
            if isinstance(arg, Row):
                raise ValueError("type variable instantiated with a row")
            return arg
        case ListType(elem):
            return ListType(subst_type(elem, name, arg))
        case Arrow(dom, cod):
            return Arrow(subst_type(dom, name, arg), subst_type(cod, name, arg))
        case Product(left, right):
            return Product(subst_type(left, name, arg), subst_type(right, name, arg))
        case Sum(left, right):
            return Sum(subst_type(left, name, arg), subst_type(right, name, arg))
        case Box(modality, body):
            return Box(subst_modality(modality, name, arg), subst_type(body, name, arg))
        case Forall(var, kind, body):
            if var == name:
                return t
            if var in free_tyvars(arg):
                z = fresh_name(var, free_tyvars(arg) | free_tyvars(body))
                zarg: TypeArg = (
                    Row((), RowVar(z)) if kind == Kind.EFFECT else TyVar(z)
                )
                body = subst_type(body, var, zarg)
                var = z
            return Forall(var, kind, subst_type(body, name, arg))
        case _:
            return t


def subst_type_arg(a: TypeArg, name: str, arg: TypeArg) -> TypeArg:
    if isinstance(a, Row):
        return subst_row(a, name, arg)
    # An effect variable used as a whole argument reads like a type variable;
    # instantiating it with a row yields the row itself.
    if isinstance(a, TyVar) and a.name == name and isinstance(arg, Row):
        return arg
    return subst_type(a, name, arg)


def subst_type_in_term(t: syntax.Term, name: str, arg: TypeArg) -> syntax.Term:
    """Substitute a type or row for a type variable throughout a term."""

    def go_ty(ty: Optional[Type]) -> Optional[Type]:
        return None if ty is None else subst_type(ty, name, arg)

    def go(t: syntax.Term) -> syntax.Term:
        match t:
            case syntax.Lam(param, pt, body):
                return syntax.Lam(param, go_ty(pt), go(body))
            case syntax.App(fn, a):
                return syntax.App(go(fn), go(a))
            case syntax.TyLam(var, kind, body):
                if var == name:
                    return t
                if var in free_tyvars(arg):
                    z = fresh_name(var, free_tyvars(arg))
                    zarg: TypeArg = (
                        Row((), RowVar(z)) if kind == Kind.EFFECT else TyVar(z)
                    )
                    body = subst_type_in_term(body, var, zarg)
                    var = z
                return syntax.TyLam(var, kind, go(body))
            case syntax.TyApp(fn, a):
                return syntax.TyApp(go(fn), subst_type_arg(a, name, arg))
            case syntax.Mod(m, body):
                return syntax.Mod(subst_modality(m, name, arg), go(body))
            case syntax.Letmod(outer, inner, binders, var, subject, body):
                subject = go(subject)
                if any(v == name for v, _ in binders):
                    return syntax.Letmod(
                        subst_modality(outer, name, arg),
                        subst_modality(inner, name, arg),
                        binders,
                        var,
                        subject,
                        body,
                    )
                return syntax.Letmod(
                    subst_modality(outer, name, arg),
                    subst_modality(inner, name, arg),
                    binders,
                    var,
                    subject,
                    go(body),
                )
            case syntax.Do(label, a):
                return syntax.Do(label, go(a))
            case syntax.Mask(ls, body):
                return syntax.Mask(ls, go(body))
            case syntax.Handle(flavor, body, handler, ann):
                clauses = tuple(
                    syntax.OpClause(
                        c.label,
                        subst_type(c.arg_type, name, arg),
                        subst_type(c.res_type, name, arg),
                        c.param,
                        c.resume,
                        go(c.body),
                    )
                    for c in handler.clauses
                )
                nann = None if ann is None else subst_row(ann, name, arg)
                return syntax.Handle(
                    flavor,
                    go(body),
                    syntax.Handler(handler.ret_var, go(handler.ret_body), clauses),
                    nann,
                )
            case syntax.Pair(l, r):
                return syntax.Pair(go(l), go(r))
            case syntax.Inl(body, ann):
                return syntax.Inl(go(body), go_ty(ann))
            case syntax.Inr(body, ann):
                return syntax.Inr(go(body), go_ty(ann))
            case syntax.CaseProd(m, subject, x, y, body):
                return syntax.CaseProd(
                    subst_modality(m, name, arg), go(subject), x, y, go(body)
                )
            case syntax.CaseSum(m, subject, x, bl, y, br):
                return syntax.CaseSum(
                    subst_modality(m, name, arg), go(subject), x, go(bl), y, go(br)
                )
            case syntax.Nil(ann):
                return syntax.Nil(go_ty(ann))
            case syntax.Cons(h, tl):
                return syntax.Cons(go(h), go(tl))
            case syntax.CaseList(m, subject, nil_body, h, r, cons_body):
                return syntax.CaseList(
                    subst_modality(m, name, arg),
                    go(subject),
                    go(nil_body),
                    h,
                    r,
                    go(cons_body),
                )
            case syntax.Fold(ctor, body):
                return syntax.Fold(ctor, go(body))
            case syntax.CaseData(m, subject, ctor, var, body):
                return syntax.CaseData(
                    subst_modality(m, name, arg), go(subject), ctor, var, go(body)
                )
            case syntax.If(c, a2, b2):
                return syntax.If(go(c), go(a2), go(b2))
            case syntax.BinOp(op, l, r):
                return syntax.BinOp(op, go(l), go(r))
            case syntax.Fix(n, ty, body):
                return syntax.Fix(n, subst_type(ty, name, arg), go(body))
            case _:
                return t

    return go(t)
