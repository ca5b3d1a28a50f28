"""Surface language: programs, bidirectional checking, elaboration.

A program is a sequence of effect aliases, data declarations, signatures,
and equations.  Types stay core types; the surface adds implicit boxing
and unboxing.  Checking is bidirectional and every accepted term
elaborates to a core term that re-checks against the announced type, so
the core checker is the final authority on what the surface accepts.

Variables elaborate by residuation: a variable bound under modality mu and
used behind locks nu is re-exported boxed under the least modality that
still reaches it, or rejected when there is none.  Binders introduced at
plain types are immediately rebound through a chain of unboxings so that
later uses see the guarded payload; top-level names and recursive binders
stay opaque and elaborate to bare core variables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

from . import syntax
from .algebra import (
    act,
    chain_compose,
    compose,
    decompose_box,
    ext_plus,
    join_modality,
    locks_of,
    normalize,
    residual,
    subst_ext,
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
    Span,
)
from .parse import ParseError, Parser, RESERVED, Token, tokenize
from .syntax import (
    Absolute,
    App,
    Arrow,
    BOOL,
    BinOp,
    BoolLit,
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
    Ext,
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
    Modality,
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
    Term,
    TyApp,
    TyBind,
    TyLam,
    TyVar,
    Type,
    UNIT,
    UNITV,
    Var,
    VarBind,
    fresh_name,
    free_term_vars,
    is_value,
    labels,
    pretty_modality,
    pretty_row_or_dot,
    pretty_type,
    subst_term,
)
from .typecheck import (
    DataEnv,
    check_modality,
    check_presence,
    check_type_arg,
    kind_of,
)

Pos = tuple[int, int]


# ---------------------------------------------------------------------------
# Surface terms


@dataclass(frozen=True)
class SVar:
    name: str
    pos: Pos


@dataclass(frozen=True)
class SUnit:
    pos: Pos


@dataclass(frozen=True)
class SInt:
    value: int
    pos: Pos


@dataclass(frozen=True)
class SBool:
    value: bool
    pos: Pos


@dataclass(frozen=True)
class SStr:
    value: str
    pos: Pos


@dataclass(frozen=True)
class LVar:
    name: str


@dataclass(frozen=True)
class LWild:
    pass


@dataclass(frozen=True)
class LUnit:
    pass


@dataclass(frozen=True)
class LTy:
    """A `{a}` binder: abstracts the type variable named by the target."""

    name: str


LamParam = Union[LVar, LWild, LUnit, LTy]


@dataclass(frozen=True)
class SLam:
    params: tuple[LamParam, ...]
    body: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SApp:
    fn: "STerm"
    arg: "STerm"
    pos: Pos


@dataclass(frozen=True)
class STyApp:
    fn: "STerm"
    arg: syntax.TypeArg
    pos: Pos


@dataclass(frozen=True)
class SAnnot:
    term: "STerm"
    type: Type
    pos: Pos


@dataclass(frozen=True)
class SSeq:
    first: "STerm"
    second: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SIf:
    cond: "STerm"
    then_branch: "STerm"
    else_branch: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SDo:
    label: str
    arg: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SMask:
    labels: tuple[str, ...]
    body: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SPair:
    left: "STerm"
    right: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SInl:
    body: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SInr:
    body: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SNil:
    pos: Pos


@dataclass(frozen=True)
class SCons:
    head: "STerm"
    tail: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SList:
    items: tuple["STerm", ...]
    pos: Pos


@dataclass(frozen=True)
class SCtor:
    name: str
    arg: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SBin:
    op: str
    left: "STerm"
    right: "STerm"
    pos: Pos


# -- patterns ---------------------------------------------------------------


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PWild:
    pass


@dataclass(frozen=True)
class PUnit:
    pass


@dataclass(frozen=True)
class PPair:
    left: "Pattern"
    right: "Pattern"


@dataclass(frozen=True)
class PNil:
    pass


@dataclass(frozen=True)
class PCons:
    head: "Pattern"
    tail: "Pattern"


@dataclass(frozen=True)
class PInl:
    body: "Pattern"


@dataclass(frozen=True)
class PInr:
    body: "Pattern"


@dataclass(frozen=True)
class PCtor:
    name: str
    body: "Pattern"


Pattern = Union[PVar, PWild, PUnit, PPair, PNil, PCons, PInl, PInr, PCtor]


@dataclass(frozen=True)
class SCase:
    subject: "STerm"
    arms: tuple[tuple[Pattern, "STerm"], ...]
    pos: Pos


@dataclass(frozen=True)
class SOp:
    """An operation clause `(label : A >> B) p r ~> body`."""

    label: str
    arg_type: Type
    res_type: Type
    param: Pattern
    resume: str  # "_" for an unused continuation
    body: "STerm"
    pos: Pos


@dataclass(frozen=True)
class SHandle:
    body: "STerm"
    ret: tuple[Pattern, "STerm"]
    clauses: tuple[SOp, ...]
    pos: Pos


STerm = Union[
    SVar, SUnit, SInt, SBool, SStr, SLam, SApp, STyApp, SAnnot, SSeq, SIf,
    SDo, SMask, SPair, SInl, SInr, SNil, SCons, SList, SCtor, SBin, SCase,
    SHandle,
]


def is_value_term(t: STerm) -> bool:
    match t:
        case SVar() | SUnit() | SInt() | SBool() | SStr() | SLam() | SNil():
            return True
        case SPair(left, right) | SCons(left, right):
            return is_value_term(left) and is_value_term(right)
        case SInl(body) | SInr(body) | SCtor(_, body) | SAnnot(body, _):
            return is_value_term(body)
        case SList(items):
            return all(is_value_term(i) for i in items)
        case STyApp(fn, _):
            return is_value_term(fn)
        case _:
            return False


# ---------------------------------------------------------------------------
# Programs


@dataclass(frozen=True)
class EffAlias:
    name: str
    params: tuple[str, ...]
    entries: Ext


EqParam = Union[LTy, Pattern]


@dataclass
class Definition:
    name: str
    clauses: list[tuple[tuple[EqParam, ...], STerm]]
    signature: Optional[Type] = None
    sig_text: Optional[str] = None
    pos: Pos = (0, 0)


@dataclass
class Program:
    aliases: dict[str, EffAlias]
    data_env: DataEnv
    ctors: frozenset[str]
    defs: list[Definition]


class TopBind(VarBind):
    """A top-level or recursive binder; uses elaborate to a bare variable."""


@dataclass(frozen=True)
class CheckedDef:
    name: str
    type: Type
    sig_text: Optional[str]
    core: Term
    pos: Pos


@dataclass
class CheckedProgram:
    defs: list[CheckedDef]
    data_env: DataEnv
    aliases: dict[str, "EffAlias"]

    def named(self, name: str) -> CheckedDef:
        for d in self.defs:
            if d.name == name:
                return d
        raise KeyError(name)

    def core_context(self) -> Context:
        """The context under which each definition's core term re-checks."""
        entries = tuple(
            VarBind(d.name, d.type, IDENTITY, EMPTY_ROW) for d in self.defs
        )
        return Context(entries)

    def effect_row(self, name: str, *args: syntax.TypeArg) -> Row:
        alias = self.aliases[name]
        entries = alias.entries
        for param, arg in zip(alias.params, args):
            entries = subst_ext(entries, param, arg)
        return Row(entries, None)

    def context_before(self, name: str) -> Context:
        entries = []
        for d in self.defs:
            if d.name == name:
                break
            entries.append(VarBind(d.name, d.type, IDENTITY, EMPTY_ROW))
        return Context(tuple(entries))

    def link(self, name: str) -> Term:
        """The definition's core term with earlier definitions substituted
        in, closed and ready to evaluate."""
        env: dict[str, Term] = {}
        for d in self.defs:
            t = d.core
            for n, v in env.items():
                if n in free_term_vars(t):
                    if not is_value(v):
                        raise CheckError(
                            ESCAPE_VIOLATION,
                            f"{n} is a computation and cannot be linked into "
                            f"{d.name}",
                        )
                    t = subst_term(t, n, v)
            env[d.name] = t
            if d.name == name:
                return t
        raise CheckError(UNBOUND_VAR, f"no definition named {name}")


# ---------------------------------------------------------------------------
# Parsing

# Keywords beyond the shared reserved set; `mask` stays contextual so it
# can still name a variable.
_SURFACE_KEYWORDS = frozenset({"case"})

_CMP_OPS = ("==", "<", "<=")
_ADD_OPS = ("+", "-", "++")


class SurfaceParser(Parser):
    RESERVED_ALL = RESERVED | _SURFACE_KEYWORDS

    def __init__(
        self,
        toks: list[Token],
        ctors: frozenset[str] = frozenset(),
        aliases: Optional[dict[str, EffAlias]] = None,
    ):
        super().__init__(toks, ctors=ctors, alias_hook=SurfaceParser._splice)
        self.aliases = aliases or {}
        self.current_alias: Optional[str] = None

    # -- effect aliases -----------------------------------------------------

    def _splice(self, name: str) -> Ext:
        if name == self.current_alias:
            raise self.fail(
                f"effect alias {name} refers to itself; recursive aliases "
                "are not supported"
            )
        alias = self.aliases.get(name)
        if alias is None:
            raise self.fail(f"unknown effect {name}")
        args = [self.atom_type() for _ in alias.params]
        entries = alias.entries
        for param, arg in zip(alias.params, args):
            entries = subst_ext(entries, param, arg)
        return entries

    # -- helpers ------------------------------------------------------------

    def sident(self, what: str = "name") -> str:
        t = self.peek()
        name = self.ident(what)
        if name.startswith("_") and name != "_":
            raise ParseError(
                "names starting with _ are reserved", t.line, t.col
            )
        return name

    def here(self) -> Pos:
        t = self.peek()
        return (t.line, t.col)

    def _starts_atom(self) -> bool:
        t = self.peek()
        if t.kind in ("int", "str"):
            return True
        if t.kind == "punct":
            return t.text in ("(", "[")
        if t.kind == "ident":
            if t.text in ("true", "false", "nil"):
                return True
            return t.text not in self.RESERVED_ALL
        return False

    # -- terms --------------------------------------------------------------

    def sterm(self) -> STerm:
        pos = self.here()
        t = self.control()
        if self.eat(";"):
            return SSeq(t, self.sterm(), pos)
        return t

    def control(self) -> STerm:
        t = self.peek()
        if t.text == "fun":
            return self.sfun()
        if t.text == "if":
            return self.sif()
        if t.text == "handle":
            return self.shandle()
        if t.text == "case":
            return self.scase()
        return self.scmp()

    def scmp(self) -> STerm:
        pos = self.here()
        t = self.sadd()
        while self.peek().text in _CMP_OPS and self.peek().kind == "punct":
            op = self.next().text
            t = SBin(op, t, self.sadd(), pos)
        return t

    def sadd(self) -> STerm:
        pos = self.here()
        t = self.smul()
        while self.peek().text in _ADD_OPS and self.peek().kind == "punct":
            op = self.next().text
            t = SBin(op, t, self.smul(), pos)
        return t

    def smul(self) -> STerm:
        pos = self.here()
        t = self.sapp()
        while self.at("*"):
            self.next()
            t = SBin("*", t, self.sapp(), pos)
        return t

    def sapp(self) -> STerm:
        t = self.sprefix()
        while True:
            pos = self.here()
            if self.at("{"):
                self.next()
                arg = self.type_arg()
                self.expect("}")
                t = STyApp(t, arg, pos)
            elif self._starts_atom():
                t = SApp(t, self.satom(), pos)
            else:
                return t

    def sprefix(self) -> STerm:
        t = self.peek()
        pos = (t.line, t.col)
        if t.text == "do":
            self.next()
            label = self.sident("operation")
            return SDo(label, self.satom(), pos)
        if t.text == "cons":
            self.next()
            return SCons(self.satom(), self.satom(), pos)
        if t.text == "inl":
            self.next()
            return SInl(self.satom(), pos)
        if t.text == "inr":
            self.next()
            return SInr(self.satom(), pos)
        if t.text == "mask" and self.peek(1).text == "<":
            self.next()
            self.expect("<")
            ls = self.label_list((">",))
            self.expect(">")
            return SMask(ls, self.satom(), pos)
        if t.kind == "ident" and t.text in self.ctors:
            self.next()
            return SCtor(t.text, self.satom(), pos)
        return self.satom()

    def satom(self) -> STerm:
        t = self.peek()
        pos = (t.line, t.col)
        if self.eat("("):
            if self.eat(")"):
                return SUnit(pos)
            inner = self.sterm()
            if self.eat(","):
                right = self.sterm()
                self.expect(")")
                return SPair(inner, right, pos)
            if self.eat(":"):
                ty = self.type()
                self.expect(")")
                return SAnnot(inner, ty, pos)
            self.expect(")")
            return inner
        if self.eat("["):
            if self.eat("]"):
                return SList((), pos)
            items = [self.sterm()]
            while self.eat(","):
                items.append(self.sterm())
            self.expect("]")
            return SList(tuple(items), pos)
        if t.kind == "int":
            self.next()
            return SInt(int(t.text), pos)
        if t.text == "-" and self.peek(1).kind == "int":
            self.next()
            return SInt(-int(self.next().text), pos)
        if t.kind == "str":
            self.next()
            return SStr(t.text, pos)
        if t.text == "true" or t.text == "false":
            self.next()
            return SBool(t.text == "true", pos)
        if t.text == "nil":
            self.next()
            return SNil(pos)
        if t.kind == "ident" and t.text not in self.RESERVED_ALL:
            return SVar(self.sident(), pos)
        raise self.fail(f"expected a term, found {t.text!r}")

    def sfun(self) -> STerm:
        pos = self.here()
        self.expect("fun")
        params: list[LamParam] = []
        rewrites: list[tuple[str, Pattern]] = []
        while not self.at("->"):
            if self.at("{"):
                self.next()
                params.append(LTy(self.sident("type variable")))
                self.expect("}")
            elif self.peek().text == "_":
                self.next()
                params.append(LWild())
            elif self.at("("):
                p = self.paren_pattern()
                if isinstance(p, PUnit):
                    params.append(LUnit())
                elif isinstance(p, PVar):
                    params.append(LVar(p.name))
                else:
                    z = fresh_name("a")
                    params.append(LVar(z))
                    rewrites.append((z, p))
            else:
                params.append(LVar(self.sident("parameter")))
        self.expect("->")
        body = self.sterm()
        for z, p in reversed(rewrites):
            body = SCase(SVar(z, pos), ((p, body),), pos)
        if not params:
            raise ParseError("fun needs at least one parameter", *pos)
        return SLam(tuple(params), body, pos)

    def sif(self) -> STerm:
        pos = self.here()
        self.expect("if")
        cond = self.sterm()
        self.expect("then")
        then_b = self.sterm()
        else_b: STerm = SUnit(pos)
        if self.eat("else"):
            else_b = self.sterm()
        return SIf(cond, then_b, else_b, pos)

    def shandle(self) -> STerm:
        pos = self.here()
        self.expect("handle")
        body = self.sterm()
        self.expect("with")
        self.eat("|")
        ret: Optional[tuple[Pattern, STerm]] = None
        clauses: list[SOp] = []
        while True:
            cpos = self.here()
            if self.eat("return"):
                if ret is not None:
                    raise ParseError("duplicate return clause", *cpos)
                pat = self.clause_pattern()
                self.expect("~>")
                ret = (pat, self.sterm())
            else:
                self.expect("(")
                label = self.sident("operation")
                self.expect(":")
                arg_ty = self.type()
                self.expect(">>")
                res_ty = self.type()
                self.expect(")")
                param = self.clause_pattern()
                rt = self.peek()
                resume = "_" if self.eat("_") else self.sident("continuation")
                del rt
                self.expect("~>")
                clauses.append(
                    SOp(label, arg_ty, res_ty, param, resume, self.sterm(), cpos)
                )
            if not self.eat("|"):
                break
        if ret is None:
            raise ParseError("a handler needs a return clause", *pos)
        return SHandle(body, ret, tuple(clauses), pos)

    def clause_pattern(self) -> Pattern:
        """Clause parameters are variables, `_`, or `()`."""
        if self.at("("):
            self.next()
            self.expect(")")
            return PUnit()
        if self.peek().text == "_":
            self.next()
            return PWild()
        return PVar(self.sident("parameter"))

    def scase(self) -> STerm:
        pos = self.here()
        self.expect("case")
        subject = self.sterm()
        self.expect("of")
        self.eat("|")
        arms: list[tuple[Pattern, STerm]] = []
        while True:
            pat = self.pattern_app()
            self.expect("->")
            arms.append((pat, self.sterm()))
            if not self.eat("|"):
                break
        return SCase(subject, tuple(arms), pos)

    # -- patterns -----------------------------------------------------------

    def pattern_app(self) -> Pattern:
        t = self.peek()
        if t.text == "nil":
            self.next()
            return PNil()
        if t.text == "cons":
            self.next()
            return PCons(self.pattern_atom(), self.pattern_atom())
        if t.text == "inl":
            self.next()
            return PInl(self.pattern_atom())
        if t.text == "inr":
            self.next()
            return PInr(self.pattern_atom())
        if t.kind == "ident" and t.text in self.ctors:
            self.next()
            return PCtor(t.text, self.pattern_atom())
        return self.pattern_atom()

    def pattern_atom(self) -> Pattern:
        t = self.peek()
        if t.text == "(":
            return self.paren_pattern()
        if t.text == "nil":
            self.next()
            return PNil()
        if t.text == "_":
            self.next()
            return PWild()
        if t.kind == "ident" and t.text in self.ctors:
            raise self.fail(
                f"constructor pattern {t.text} needs parentheses"
            )
        if t.kind == "ident" and t.text not in self.RESERVED_ALL:
            return PVar(self.sident("pattern variable"))
        raise self.fail(f"expected a pattern, found {t.text!r}")

    def paren_pattern(self) -> Pattern:
        self.expect("(")
        if self.eat(")"):
            return PUnit()
        p = self.pattern_app()
        if self.eat(","):
            q = self.pattern_app()
            self.expect(")")
            return PPair(p, q)
        self.expect(")")
        return p

    def eq_params(self) -> tuple[EqParam, ...]:
        params: list[EqParam] = []
        while not self.at("="):
            if self.at("{"):
                self.next()
                params.append(LTy(self.sident("type variable")))
                self.expect("}")
            else:
                params.append(self.pattern_atom())
        return tuple(params)


def _split_items(toks: list[Token]) -> list[list[Token]]:
    """Top-level items end at the next token that starts a later line at
    the same or lesser indentation."""
    items = []
    n = len(toks) - 1  # drop the eof sentinel
    i = 0
    while i < n:
        start = toks[i]
        j = i + 1
        while j < n and not (
            toks[j].line > start.line and toks[j].col <= start.col
        ):
            j += 1
        items.append(toks[i:j])
        i = j
    return items


def _slice_source(lines: list[str], first: Token, last: Token) -> str:
    end = last.col - 1 + len(last.text)
    if first.line == last.line:
        s = lines[first.line - 1][first.col - 1 : end]
    else:
        parts = [lines[first.line - 1][first.col - 1 :]]
        parts.extend(lines[first.line : last.line - 1])
        parts.append(lines[last.line - 1][:end])
        s = " ".join(parts)
    return " ".join(s.split())


def parse_program(text: str) -> Program:
    lines = text.splitlines()
    aliases: dict[str, EffAlias] = {}
    data_env: DataEnv = {}
    ctors: set[str] = set()
    defs: list[Definition] = []
    index: dict[str, Definition] = {}
    sigs: dict[str, tuple[Type, str, Pos]] = {}

    def parser(item: list[Token]) -> SurfaceParser:
        tail = item[-1]
        eof = Token("eof", "", tail.line, tail.col + len(tail.text))
        return SurfaceParser(item + [eof], frozenset(ctors), aliases)

    for item in _split_items(tokenize(text)):
        head = item[0]
        p = parser(item)
        if head.text == "eff":
            p.expect("eff")
            t = p.peek()
            name = p.ident("effect name")
            if not name[0].isupper():
                raise ParseError(
                    "effect alias names are capitalized", t.line, t.col
                )
            if name in aliases:
                raise ParseError(f"duplicate effect {name}", t.line, t.col)
            params = []
            while not p.at("="):
                params.append(p.sident("parameter"))
            p.expect("=")
            p.current_alias = name
            entries = p.ext(("",))
            p.expect_eof()
            aliases[name] = EffAlias(name, tuple(params), entries)
        elif head.text == "data":
            p.expect("data")
            t = p.peek()
            name = p.ident("type name")
            if not name[0].isupper():
                raise ParseError(
                    "data type names are capitalized", t.line, t.col
                )
            if name in data_env:
                raise ParseError(f"duplicate data type {name}", t.line, t.col)
            p.expect("=")
            c = p.peek()
            ctor = p.sident("constructor")
            if ctor in ctors:
                raise ParseError(f"duplicate constructor {ctor}", c.line, c.col)
            payload = p.atom_type()
            p.expect_eof()
            data_env[name] = (ctor, payload)
            ctors.add(ctor)
        elif (
            head.kind == "ident"
            and len(item) >= 2
            and item[1].text == ":"
            and head.text not in p.RESERVED_ALL
        ):
            name = head.text
            p.next()
            p.next()
            ty = p.type()
            p.expect_eof()
            if name in sigs:
                raise ParseError(
                    f"duplicate signature for {name}", head.line, head.col
                )
            if name in index:
                raise ParseError(
                    f"the signature of {name} must precede its equations",
                    head.line,
                    head.col,
                )
            raw = _slice_source(lines, item[2], item[-1])
            sigs[name] = (ty, raw, (head.line, head.col))
        else:
            pos = (head.line, head.col)
            name = p.sident("definition")
            params = p.eq_params()
            p.expect("=")
            body = p.sterm()
            p.expect_eof()
            existing = index.get(name)
            if existing is None:
                d = Definition(name, [(params, body)], pos=pos)
                defs.append(d)
                index[name] = d
            else:
                if defs[-1] is not existing:
                    raise ParseError(
                        f"the clauses of {name} must be adjacent", *pos
                    )
                existing.clauses.append((params, body))

    for name, d in index.items():
        if name in sigs:
            d.signature, d.sig_text, _ = sigs.pop(name)
    for name, (_, _, pos) in sigs.items():
        raise ParseError(f"signature for {name} has no definition", *pos)
    return Program(aliases, data_env, frozenset(ctors), defs)


# ---------------------------------------------------------------------------
# Equations


def compile_definition(d: Definition) -> STerm:
    """One function per parameter column; a trailing constructor column
    across clauses becomes a case."""
    if len(d.clauses) == 1:
        params, body = d.clauses[0]
        if not params:
            return body
        return _lamify(params, body, d.pos)

    arity = len(d.clauses[0][0])
    for params, _ in d.clauses[1:]:
        if len(params) != arity:
            raise CheckError(
                ARITY_MISMATCH,
                f"the clauses of {d.name} disagree in arity",
                span=Span(*d.pos),
            )
    lam_params: list[LamParam] = []
    body: Optional[STerm] = None
    for i in range(arity):
        col = [params[i] for params, _ in d.clauses]
        if all(isinstance(c, LTy) for c in col):
            names = {c.name for c in col}
            if len(names) != 1:
                raise CheckError(
                    MODE_MISMATCH,
                    f"type parameter {i + 1} of {d.name} must have one name "
                    "across clauses",
                    span=Span(*d.pos),
                )
            lam_params.append(col[0])
        elif all(isinstance(c, PVar) for c in col):
            names = {c.name for c in col}
            if len(names) != 1:
                raise CheckError(
                    MODE_MISMATCH,
                    f"parameter {i + 1} of {d.name} must have one name "
                    "across clauses",
                    span=Span(*d.pos),
                )
            lam_params.append(LVar(col[0].name))
        else:
            if i != arity - 1:
                raise CheckError(
                    MODE_MISMATCH,
                    f"only the last parameter of {d.name} can be matched "
                    "against constructors",
                    span=Span(*d.pos),
                )
            z = fresh_name("s")
            arms = tuple(
                (params[i], cbody) for params, cbody in d.clauses
            )
            lam_params.append(LVar(z))
            body = SCase(SVar(z, d.pos), arms, d.pos)
    if body is None:
        raise CheckError(
            MODE_MISMATCH,
            f"the clauses of {d.name} are not told apart by any pattern",
            span=Span(*d.pos),
        )
    return SLam(tuple(lam_params), body, d.pos)


def _lamify(params: tuple[EqParam, ...], body: STerm, pos: Pos) -> STerm:
    out: list[LamParam] = []
    for p in reversed(params):
        if isinstance(p, LTy):
            out.append(p)
        elif isinstance(p, PVar):
            out.append(LVar(p.name))
        elif isinstance(p, PWild):
            out.append(LWild())
        elif isinstance(p, PUnit):
            out.append(LUnit())
        else:
            z = fresh_name("a")
            out.append(LVar(z))
            body = SCase(SVar(z, pos), ((p, body),), pos)
    return SLam(tuple(reversed(out)), body, pos)


# ---------------------------------------------------------------------------
# Bidirectional checking and elaboration


def _is_empty_absolute(m: Modality) -> bool:
    return isinstance(m, Absolute) and not m.row.entries and m.row.tail is None


class Elaborator:
    def __init__(self, data_env: Optional[DataEnv] = None):
        self.data = data_env or {}
        self.ctor_types = {
            ctor: (name, payload)
            for name, (ctor, payload) in self.data.items()
        }

    # -- error helpers ------------------------------------------------------

    def err(
        self,
        code: str,
        at: STerm,
        message: str,
        expected: Optional[str] = None,
        actual: Optional[str] = None,
    ) -> CheckError:
        return CheckError(code, message, Span(*at.pos), expected, actual)

    def _spanned(self, at: STerm, fn: Callable[[], None]) -> None:
        try:
            fn()
        except CheckError as e:
            if e.span is None:
                raise CheckError(
                    e.code, e.message, Span(*at.pos), e.expected, e.actual
                ) from None
            raise

    # -- core term builders -------------------------------------------------

    def _chain(
        self,
        name: str,
        first: Term,
        mus: tuple[Modality, ...],
        cont: Term,
        start: Modality = IDENTITY,
    ) -> Term:
        """letmod chains peeling `mus`, rebinding `name` at each layer."""
        outers = []
        cur = start
        for mu in mus:
            outers.append(cur)
            cur = compose(cur, mu)
        body = cont
        for i in range(len(mus) - 1, -1, -1):
            subject = first if i == 0 else Var(name)
            body = Letmod(outers[i], mus[i], (), name, subject, body)
        return body

    def unvar(
        self, name: str, ty: Type, body: Term, start: Modality = IDENTITY
    ) -> Term:
        """Rebind a binder of boxed type so the body sees its payload."""
        mus, _ = decompose_box(ty)
        if not mus or name not in free_term_vars(body):
            return body
        return self._chain(name, Var(name), mus, body, start)

    def unbox(
        self,
        term: Term,
        ty: Type,
        mus: tuple[Modality, ...],
        make: Callable[[str], Term],
    ) -> Term:
        """Unbox `term` down to its payload, bound for `make` to consume."""
        name = fresh_name("u")
        cont = make(name)
        if is_value(term):
            return self._chain(name, term, mus, cont)
        w = fresh_name("w")
        return App(Lam(w, ty, self._chain(name, Var(w), mus, cont)), term)

    def _rebox(self, mus: tuple[Modality, ...], core: Term) -> Term:
        for mu in reversed(mus):
            core = Mod(mu, core)
        return core

    def _shift(self, mus: tuple[Modality, ...], ty: Type) -> Type:
        for mu in reversed(mus):
            ty = Box(mu, ty)
        return ty

    def repack(
        self,
        m: Term,
        sty: Type,
        smus: tuple[Modality, ...],
        tmus: tuple[Modality, ...],
    ) -> Term:
        """Move a term between box spines once the transformation between
        their composites is known to hold."""
        if smus:
            return self.unbox(m, sty, smus, lambda n: self._rebox(tmus, Var(n)))
        if not tmus:
            return m
        # Rebox behind a beta redex: locks added by the new boxes must not
        # fall on the free variables of m.
        w = fresh_name("w")
        return App(Lam(w, sty, self._rebox(tmus, Var(w))), m)

    # -- coercion -----------------------------------------------------------

    def coerce(
        self, ctx: Context, amb: Row, m: Term, actual: Type, expected: Type,
        at: STerm,
    ) -> Term:
        if type_equiv(actual, expected):
            return m
        smus, g1 = decompose_box(actual)
        tmus, g2 = decompose_box(expected)
        ok = type_equiv(g1, g2)
        if ok and kind_of(ctx, g1) != Kind.ABS:
            ok = transform(chain_compose(smus), chain_compose(tmus), amb)
        if not ok:
            raise self.err(
                MODE_MISMATCH,
                at,
                "type mismatch",
                expected=pretty_type(expected),
                actual=pretty_type(actual),
            )
        return self.repack(m, actual, smus, tmus)

    def switch(
        self, ctx: Context, amb: Row, t: STerm, expected: Type
    ) -> Term:
        actual, m = self.infer(ctx, amb, t)
        return self.coerce(ctx, amb, m, actual, expected, t)

    def join_types(
        self, ctx: Context, amb: Row, a: Type, b: Type
    ) -> Optional[Type]:
        if type_equiv(a, b):
            return a
        amus, g1 = decompose_box(a)
        bmus, g2 = decompose_box(b)
        if not type_equiv(g1, g2):
            return None
        if kind_of(ctx, g1) == Kind.ABS:
            return g1
        j = join_modality(chain_compose(amus), chain_compose(bmus), amb)
        if j is None:
            return None
        return Box(j, g1)

    # -- checking mode ------------------------------------------------------

    def check(
        self, ctx: Context, amb: Row, t: STerm, expected: Type
    ) -> Term:
        match t:
            case SLam():
                if isinstance(expected, Box):
                    return self.mod_check(ctx, amb, t, expected)
                return self.lam_check(ctx, amb, t, expected)
            case SPair(left, right):
                if isinstance(expected, Box):
                    return self.mod_check(ctx, amb, t, expected)
                if isinstance(expected, Product):
                    return Pair(
                        self.check(ctx, amb, left, expected.left),
                        self.check(ctx, amb, right, expected.right),
                    )
                raise self.err(
                    MODE_MISMATCH, t, "a pair against a non-product type",
                    expected=pretty_type(expected),
                )
            case SInl(body):
                if isinstance(expected, Box):
                    return self.mod_check(ctx, amb, t, expected)
                if isinstance(expected, Sum):
                    return Inl(
                        self.check(ctx, amb, body, expected.left), expected
                    )
                raise self.err(
                    MODE_MISMATCH, t, "inl against a non-sum type",
                    expected=pretty_type(expected),
                )
            case SInr(body):
                if isinstance(expected, Box):
                    return self.mod_check(ctx, amb, t, expected)
                if isinstance(expected, Sum):
                    return Inr(
                        self.check(ctx, amb, body, expected.right), expected
                    )
                raise self.err(
                    MODE_MISMATCH, t, "inr against a non-sum type",
                    expected=pretty_type(expected),
                )
            case SNil():
                if isinstance(expected, Box):
                    return self.mod_check(ctx, amb, t, expected)
                if isinstance(expected, ListType):
                    return Nil(expected)
                raise self.err(
                    MODE_MISMATCH, t, "nil against a non-list type",
                    expected=pretty_type(expected),
                )
            case SList(items):
                if isinstance(expected, Box):
                    return self.mod_check(ctx, amb, t, expected)
                if isinstance(expected, ListType):
                    out: Term = Nil(expected)
                    for item in reversed(items):
                        out = Cons(
                            self.check(ctx, amb, item, expected.elem), out
                        )
                    return out
                raise self.err(
                    MODE_MISMATCH, t, "a list against a non-list type",
                    expected=pretty_type(expected),
                )
            case SCons(head, tail):
                if isinstance(expected, Box):
                    return self.mod_check(ctx, amb, t, expected)
                if isinstance(expected, ListType):
                    return Cons(
                        self.check(ctx, amb, head, expected.elem),
                        self.check(ctx, amb, tail, expected),
                    )
                raise self.err(
                    MODE_MISMATCH, t, "cons against a non-list type",
                    expected=pretty_type(expected),
                )
            case SCtor(name, _) if isinstance(expected, Box):
                return self.mod_check(ctx, amb, t, expected)
            case SIf(cond, a, b):
                return If(
                    self.check(ctx, amb, cond, BOOL),
                    self.check(ctx, amb, a, expected),
                    self.check(ctx, amb, b, expected),
                )
            case SSeq(first, second):
                fty, fm = self.infer(ctx, amb, first)
                sm = self.check(ctx, amb, second, expected)
                x = fresh_name("x", avoid=free_term_vars(sm))
                return App(Lam(x, fty, sm), fm)
            case SCase():
                _, m = self.case_term(ctx, amb, t, expected)
                return m
            case SHandle():
                return self.handle_check(ctx, amb, t, expected)
            case SMask():
                if (
                    isinstance(expected, Box)
                    and isinstance(expected.modality, Relative)
                    and not expected.modality.ext
                    and sorted(expected.modality.mask) == sorted(t.labels)
                ):
                    return self.mask_check(ctx, amb, t, expected)
                return self.fallthrough(ctx, amb, t, expected)
            case SAnnot(inner, ty):
                self._spanned(t, lambda: kind_of(ctx, ty))
                m = self.check(ctx, amb, inner, ty)
                return self.coerce(ctx, amb, m, ty, expected, t)
            case _:
                return self.fallthrough(ctx, amb, t, expected)

    def fallthrough(
        self, ctx: Context, amb: Row, t: STerm, expected: Type
    ) -> Term:
        # A computation meets an empty absolute box by running under it.
        if (
            isinstance(expected, Box)
            and _is_empty_absolute(expected.modality)
            and not is_value_term(t)
        ):
            return self.mod_check(ctx, amb, t, expected)
        return self.switch(ctx, amb, t, expected)

    def mod_check(
        self, ctx: Context, amb: Row, t: STerm, expected: Box
    ) -> Term:
        m = expected.modality
        self._spanned(t, lambda: check_modality(ctx, m))
        if not is_value_term(t) and not _is_empty_absolute(m):
            return self.switch(ctx, amb, t, expected)
        inner = act(m, amb)
        body = self.check(ctx.push(Lock(m, amb)), inner, t, expected.body)
        if not is_value(body):
            if _is_empty_absolute(m):
                return Mod(m, body)
            return self.switch(ctx, amb, t, expected)
        return Mod(m, body)

    def mask_check(
        self, ctx: Context, amb: Row, t: SMask, expected: Box
    ) -> Term:
        m = Relative(labels(*t.labels))
        bm = self.check(
            ctx.push(Lock(m, amb)), act(m, amb), t.body, expected.body
        )
        return Mask(m.mask, bm)

    def lam_check(
        self, ctx: Context, amb: Row, t: SLam, expected: Type
    ) -> Term:
        p, rest = t.params[0], t.params[1:]
        inner: STerm = SLam(rest, t.body, t.pos) if rest else t.body
        if isinstance(p, LTy):
            if not isinstance(expected, Forall):
                raise self.err(
                    MODE_MISMATCH, t,
                    "a type binder against a non-polymorphic type",
                    expected=pretty_type(expected),
                )
            ebody = expected.body
            if expected.var != p.name:
                ebody = subst_type(ebody, expected.var, TyVar(p.name))
            bm = self.check(
                ctx.push(TyBind(p.name, expected.kind)), amb, inner, ebody
            )
            if not is_value(bm):
                raise self.err(
                    ESCAPE_VIOLATION, t, "type abstraction over a computation"
                )
            return TyLam(p.name, expected.kind, bm)
        if not isinstance(expected, Arrow):
            raise self.err(
                MODE_MISMATCH, t, "a function against a non-function type",
                expected=pretty_type(expected),
            )
        if isinstance(p, LUnit) and not type_equiv(expected.dom, UNIT):
            raise self.err(
                MODE_MISMATCH, t, "a () parameter against a non-unit domain",
                expected=pretty_type(expected.dom),
            )
        name = p.name if isinstance(p, LVar) else fresh_name("x")
        bctx = ctx.push(VarBind(name, expected.dom, index=amb))
        bm = self.check(bctx, amb, inner, expected.cod)
        return Lam(name, expected.dom, self.unvar(name, expected.dom, bm))

    # -- inference mode -----------------------------------------------------

    def infer(self, ctx: Context, amb: Row, t: STerm) -> tuple[Type, Term]:
        match t:
            case SUnit():
                return UNIT, UNITV
            case SInt(v, _):
                return INT, IntLit(v)
            case SBool(v, _):
                return BOOL, BoolLit(v)
            case SStr(v, _):
                return STRING, StrLit(v)
            case SVar():
                return self.var(ctx, amb, t)
            case SAnnot(inner, ty):
                self._spanned(t, lambda: kind_of(ctx, ty))
                return ty, self.check(ctx, amb, inner, ty)
            case SLam():
                raise self.err(
                    ANNOTATION_REQUIRED, t,
                    "an unannotated function; give it a type",
                )
            case SApp():
                return self.app(ctx, amb, t)
            case STyApp():
                return self.tyapp(ctx, amb, t)
            case SDo():
                return self.do_term(ctx, amb, t)
            case SMask():
                m = Relative(labels(*t.labels))
                bty, bm = self.infer(
                    ctx.push(Lock(m, amb)), act(m, amb), t.body
                )
                return Box(m, bty), Mask(m.mask, bm)
            case SSeq(first, second):
                fty, fm = self.infer(ctx, amb, first)
                sty, sm = self.infer(ctx, amb, second)
                x = fresh_name("x", avoid=free_term_vars(sm))
                return sty, App(Lam(x, fty, sm), fm)
            case SIf(cond, a, b):
                cm = self.check(ctx, amb, cond, BOOL)
                at_, am = self.infer(ctx, amb, a)
                bt, bm = self.infer(ctx, amb, b)
                j = self.join_types(ctx, amb, at_, bt)
                if j is None:
                    raise self.err(
                        ANNOTATION_REQUIRED, t,
                        "the branches of this if do not join; annotate it",
                        expected=pretty_type(at_),
                        actual=pretty_type(bt),
                    )
                am = self.coerce(ctx, amb, am, at_, j, a)
                bm = self.coerce(ctx, amb, bm, bt, j, b)
                return j, If(cm, am, bm)
            case SPair(left, right):
                lt, lm = self.infer(ctx, amb, left)
                rt, rm = self.infer(ctx, amb, right)
                return Product(lt, rt), Pair(lm, rm)
            case SInl() | SInr():
                raise self.err(
                    ANNOTATION_REQUIRED, t,
                    "an injection needs a sum type annotation",
                )
            case SNil():
                raise self.err(
                    ANNOTATION_REQUIRED, t, "nil needs a list type annotation"
                )
            case SList(items):
                if not items:
                    raise self.err(
                        ANNOTATION_REQUIRED, t,
                        "an empty list needs a type annotation",
                    )
                ht, hm = self.infer(ctx, amb, items[0])
                lty = ListType(ht)
                out: Term = Nil(lty)
                rest = [
                    self.check(ctx, amb, item, ht) for item in items[1:]
                ]
                for m in reversed(rest):
                    out = Cons(m, out)
                return lty, Cons(hm, out)
            case SCons(head, tail):
                ht, hm = self.infer(ctx, amb, head)
                tm = self.check(ctx, amb, tail, ListType(ht))
                return ListType(ht), Cons(hm, tm)
            case SCtor(name, arg):
                hit = self.ctor_types.get(name)
                if hit is None:
                    raise self.err(
                        KIND_MISMATCH, t, f"unknown constructor {name}"
                    )
                tyname, payload = hit
                am = self.check(ctx, amb, arg, payload)
                return NamedType(tyname), Fold(name, am)
            case SBin():
                return self.binop(ctx, amb, t)
            case SCase():
                return self.case_term(ctx, amb, t, None)
            case SHandle():
                return self.handle_infer(ctx, amb, t)
            case _:
                raise self.err(
                    MODE_MISMATCH, t, f"cannot infer {type(t).__name__}"
                )

    def var(self, ctx: Context, amb: Row, t: SVar) -> tuple[Type, Term]:
        hit = ctx.lookup_var(t.name)
        if hit is None:
            raise self.err(UNBOUND_VAR, t, f"unbound variable {t.name}")
        bind, suffix = hit
        nu = locks_of(suffix)
        a = bind.type
        if isinstance(bind, TopBind):
            # Top-level and recursive names stay plain core variables.
            if kind_of(ctx, a) != Kind.ABS and not transform(
                IDENTITY, nu, bind.index
            ):
                raise self.err(
                    VAR_ACCESS_DENIED, t,
                    f"{t.name} cannot cross locks {pretty_modality(nu)} "
                    f"at {pretty_row_or_dot(bind.index)}",
                )
            return a, Var(t.name)
        mus, g = decompose_box(a)
        if kind_of(ctx, a) == Kind.ABS:
            return a, self._rebox(mus, Var(t.name))
        c = chain_compose(mus)
        z = residual(c, nu, bind.index)
        if z is None:
            raise self.err(
                VAR_ACCESS_DENIED, t,
                f"variable {t.name} bound under modality "
                f"{pretty_modality(c)} cannot cross locks "
                f"{pretty_modality(nu)} at {pretty_row_or_dot(bind.index)}",
            )
        if syntax.is_identity(z) and not mus:
            return a, Var(t.name)
        return Box(z, g), Mod(z, Var(t.name))

    def app(self, ctx: Context, amb: Row, t: SApp) -> tuple[Type, Term]:
        fty, fm = self.infer(ctx, amb, t.fn)
        mus, g = decompose_box(fty)
        if not isinstance(g, Arrow):
            raise self.err(
                MODE_MISMATCH, t, "application of a non-function",
                actual=pretty_type(fty),
            )
        if mus:
            if not transform(chain_compose(mus), IDENTITY, amb):
                raise self.err(
                    MODE_MISMATCH, t,
                    "a function boxed under "
                    f"{pretty_modality(chain_compose(mus))} cannot be "
                    "called here",
                    actual=pretty_type(fty),
                )
            fm = self.unbox(fm, fty, mus, Var)
        am = self.check(ctx, amb, t.arg, g.dom)
        return g.cod, App(fm, am)

    def tyapp(self, ctx: Context, amb: Row, t: STyApp) -> tuple[Type, Term]:
        fty, fm = self.infer(ctx, amb, t.fn)
        mus, g = decompose_box(fty)
        if not isinstance(g, Forall):
            raise self.err(
                MODE_MISMATCH, t, "type application of a non-polymorphic term",
                actual=pretty_type(fty),
            )
        if mus:
            if not transform(chain_compose(mus), IDENTITY, amb):
                raise self.err(
                    MODE_MISMATCH, t,
                    "a value boxed under "
                    f"{pretty_modality(chain_compose(mus))} cannot be "
                    "instantiated here",
                    actual=pretty_type(fty),
                )
            fm = self.unbox(fm, fty, mus, Var)
        arg = t.arg
        if g.kind == Kind.EFFECT and isinstance(arg, TyVar):
            arg = Row((), RowVar(arg.name))
        self._spanned(t, lambda: check_type_arg(ctx, arg, g.kind))
        return subst_type(g.body, g.var, arg), TyApp(fm, arg)

    def do_term(self, ctx: Context, amb: Row, t: SDo) -> tuple[Type, Term]:
        first = None
        for l, p in normalize(amb).entries:
            if l == t.label:
                first = p
                break
        if first is None or isinstance(first, syntax.Absent):
            raise self.err(
                OPERATION_ABSENT, t,
                f"operation {t.label} is not available in the ambient row "
                f"{pretty_row_or_dot(amb)}",
            )
        am = self.check(ctx, amb, t.arg, first.arg)
        return first.res, Do(t.label, am)

    def binop(self, ctx: Context, amb: Row, t: SBin) -> tuple[Type, Term]:
        if t.op == "++":
            lt, lm = self.infer(ctx, amb, t.left)
            if not isinstance(lt, ListType):
                raise self.err(
                    MODE_MISMATCH, t, "++ expects lists",
                    actual=pretty_type(lt),
                )
            rm = self.check(ctx, amb, t.right, lt)
            return lt, BinOp("++", lm, rm)
        lm = self.check(ctx, amb, t.left, INT)
        rm = self.check(ctx, amb, t.right, INT)
        ty = BOOL if t.op in ("==", "<", "<=") else INT
        return ty, BinOp(t.op, lm, rm)

    # -- case ---------------------------------------------------------------

    def case_term(
        self, ctx: Context, amb: Row, t: SCase, expected: Optional[Type]
    ) -> tuple[Type, Term]:
        sty, sm = self.infer(ctx, amb, t.subject)
        mus, g = decompose_box(sty)
        c = chain_compose(mus)
        arms = [self._flat_arm(p, b) for p, b in t.arms]

        def subject(build: Callable[[Term], Term]) -> Term:
            if not mus:
                return build(sm)
            return self.unbox(sm, sty, mus, lambda n: build(Var(n)))

        def arm(
            bctx: Context, body: STerm, against: Optional[Type]
        ) -> tuple[Type, Term]:
            if against is not None:
                return against, self.check(bctx, amb, body, against)
            return self.infer(bctx, amb, body)

        if isinstance(g, Product):
            if len(arms) != 1 or not isinstance(arms[0][0], PPair):
                raise self.err(
                    MODE_MISMATCH, t,
                    "a pair case needs exactly one (x, y) arm",
                    actual=pretty_type(sty),
                )
            pat, abody = arms[0]
            x = self._slot_name(pat.left, t)
            y = self._slot_name(pat.right, t)
            if x == y:
                raise self.err(
                    MODE_MISMATCH, t, f"duplicate pattern variable {x}"
                )
            bctx = ctx.push(
                VarBind(x, self._shift(mus, g.left), index=amb),
                VarBind(y, self._shift(mus, g.right), index=amb),
            )
            rty, bm = arm(bctx, abody, expected)
            bm = self.unvar(x, g.left, bm, start=c)
            bm = self.unvar(y, g.right, bm, start=c)
            return rty, subject(lambda s: CaseProd(c, s, x, y, bm))

        if isinstance(g, Sum):
            linl = [a for a in arms if isinstance(a[0], PInl)]
            linr = [a for a in arms if isinstance(a[0], PInr)]
            if len(arms) != 2 or len(linl) != 1 or len(linr) != 1:
                raise self.err(
                    MODE_MISMATCH, t,
                    "a sum case needs exactly an inl arm and an inr arm",
                    actual=pretty_type(sty),
                )
            (lpat, lbody), (rpat, rbody) = linl[0], linr[0]
            x = self._slot_name(lpat.body, t)
            y = self._slot_name(rpat.body, t)
            lctx = ctx.push(VarBind(x, self._shift(mus, g.left), index=amb))
            rctx = ctx.push(VarBind(y, self._shift(mus, g.right), index=amb))
            lt, lm = arm(lctx, lbody, expected)
            rt, rm = arm(rctx, rbody, expected)
            if expected is None:
                rty = self.join_types(ctx, amb, lt, rt)
                if rty is None:
                    raise self.err(
                        ANNOTATION_REQUIRED, t,
                        "the arms of this case do not join; annotate it",
                        expected=pretty_type(lt),
                        actual=pretty_type(rt),
                    )
                lm = self.coerce(lctx, amb, lm, lt, rty, lbody)
                rm = self.coerce(rctx, amb, rm, rt, rty, rbody)
            else:
                rty = expected
            lm = self.unvar(x, g.left, lm, start=c)
            rm = self.unvar(y, g.right, rm, start=c)
            return rty, subject(lambda s: CaseSum(c, s, x, lm, y, rm))

        if isinstance(g, ListType):
            nils = [a for a in arms if isinstance(a[0], PNil)]
            conses = [a for a in arms if isinstance(a[0], PCons)]
            if len(arms) != 2 or len(nils) != 1 or len(conses) != 1:
                raise self.err(
                    MODE_MISMATCH, t,
                    "a list case needs exactly a nil arm and a cons arm",
                    actual=pretty_type(sty),
                )
            (_, nbody), (cpat, cbody) = nils[0], conses[0]
            h = self._slot_name(cpat.head, t)
            r = self._slot_name(cpat.tail, t)
            if h == r:
                raise self.err(
                    MODE_MISMATCH, t, f"duplicate pattern variable {h}"
                )
            cctx = ctx.push(
                VarBind(h, self._shift(mus, g.elem), index=amb),
                VarBind(r, self._shift(mus, g), index=amb),
            )
            nt, nm = arm(ctx, nbody, expected)
            ct, cm = arm(cctx, cbody, expected)
            if expected is None:
                rty = self.join_types(ctx, amb, nt, ct)
                if rty is None:
                    raise self.err(
                        ANNOTATION_REQUIRED, t,
                        "the arms of this case do not join; annotate it",
                        expected=pretty_type(nt),
                        actual=pretty_type(ct),
                    )
                nm = self.coerce(ctx, amb, nm, nt, rty, nbody)
                cm = self.coerce(cctx, amb, cm, ct, rty, cbody)
            else:
                rty = expected
            cm = self.unvar(h, g.elem, cm, start=c)
            return rty, subject(lambda s: CaseList(c, s, nm, h, r, cm))

        if isinstance(g, NamedType):
            data = self.data.get(g.name)
            if data is None:
                raise self.err(
                    KIND_MISMATCH, t, f"unknown data type {g.name}"
                )
            dc, payload = data
            if len(arms) != 1 or not isinstance(arms[0][0], PCtor):
                raise self.err(
                    MODE_MISMATCH, t,
                    f"a {g.name} case needs exactly one ({dc} x) arm",
                    actual=pretty_type(sty),
                )
            pat, abody = arms[0]
            if pat.name != dc:
                raise self.err(
                    HANDLER_CLAUSE_MISMATCH, t,
                    f"constructor {pat.name} does not build {g.name}",
                )
            x = self._slot_name(pat.body, t)
            bctx = ctx.push(VarBind(x, self._shift(mus, payload), index=amb))
            rty, bm = arm(bctx, abody, expected)
            bm = self.unvar(x, payload, bm, start=c)
            return rty, subject(lambda s: CaseData(c, s, dc, x, bm))

        raise self.err(
            MODE_MISMATCH, t, "cannot case on this subject",
            actual=pretty_type(sty),
        )

    def _flat_arm(
        self, pat: Pattern, body: STerm
    ) -> tuple[Pattern, STerm]:
        """One binder per slot; nested patterns move into an inner case."""

        def slot(p: Pattern, body: STerm) -> tuple[Pattern, STerm]:
            if isinstance(p, (PVar, PWild)):
                return p, body
            if isinstance(p, PUnit):
                return PWild(), body
            n = fresh_name("p")
            return PVar(n), SCase(SVar(n, body.pos), ((p, body),), body.pos)

        match pat:
            case PPair(a, b):
                b2, body = slot(b, body)
                a2, body = slot(a, body)
                return PPair(a2, b2), body
            case PCons(a, b):
                b2, body = slot(b, body)
                a2, body = slot(a, body)
                return PCons(a2, b2), body
            case PInl(a):
                a2, body = slot(a, body)
                return PInl(a2), body
            case PInr(a):
                a2, body = slot(a, body)
                return PInr(a2), body
            case PCtor(name, a):
                a2, body = slot(a, body)
                return PCtor(name, a2), body
            case _:
                return pat, body

    def _slot_name(self, p: Pattern, at: STerm) -> str:
        if isinstance(p, PVar):
            return p.name
        if isinstance(p, PWild):
            return fresh_name("x")
        raise self.err(
            MODE_MISMATCH, at, "this pattern position needs a variable or _"
        )

    # -- handlers -----------------------------------------------------------

    def _handler_sig(self, ctx: Context, t: SHandle) -> Ext:
        seen = set()
        d = []
        for op in t.clauses:
            if op.label in seen:
                raise CheckError(
                    HANDLER_CLAUSE_MISMATCH,
                    f"duplicate clause for {op.label}",
                    Span(*op.pos),
                )
            seen.add(op.label)
            sig = OpSig(op.arg_type, op.res_type)
            try:
                check_presence(ctx, op.label, sig)
            except CheckError as e:
                raise CheckError(
                    e.code, e.message, Span(*op.pos), e.expected, e.actual
                ) from None
            d.append((op.label, sig))
        return tuple(d)

    def _clause_name(self, pat: Pattern, ty: Type, at: STerm) -> str:
        if isinstance(pat, PVar):
            return pat.name
        if isinstance(pat, PUnit) and not type_equiv(ty, UNIT):
            raise self.err(
                MODE_MISMATCH, at, "a () pattern against a non-unit type",
                actual=pretty_type(ty),
            )
        return fresh_name("x")

    def _op_clause(
        self, ctx: Context, amb: Row, op: SOp, target: Type
    ) -> OpClause:
        pname = self._clause_name(op.param, op.arg_type, op.body)
        rname = op.resume if op.resume != "_" else fresh_name("k")
        cctx = ctx.push(
            VarBind(pname, op.arg_type, index=amb),
            VarBind(rname, Arrow(op.res_type, target), index=amb),
        )
        bm = self.check(cctx, amb, op.body, target)
        return OpClause(
            op.label, op.arg_type, op.res_type, pname, rname,
            self.unvar(pname, op.arg_type, bm),
        )

    def handle_check(
        self, ctx: Context, amb: Row, t: SHandle, expected: Type
    ) -> Term:
        d = self._handler_sig(ctx, t)
        lock = Relative((), d)
        a, bm = self.infer(ctx.push(Lock(lock, amb)), ext_plus(d, amb), t.body)
        boxed = Box(Relative((), d), a)
        pat, rbody = t.ret
        rname = self._clause_name(pat, a, rbody)
        rctx = ctx.push(VarBind(rname, boxed, index=amb))
        rm = self.check(rctx, amb, rbody, expected)
        rm = self.unvar(rname, boxed, rm)
        clauses = tuple(
            self._op_clause(ctx, amb, op, expected) for op in t.clauses
        )
        return Handle(HandlerFlavor.DEEP, bm, Handler(rname, rm, clauses), None)

    def handle_infer(
        self, ctx: Context, amb: Row, t: SHandle
    ) -> tuple[Type, Term]:
        d = self._handler_sig(ctx, t)
        lock = Relative((), d)
        a, bm = self.infer(ctx.push(Lock(lock, amb)), ext_plus(d, amb), t.body)
        boxed = Box(Relative((), d), a)
        pat, rbody = t.ret
        rname = self._clause_name(pat, a, rbody)
        rctx = ctx.push(VarBind(rname, boxed, index=amb))
        bt, rm = self.infer(rctx, amb, rbody)
        rm = self.unvar(rname, boxed, rm)
        try:
            clauses = tuple(
                self._op_clause(ctx, amb, op, bt) for op in t.clauses
            )
        except CheckError as e:
            if e.code != MODE_MISMATCH:
                raise
            raise self.err(
                ANNOTATION_REQUIRED, t,
                "the handler clauses do not take the return clause's type; "
                "annotate the handler",
                expected=pretty_type(bt),
            ) from None
        return bt, Handle(
            HandlerFlavor.DEEP, bm, Handler(rname, rm, clauses), None
        )


# ---------------------------------------------------------------------------
# Whole programs


def _named_types(ty: Type, out: set[str]) -> None:
    match ty:
        case NamedType(name):
            out.add(name)
        case Arrow(a, b) | Product(a, b) | Sum(a, b):
            _named_types(a, out)
            _named_types(b, out)
        case ListType(elem):
            _named_types(elem, out)
        case Box(m, body):
            _named_types(body, out)
            rows = [m.row] if isinstance(m, Absolute) else []
            exts = [m.ext] if isinstance(m, Relative) else []
            for r in rows:
                exts.append(r.entries)
            for e in exts:
                for _, p in e:
                    if isinstance(p, OpSig):
                        _named_types(p.arg, out)
                        _named_types(p.res, out)
        case Forall(_, _, body):
            _named_types(body, out)
        case _:
            pass


def elaborate_program(prog: Program) -> CheckedProgram:
    elab = Elaborator(prog.data_env)
    checked: list[CheckedDef] = []
    entries: list[TopBind] = []
    for d in prog.defs:
        ctx = Context(tuple(entries))
        span = Span(*d.pos)
        try:
            term0 = compile_definition(d)
            if d.signature is not None:
                names: set[str] = set()
                _named_types(d.signature, names)
                for n in sorted(names - set(prog.data_env)):
                    raise CheckError(KIND_MISMATCH, f"unknown type {n}")
                kind_of(ctx, d.signature)
                dctx = ctx.push(
                    TopBind(d.name, d.signature, IDENTITY, EMPTY_ROW)
                )
                core = elab.check(dctx, EMPTY_ROW, term0, d.signature)
                ty = d.signature
            else:
                ty, core = elab.infer(ctx, EMPTY_ROW, term0)
        except CheckError as e:
            if e.span is None:
                raise CheckError(
                    e.code, e.message, span, e.expected, e.actual
                ) from None
            raise
        if d.name in free_term_vars(core):
            if not is_value(core):
                raise CheckError(
                    ESCAPE_VIOLATION,
                    f"recursive definition {d.name} is not a value",
                    span,
                )
            core = Fix(d.name, ty, core)
        checked.append(CheckedDef(d.name, ty, d.sig_text, core, d.pos))
        entries.append(TopBind(d.name, ty, IDENTITY, EMPTY_ROW))
    return CheckedProgram(checked, prog.data_env, prog.aliases)


def check_program(text: str) -> CheckedProgram:
    return elaborate_program(parse_program(text))


def check_term(
    text: str,
    expected: Optional[Type] = None,
    amb: Row = EMPTY_ROW,
    program: Optional[CheckedProgram] = None,
) -> tuple[Type, Term]:
    """Check one surface term, with a checked program's names in scope."""
    data_env = program.data_env if program else {}
    aliases = program.aliases if program else {}
    toks = tokenize(text)
    p = SurfaceParser(
        toks, frozenset(c for c, _ in data_env.values()), aliases
    )
    t = p.sterm()
    p.expect_eof()
    elab = Elaborator(data_env)
    ctx = EMPTY_CONTEXT
    if program is not None:
        ctx = Context(
            tuple(TopBind(d.name, d.type, IDENTITY, amb) for d in program.defs)
        )
    if expected is None:
        return elab.infer(ctx, amb, t)
    return expected, elab.check(ctx, amb, t, expected)
