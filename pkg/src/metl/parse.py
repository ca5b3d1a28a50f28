"""Lexer and parsers for core terms, types, rows, and modalities.

The grammar mirrors the pretty-printers in syntax.py token for token, so
printing and reparsing a tree gives the tree back.  The lexer is shared
with the surface and encoding front ends.

A `#` starts a line comment only at the beginning of a line or after
whitespace; glued to the previous token it is a real token, which keeps
`handle#` a single keyword.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .errors import ParseError
from .syntax import (
    ABSENT,
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
    Do,
    EMPTY_ROW,
    Ext,
    Fix,
    Fold,
    Forall,
    Handle,
    Handler,
    HandlerFlavor,
    INT,
    If,
    Inl,
    Inr,
    IntLit,
    Kind,
    Labels,
    Lam,
    Letmod,
    ListType,
    Mask,
    Mod,
    Modality,
    NamedType,
    Nil,
    OpClause,
    OpSig,
    Pair,
    Presence,
    Product,
    Relative,
    Row,
    RowVar,
    STRING,
    StrLit,
    Sum,
    Term,
    TyApp,
    TyLam,
    TyVar,
    Type,
    TypeArg,
    UNIT,
    UnitVal,
    Var,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | str | punct | eof
    text: str
    line: int
    col: int


# Longest first so maximal munch falls out of the scan order.
_PUNCTS = (
    "~>", "->", ">>", "++", "==", "<=",
    "(", ")", "[", "]", "{", "}", "<", ">",
    "|", ",", ".", ":", ";", "=", "+", "-", "*", "#", "!",
)

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | set("0123456789'")


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)
    prev_glued = False  # previous char belongs to a token, not whitespace
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            prev_glued = False
            continue
        if c in " \t\r":
            i += 1
            col += 1
            prev_glued = False
            continue
        if c == "#" and not prev_glued:
            while i < n and src[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c in _IDENT_START:
            j = i
            while j < n and src[j] in _IDENT_CONT:
                j += 1
            text = src[i:j]
            # handle# / handle#! / handle! are single keywords
            if text == "handle" and j < n and src[j] in "#!":
                if src[j] == "#":
                    j += 1
                if j < n and src[j] == "!":
                    j += 1
                text = src[i:j]
            toks.append(Token("ident", text, start_line, start_col))
            col += j - i
            i = j
        elif c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("int", src[i:j], start_line, start_col))
            col += j - i
            i = j
        elif c == '"':
            j = i + 1
            buf = []
            while j < n and src[j] != '"':
                if src[j] == "\\" and j + 1 < n:
                    esc = src[j + 1]
                    buf.append({"n": "\n", "t": "\t"}.get(esc, esc))
                    j += 2
                else:
                    buf.append(src[j])
                    j += 1
            if j >= n:
                raise ParseError("unterminated string literal", start_line, start_col)
            toks.append(Token("str", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
        else:
            for p in _PUNCTS:
                if src.startswith(p, i):
                    toks.append(Token("punct", p, start_line, start_col))
                    i += len(p)
                    col += len(p)
                    break
            else:
                raise ParseError(f"unexpected character {c!r}", line, col)
        prev_glued = True
    toks.append(Token("eof", "", line, col))
    return toks


RESERVED = frozenset(
    {
        "fun", "rec", "with", "return", "do", "in", "of",
        "if", "then", "else", "nil", "cons", "inl", "inr",
        "true", "false", "forall", "eff", "data", "sig", "let",
        "handle", "handle#", "handle!", "handle#!",
    }
)

_FLAVORS = {f.value: f for f in HandlerFlavor}
_KINDS = {k.value: k for k in Kind}
_BASE_TYPES = {"Int": INT, "Bool": BOOL, "String": STRING, "Unit": UNIT}


class Parser:
    """Recursive-descent parser over a token list.

    `ctors` lists data constructor names so `proc x` reads as a fold
    rather than an application.  `alias_hook` lets the surface front end
    splice effect-alias applications into rows; the core grammar has none.
    """

    def __init__(
        self,
        toks: list[Token],
        ctors: frozenset[str] = frozenset(),
        alias_hook: Optional[Callable[["Parser", str], Ext]] = None,
    ):
        self.toks = toks
        self.pos = 0
        self.ctors = ctors
        self.alias_hook = alias_hook

    # -- cursor helpers -----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.peek()
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind in ("punct", "ident")

    def eat(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.peek()
        if not self.eat(text):
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return t

    def fail(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)

    def ident(self, what: str = "name") -> str:
        t = self.peek()
        if t.kind != "ident" or t.text in RESERVED:
            raise self.fail(f"expected {what}, found {t.text!r}")
        self.pos += 1
        return t.text

    def expect_eof(self) -> None:
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"trailing input at {t.text!r}", t.line, t.col)

    # -- rows and modalities ------------------------------------------------

    def row(self, closers: tuple[str, ...]) -> Row:
        entries: list[tuple[str, Presence]] = []
        tail: Optional[RowVar] = None
        if self.peek().text in closers:
            return Row(tuple(entries), None)
        if self.eat("."):
            return EMPTY_ROW
        while True:
            if tail is not None:
                raise self.fail("row tail must come last")
            t = self.peek()
            if t.kind != "ident":
                raise self.fail("expected a row entry")
            if self.alias_hook is not None and t.text[0].isupper():
                entries.extend(self.alias_hook(self, self.ident("effect alias")))
            else:
                name = self.ident("label")
                if self.eat(":"):
                    entries.append((name, self.presence()))
                else:
                    mask: Labels = ()
                    if self.eat("-"):
                        self.expect("{")
                        mask = self.label_list(("}",))
                        self.expect("}")
                    tail = RowVar(name, mask)
            if not self.eat(","):
                break
        return Row(tuple(entries), tail)

    def presence(self) -> Presence:
        t = self.peek()
        if t.text == "->":
            # an absent mark glued to the closing `>` lexes as an arrow
            self.toks[self.pos] = Token("punct", ">", t.line, t.col + 1)
            return ABSENT
        if self.eat("-"):
            return ABSENT
        arg = self.type()
        self.expect(">>")
        return OpSig(arg, self.type())

    def label_list(self, closers: tuple[str, ...]) -> Labels:
        out = []
        while self.peek().text not in closers:
            out.append(self.ident("label"))
            if not self.eat(","):
                break
        return tuple(out)

    def ext(self, closers: tuple[str, ...]) -> Ext:
        entries: list[tuple[str, Presence]] = []
        while self.peek().text not in closers:
            t = self.peek()
            if self.alias_hook is not None and t.kind == "ident" and t.text[0].isupper():
                entries.extend(self.alias_hook(self, self.ident("effect alias")))
            else:
                name = self.ident("label")
                self.expect(":")
                entries.append((name, self.presence()))
            if not self.eat(","):
                break
        return tuple(entries)

    def modality(self) -> Modality:
        if self.eat("["):
            r = self.row(("]",))
            self.expect("]")
            return Absolute(r)
        self.expect("<")
        if self.eat(">"):
            return Relative()
        # `l : P` means an extension entry; a bare label heads the mask
        if (
            self.peek().kind == "ident"
            and not self.peek(1).text == ":"
            and (self.alias_hook is None or not self.peek().text[0].isupper())
        ):
            mask = self.label_list(("|",))
            self.expect("|")
            ext = self.ext((">",))
            self.expect(">")
            return Relative(mask, ext)
        ext = self.ext((">",))
        self.expect(">")
        return Relative((), ext)

    # -- types --------------------------------------------------------------

    def type(self) -> Type:
        if self.eat("forall"):
            binders = []
            while not self.at("."):
                if self.eat("["):
                    binders.append((self.ident("type variable"), Kind.ABS))
                    self.expect("]")
                elif self.eat("{"):
                    binders.append((self.ident("effect variable"), Kind.EFFECT))
                    self.expect("}")
                else:
                    binders.append((self.ident("type variable"), Kind.ANY))
            if not binders:
                raise self.fail("forall needs at least one binder")
            self.expect(".")
            body = self.type()
            for var, kind in reversed(binders):
                body = Forall(var, kind, body)
            return body
        return self.arrow_type()

    def arrow_type(self) -> Type:
        dom = self.sum_type()
        if self.eat("->"):
            return Arrow(dom, self.type())
        return dom

    def sum_type(self) -> Type:
        t = self.prod_type()
        while self.eat("+"):
            t = Sum(t, self.prod_type())
        return t

    def prod_type(self) -> Type:
        t = self.app_type()
        while self.eat("*"):
            t = Product(t, self.app_type())
        return t

    def app_type(self) -> Type:
        if self.peek().kind == "ident" and self.peek().text == "List":
            self.next()
            return ListType(self.atom_type())
        return self.atom_type()

    def atom_type(self) -> Type:
        t = self.peek()
        if t.kind == "int" and t.text == "1":
            self.next()
            return UNIT
        if t.text in ("[", "<"):
            m = self.modality()
            if self.eat("("):
                return Box(m, self.paren_type_body())
            return Box(m, self.app_type())
        if self.eat("("):
            return self.paren_type_body()
        if t.kind == "ident":
            if t.text in _BASE_TYPES:
                self.next()
                return _BASE_TYPES[t.text]
            if t.text == "List":
                self.next()
                return ListType(self.atom_type())
            name = self.ident("type")
            return NamedType(name) if name[0].isupper() else TyVar(name)
        raise self.fail(f"expected a type, found {t.text!r}")

    def paren_type_body(self) -> Type:
        """The rest of a parenthesised type; commas build right-nested
        products, so (A, B, C) reads as A * (B * C)."""
        parts = [self.type()]
        while self.eat(","):
            parts.append(self.type())
        self.expect(")")
        t = parts[-1]
        for part in reversed(parts[:-1]):
            t = Product(part, t)
        return t

    def type_arg(self) -> TypeArg:
        """A `{...}` argument body: a row when it cannot be a type."""
        if self.at("."):
            self.next()
            return EMPTY_ROW
        if self.at("}"):
            return EMPTY_ROW
        save = self.pos
        try:
            t = self.type()
            if self.at("}"):
                return t
        except ParseError:
            pass
        self.pos = save
        return self.row(("}",))

    # -- terms --------------------------------------------------------------

    def term(self) -> Term:
        t = self.peek()
        if t.text == "fun":
            return self.lam()
        if t.text == "rec":
            self.next()
            name = self.ident()
            self.expect(":")
            ty = self.type()
            self.expect(".")
            return Fix(name, ty, self.term())
        if t.text == "if":
            self.next()
            cond = self.term()
            self.expect("then")
            then_b = self.term()
            self.expect("else")
            return If(cond, then_b, self.term())
        if t.text in _FLAVORS:
            return self.handle()
        if t.kind == "ident" and t.text == "let_":
            return self.letmod()
        if t.kind == "ident" and t.text == "case_":
            return self.case()
        return self.cmp()

    def lam(self) -> Term:
        self.expect("fun")
        if self.eat("{"):
            var = self.ident("type variable")
            kind = Kind.ANY
            if self.eat(":"):
                kind = self.kind()
            self.expect("}")
            self.expect("->")
            return TyLam(var, kind, self.term())
        param = self.ident("parameter")
        # arrows in the annotation need parens, or they would swallow the
        # `->` that begins the body
        ann = self.sum_type() if self.eat(":") else None
        self.expect("->")
        return Lam(param, ann, self.term())

    def kind(self) -> Kind:
        t = self.peek()
        if t.text in _KINDS:
            self.next()
            return _KINDS[t.text]
        raise self.fail("expected a kind (Abs, Any, or Effect)")

    def letmod(self) -> Term:
        self.next()  # let_
        outer = self.modality()
        if not (self.peek().kind == "ident" and self.eat("mod_")):
            raise self.fail("expected mod_ after let_")
        inner = self.modality()
        binders: list[tuple[str, Kind]] = []
        if self.eat("{"):
            while not self.at("}"):
                v = self.ident("type variable")
                k = self.kind() if self.eat(":") else Kind.ANY
                binders.append((v, k))
                if not self.eat(","):
                    break
            self.expect("}")
        var = self.ident()
        self.expect("=")
        subject = self.term()
        self.expect("in")
        return Letmod(outer, inner, tuple(binders), var, subject, self.term())

    def handle(self) -> Term:
        flavor = _FLAVORS[self.next().text]
        ann: Optional[Row] = None
        if self.at("{"):
            if not flavor.absolute:
                raise self.fail("row annotation requires an absolute handler")
            self.next()
            ann = self.row(("}",))
            self.expect("}")
        body = self.term()
        self.expect("with")
        self.expect("{")
        ret: Optional[tuple[str, Term]] = None
        clauses: list[OpClause] = []
        while True:
            if self.eat("return"):
                if ret is not None:
                    raise self.fail("duplicate return clause")
                rv = self.ident()
                self.expect("~>")
                ret = (rv, self.term())
            else:
                self.expect("(")
                label = self.ident("operation label")
                self.expect(":")
                arg_ty = self.type()
                self.expect(">>")
                res_ty = self.type()
                self.expect(")")
                p = self.ident()
                r = self.ident()
                self.expect("~>")
                if any(c.label == label for c in clauses):
                    raise self.fail(f"duplicate clause for operation {label!r}")
                clauses.append(OpClause(label, arg_ty, res_ty, p, r, self.term()))
            if not self.eat("|"):
                break
        self.expect("}")
        if ret is None:
            raise self.fail("handler needs a return clause")
        return Handle(flavor, body, Handler(ret[0], ret[1], tuple(clauses)), ann)

    def case(self) -> Term:
        self.next()  # case_
        m = self.modality()
        subject = self.app()
        self.expect("of")
        if self.eat("("):
            x = self.ident()
            self.expect(",")
            y = self.ident()
            self.expect(")")
            self.expect("~>")
            return CaseProd(m, subject, x, y, self.term())
        self.expect("{")
        if self.eat("inl"):
            x = self.ident()
            self.expect("~>")
            bl = self.term()
            self.expect("|")
            self.expect("inr")
            y = self.ident()
            self.expect("~>")
            br = self.term()
            self.expect("}")
            return CaseSum(m, subject, x, bl, y, br)
        if self.eat("nil"):
            self.expect("~>")
            nb = self.term()
            self.expect("|")
            self.expect("cons")
            h = self.ident()
            r = self.ident()
            self.expect("~>")
            cb = self.term()
            self.expect("}")
            return CaseList(m, subject, nb, h, r, cb)
        ctor = self.ident("constructor")
        var = self.ident()
        self.expect("~>")
        body = self.term()
        self.expect("}")
        return CaseData(m, subject, ctor, var, body)

    def cmp(self) -> Term:
        t = self.add()
        while self.peek().text in ("==", "<", "<="):
            op = self.next().text
            t = BinOp(op, t, self.add())
        return t

    def add(self) -> Term:
        t = self.mul()
        while self.peek().text in ("+", "-", "++"):
            op = self.next().text
            t = BinOp(op, t, self.mul())
        return t

    def mul(self) -> Term:
        t = self.app()
        while self.at("*"):
            self.next()
            t = BinOp("*", t, self.app())
        return t

    def app(self) -> Term:
        t = self.head_item()
        while True:
            if self.at("{"):
                self.next()
                arg = self.type_arg()
                self.expect("}")
                t = TyApp(t, arg)
            elif self.starts_atom():
                t = App(t, self.atom())
            else:
                return t

    def head_item(self) -> Term:
        t = self.peek()
        if t.text == "do":
            self.next()
            return Do(self.ident("operation label"), self.atom())
        if t.text == "cons":
            self.next()
            head = self.atom()
            return Cons(head, self.atom())
        if t.text == "inl":
            self.next()
            return Inl(self.atom())
        if t.text == "inr":
            self.next()
            return Inr(self.atom())
        if t.kind == "ident" and t.text == "mod_":
            self.next()
            return Mod(self.modality(), self.atom())
        if t.kind == "ident" and t.text == "mask_":
            self.next()
            self.expect("{")
            ls = self.label_list(("}",))
            self.expect("}")
            return Mask(ls, self.atom())
        if t.kind == "ident" and t.text in self.ctors:
            self.next()
            return Fold(t.text, self.atom())
        return self.atom()

    def starts_atom(self) -> bool:
        t = self.peek()
        if t.kind in ("int", "str"):
            return True
        if t.kind == "ident":
            return t.text in ("true", "false", "nil") or t.text not in RESERVED
        return t.text in ("(", "[")

    def atom(self) -> Term:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return IntLit(int(t.text))
        if t.text == "-" and self.peek(1).kind == "int":
            self.next()
            return IntLit(-int(self.next().text))
        if t.kind == "str":
            self.next()
            return StrLit(t.text)
        if t.text == "true":
            self.next()
            return BoolLit(True)
        if t.text == "false":
            self.next()
            return BoolLit(False)
        if t.text == "nil":
            self.next()
            return Nil(None)
        if self.eat("("):
            if self.eat(")"):
                return UnitVal()
            inner = self.term()
            if self.eat(","):
                right = self.term()
                self.expect(")")
                return Pair(inner, right)
            if self.eat(":"):
                ty = self.type()
                self.expect(")")
                return self.ascribe(inner, ty)
            self.expect(")")
            return inner
        if self.eat("["):
            items: list[Term] = []
            while not self.at("]"):
                items.append(self.term())
                if not self.eat(","):
                    break
            self.expect("]")
            out: Term = Nil(None)
            for x in reversed(items):
                out = Cons(x, out)
            return out
        if t.kind == "ident" and t.text not in RESERVED:
            self.next()
            return Var(t.text)
        raise self.fail(f"expected an expression, found {t.text!r}")

    def ascribe(self, inner: Term, ty: Type) -> Term:
        match inner:
            case Nil(None):
                return Nil(ty)
            case Inl(body, None):
                return Inl(body, ty)
            case Inr(body, None):
                return Inr(body, ty)
        raise self.fail("only nil, inl, and inr take type ascriptions")


def _run(src: str, go: Callable[[Parser], object], ctors: frozenset[str]):
    p = Parser(tokenize(src), ctors)
    out = go(p)
    p.expect_eof()
    return out


def parse_core(src: str, ctors: frozenset[str] = frozenset()) -> Term:
    return _run(src, Parser.term, ctors)


def parse_type(src: str) -> Type:
    return _run(src, Parser.type, frozenset())


def parse_row(src: str) -> Row:
    return _run(src, lambda p: p.row(("",)), frozenset())


def parse_modality(src: str) -> Modality:
    return _run(src, Parser.modality, frozenset())
