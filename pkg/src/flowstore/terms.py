"""The term language: ground values, types, AST, parser and typechecker.

The language is a call-by-name lambda calculus with a monadic effect layer
for label manipulation and store access.  *Ground* values are the serializable
subset: unit, booleans, integers, text, labels and pairs of ground values.
Labeled values carry only ground payloads.

Two term forms are internal-only and rejected by the parser: the computation
wrapper ``LIO t`` and the compartment block entered by ``toLabeled``.  They
arise during evaluation.

Typechecking is bidirectional.  Annotated lambdas synthesize their type;
unannotated lambdas are accepted only where an expected function type is
available (for example as the second argument of ``bind``).  There is no
inference beyond that propagation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

from .labels import Label, LabelSyntaxError, parse_label


# --- ground values -----------------------------------------------------------


class UnitType:
    """The unit value; a singleton."""

    _instance: Optional["UnitType"] = None

    def __new__(cls) -> "UnitType":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "()"


UNIT = UnitType()


@dataclass(frozen=True)
class GroundPair:
    first: "Ground"
    second: "Ground"


Ground = Union[UnitType, bool, int, str, Label, GroundPair]


def is_ground_value(v: object) -> bool:
    if isinstance(v, (UnitType, bool, int, str, Label)):
        return True
    if isinstance(v, GroundPair):
        return is_ground_value(v.first) and is_ground_value(v.second)
    return False


# --- types -------------------------------------------------------------------


@dataclass(frozen=True)
class Type:
    def __str__(self) -> str:  # pragma: no cover - overridden
        raise NotImplementedError


@dataclass(frozen=True)
class TUnit(Type):
    def __str__(self) -> str:
        return "Unit"


@dataclass(frozen=True)
class TBool(Type):
    def __str__(self) -> str:
        return "Bool"


@dataclass(frozen=True)
class TInt(Type):
    def __str__(self) -> str:
        return "Int"


@dataclass(frozen=True)
class TText(Type):
    def __str__(self) -> str:
        return "Text"


@dataclass(frozen=True)
class TLabel(Type):
    def __str__(self) -> str:
        return "Label"


@dataclass(frozen=True)
class TPair(Type):
    first: Type
    second: Type

    def __str__(self) -> str:
        return f"({self.first}, {self.second})"


@dataclass(frozen=True)
class TFun(Type):
    arg: Type
    res: Type

    def __str__(self) -> str:
        a = f"({self.arg})" if isinstance(self.arg, TFun) else str(self.arg)
        return f"{a} -> {self.res}"


@dataclass(frozen=True)
class TLabeled(Type):
    payload: Type

    def __str__(self) -> str:
        return f"Labeled {_atom_str(self.payload)}"


@dataclass(frozen=True)
class TCLIO(Type):
    result: Type

    def __str__(self) -> str:
        return f"CLIO {_atom_str(self.result)}"


def _atom_str(t: Type) -> str:
    if isinstance(t, (TFun, TLabeled, TCLIO)):
        return f"({t})"
    return str(t)


def is_ground_type(t: Type) -> bool:
    if isinstance(t, (TUnit, TBool, TInt, TText, TLabel)):
        return True
    if isinstance(t, TPair):
        return is_ground_type(t.first) and is_ground_type(t.second)
    return False


def type_of_ground(v: Ground) -> Type:
    if isinstance(v, UnitType):
        return TUnit()
    if isinstance(v, bool):
        return TBool()
    if isinstance(v, int):
        return TInt()
    if isinstance(v, str):
        return TText()
    if isinstance(v, Label):
        return TLabel()
    if isinstance(v, GroundPair):
        return TPair(type_of_ground(v.first), type_of_ground(v.second))
    raise TypeError(f"not a ground value: {v!r}")


# --- terms ---------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    pass


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Lam(Term):
    var: str
    ann: Optional[Type]
    body: Term


@dataclass(frozen=True)
class App(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True)
class Fix(Term):
    fn: Term


@dataclass(frozen=True)
class If(Term):
    cond: Term
    then: Term
    orelse: Term


@dataclass(frozen=True)
class Pair(Term):
    first: Term
    second: Term


@dataclass(frozen=True)
class Fst(Term):
    pair: Term


@dataclass(frozen=True)
class Snd(Term):
    pair: Term


@dataclass(frozen=True)
class Lit(Term):
    value: Ground


@dataclass(frozen=True)
class LabeledLit(Term):
    """A labeled ground value ⟨l⟩v.  Not source syntax for programs."""

    label: Label
    value: Ground


@dataclass(frozen=True)
class Ret(Term):
    body: Term


@dataclass(frozen=True)
class Bind(Term):
    first: Term
    cont: Term


@dataclass(frozen=True)
class LabelOp(Term):
    label: Term
    body: Term


@dataclass(frozen=True)
class Unlabel(Term):
    body: Term


@dataclass(frozen=True)
class GetLabel(Term):
    pass


@dataclass(frozen=True)
class GetClearance(Term):
    pass


@dataclass(frozen=True)
class ToLabeled(Term):
    label: Term
    body: Term


@dataclass(frozen=True)
class StoreOp(Term):
    key: Term
    value: Term


@dataclass(frozen=True)
class FetchOp(Term):
    ty: Type
    key: Term
    default: Term


@dataclass(frozen=True)
class LIOVal(Term):
    """Internal: a finished computation carrying its result term."""

    body: Term


@dataclass(frozen=True)
class ResetBlock(Term):
    """Internal: compartment saving (label, clearance, target) around a body."""

    saved_label: Label
    saved_clearance: Label
    target: Label
    body: Term


def ground_of_term(t: Term) -> Optional[Ground]:
    """The ground value denoted by a fully-normalized term, if any."""
    if isinstance(t, Lit):
        return t.value
    if isinstance(t, Pair):
        a = ground_of_term(t.first)
        if a is None:
            return None
        b = ground_of_term(t.second)
        if b is None:
            return None
        return GroundPair(a, b)
    return None


def is_ground_term(t: Term) -> bool:
    return ground_of_term(t) is not None


def term_of_ground(v: Ground) -> Term:
    if isinstance(v, GroundPair):
        return Pair(term_of_ground(v.first), term_of_ground(v.second))
    return Lit(v)


# --- parser --------------------------------------------------------------------


class TermSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


KEYWORDS = {
    "return", "bind", "label", "unlabel", "toLabeled", "getLabel",
    "getClearance", "store", "fetch", "if", "then", "else", "fst", "snd",
    "fix", "true", "false",
}

TYPE_NAMES = {"Unit", "Bool", "Int", "Text", "Label", "Labeled", "CLIO"}


@dataclass
class _Token:
    kind: str  # ident kw int text label sym eof
    value: object
    line: int
    col: int


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, line, col = 0, 1, 1

    def err(msg: str) -> TermSyntaxError:
        return TermSyntaxError(msg, line, col)

    def advance(n: int) -> None:
        nonlocal i, line, col
        for _ in range(n):
            if src[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < len(src):
        ch = src[i]
        if ch.isspace():
            advance(1)
            continue
        if src.startswith("--", i):
            while i < len(src) and src[i] != "\n":
                advance(1)
            continue
        if ch in ("⟨", "<"):
            close = "⟩" if ch == "⟨" else ">"
            end = src.find(close, i + 1)
            if end < 0:
                raise err(f"unterminated label literal, missing {close!r}")
            text = src[i + 1:end]
            try:
                lab = parse_label(text)
            except LabelSyntaxError as exc:
                raise TermSyntaxError(f"bad label literal: {exc}", line, col) from exc
            tokens.append(_Token("label", lab, line, col))
            advance(end + 1 - i)
            continue
        if ch == '"':
            j = i + 1
            out = []
            while j < len(src) and src[j] != '"':
                if src[j] == "\\" and j + 1 < len(src):
                    esc = src[j + 1]
                    out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
                    j += 2
                else:
                    out.append(src[j])
                    j += 1
            if j >= len(src):
                raise err("unterminated string literal")
            tokens.append(_Token("text", "".join(out), line, col))
            advance(j + 1 - i)
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < len(src) and src[i + 1].isdigit()):
            j = i + 1
            while j < len(src) and src[j].isdigit():
                j += 1
            tokens.append(_Token("int", int(src[i:j]), line, col))
            advance(j - i)
            continue
        if ch == "-" and src.startswith("->", i):
            tokens.append(_Token("sym", "->", line, col))
            advance(2)
            continue
        if ch in "()[],.:":
            tokens.append(_Token("sym", ch, line, col))
            advance(1)
            continue
        if ch in ("λ", "\\"):
            tokens.append(_Token("sym", "λ", line, col))
            advance(1)
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < len(src) and (src[j].isalnum() or src[j] in "_'"):
                j += 1
            word = src[i:j]
            if word == "LIO":
                raise err("'LIO' is an internal form, not valid source syntax")
            kind = "kw" if word in KEYWORDS else "ident"
            tokens.append(_Token(kind, word, line, col))
            advance(j - i)
            continue
        raise err(f"unexpected character {ch!r}")
    tokens.append(_Token("eof", None, line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def err(self, msg: str) -> TermSyntaxError:
        tok = self.peek()
        return TermSyntaxError(msg, tok.line, tok.col)

    def expect_sym(self, sym: str) -> None:
        tok = self.next()
        if tok.kind != "sym" or tok.value != sym:
            raise TermSyntaxError(
                f"expected {sym!r}, found {tok.value!r}", tok.line, tok.col
            )

    def expect_kw(self, kw: str) -> None:
        tok = self.next()
        if tok.kind != "kw" or tok.value != kw:
            raise TermSyntaxError(
                f"expected {kw!r}, found {tok.value!r}", tok.line, tok.col
            )

    # types ------------------------------------------------------------

    def parse_type(self) -> Type:
        t = self.parse_type_atom()
        if self.peek().kind == "sym" and self.peek().value == "->":
            self.next()
            return TFun(t, self.parse_type())
        return t

    def parse_type_atom(self) -> Type:
        tok = self.peek()
        if tok.kind == "sym" and tok.value == "(":
            self.next()
            first = self.parse_type()
            if self.peek().value == ",":
                self.next()
                second = self.parse_type()
                self.expect_sym(")")
                return TPair(first, second)
            self.expect_sym(")")
            return first
        if tok.kind == "ident" and tok.value in TYPE_NAMES:
            self.next()
            name = tok.value
            if name == "Unit":
                return TUnit()
            if name == "Bool":
                return TBool()
            if name == "Int":
                return TInt()
            if name == "Text":
                return TText()
            if name == "Label":
                return TLabel()
            if name == "Labeled":
                return TLabeled(self.parse_type_atom())
            if name == "CLIO":
                return TCLIO(self.parse_type_atom())
        raise self.err(f"expected a type, found {tok.value!r}")

    # terms ------------------------------------------------------------

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind == "sym" and tok.value == "λ":
            self.next()
            name_tok = self.next()
            if name_tok.kind != "ident":
                raise TermSyntaxError(
                    f"expected parameter name, found {name_tok.value!r}",
                    name_tok.line, name_tok.col,
                )
            ann = None
            if self.peek().kind == "sym" and self.peek().value == ":":
                self.next()
                ann = self.parse_type()
            self.expect_sym(".")
            return Lam(name_tok.value, ann, self.parse_term())
        if tok.kind == "kw" and tok.value == "if":
            self.next()
            cond = self.parse_term()
            self.expect_kw("then")
            then = self.parse_term()
            self.expect_kw("else")
            return If(cond, then, self.parse_term())
        return self.parse_app()

    _ATOM_KEYWORDS = ("true", "false", "getLabel", "getClearance")

    def parse_app(self) -> Term:
        tok = self.peek()
        if tok.kind == "kw" and tok.value not in self._ATOM_KEYWORDS:
            t = self.parse_keyword_form()
        else:
            t = self.parse_atom()
        while self._at_atom():
            t = App(t, self.parse_atom())
        return t

    def _at_atom(self) -> bool:
        tok = self.peek()
        if tok.kind in ("int", "text", "label"):
            return True
        if tok.kind == "ident" and tok.value not in TYPE_NAMES:
            return True
        if tok.kind == "kw" and tok.value in self._ATOM_KEYWORDS:
            return True
        return tok.kind == "sym" and tok.value == "("

    def parse_keyword_form(self) -> Term:
        tok = self.next()
        kw = tok.value
        if kw == "return":
            return Ret(self.parse_atom())
        if kw == "bind":
            return Bind(self.parse_atom(), self.parse_atom())
        if kw == "label":
            return LabelOp(self.parse_atom(), self.parse_atom())
        if kw == "unlabel":
            return Unlabel(self.parse_atom())
        if kw == "toLabeled":
            return ToLabeled(self.parse_atom(), self.parse_atom())
        if kw == "getLabel":
            return GetLabel()
        if kw == "getClearance":
            return GetClearance()
        if kw == "store":
            return StoreOp(self.parse_atom(), self.parse_atom())
        if kw == "fetch":
            self.expect_sym("[")
            ty = self.parse_type()
            self.expect_sym("]")
            return FetchOp(ty, self.parse_atom(), self.parse_atom())
        if kw == "fst":
            return Fst(self.parse_atom())
        if kw == "snd":
            return Snd(self.parse_atom())
        if kw == "fix":
            return Fix(self.parse_atom())
        raise TermSyntaxError(f"unexpected keyword {kw!r}", tok.line, tok.col)

    def parse_atom(self) -> Term:
        tok = self.peek()
        if tok.kind == "kw" and tok.value == "getLabel":
            self.next()
            return GetLabel()
        if tok.kind == "kw" and tok.value == "getClearance":
            self.next()
            return GetClearance()
        if tok.kind == "int":
            self.next()
            return Lit(tok.value)
        if tok.kind == "text":
            self.next()
            return Lit(tok.value)
        if tok.kind == "label":
            self.next()
            return Lit(tok.value)
        if tok.kind == "kw" and tok.value in ("true", "false"):
            self.next()
            return Lit(tok.value == "true")
        if tok.kind == "ident":
            if tok.value in TYPE_NAMES:
                raise self.err(f"type name {tok.value!r} cannot appear as a term")
            self.next()
            return Var(tok.value)
        if tok.kind == "sym" and tok.value == "(":
            self.next()
            if self.peek().kind == "sym" and self.peek().value == ")":
                self.next()
                return Lit(UNIT)
            first = self.parse_term()
            if self.peek().kind == "sym" and self.peek().value == ",":
                self.next()
                second = self.parse_term()
                self.expect_sym(")")
                return Pair(first, second)
            self.expect_sym(")")
            return first
        raise self.err(f"expected a term, found {tok.value!r}")


def parse_term(src: str) -> Term:
    parser = _Parser(_tokenize(src))
    term = parser.parse_term()
    tok = parser.peek()
    if tok.kind != "eof":
        raise TermSyntaxError(f"trailing input starting at {tok.value!r}", tok.line, tok.col)
    return term


def parse_value(src: str) -> Term:
    """Parse a value for harness inputs; labeled literals ⟪l⟫v are allowed.

    Written ``{conf | integ | avail} payload`` with braces, e.g.
    ``{A | A | Z} 5`` or ``({A|A|Z} true, 7)``.  Programs can never contain
    labeled literals; only game inputs may.
    """
    return _parse_value_text(src)


def _parse_value_text(src: str) -> Term:
    src = src.strip()
    if src.startswith("{"):
        end = src.index("}")
        lab = parse_label(src[1:end])
        payload = parse_term(src[end + 1:])
        g = ground_of_term(payload)
        if g is None:
            raise TermSyntaxError("labeled literal payload must be ground", 1, end + 2)
        return LabeledLit(lab, g)
    if src.startswith("(") and src.endswith(")"):
        depth, split = 0, -1
        for idx, ch in enumerate(src):
            if ch in "({":
                depth += 1
            elif ch in ")}":
                depth -= 1
            elif ch == "," and depth == 1:
                split = idx
                break
        if split > 0:
            return Pair(
                _parse_value_text(src[1:split]), _parse_value_text(src[split + 1:-1])
            )
    return parse_term(src)


# --- pretty printer -------------------------------------------------------------


def _show_ground(v: Ground) -> str:
    if isinstance(v, UnitType):
        return "()"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if isinstance(v, Label):
        return f"⟨{v}⟩"
    if isinstance(v, GroundPair):
        return f"({_show_ground(v.first)}, {_show_ground(v.second)})"
    raise TypeError(f"not ground: {v!r}")


def pretty(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Lit):
        return _show_ground(t.value)
    if isinstance(t, LabeledLit):
        return f"⟨{t.label}⟩{_show_ground(t.value)}"
    if isinstance(t, Lam):
        ann = f": {t.ann}" if t.ann is not None else ""
        return f"λ{t.var}{ann}. {pretty(t.body)}"
    if isinstance(t, App):
        return f"{_pretty_app_head(t.fn)} {_pretty_atom(t.arg)}"
    if isinstance(t, Fix):
        return f"fix {_pretty_atom(t.fn)}"
    if isinstance(t, If):
        return f"if {pretty(t.cond)} then {pretty(t.then)} else {pretty(t.orelse)}"
    if isinstance(t, Pair):
        return f"({pretty(t.first)}, {pretty(t.second)})"
    if isinstance(t, Fst):
        return f"fst {_pretty_atom(t.pair)}"
    if isinstance(t, Snd):
        return f"snd {_pretty_atom(t.pair)}"
    if isinstance(t, Ret):
        return f"return {_pretty_atom(t.body)}"
    if isinstance(t, Bind):
        return f"bind {_pretty_atom(t.first)} {_pretty_atom(t.cont)}"
    if isinstance(t, LabelOp):
        return f"label {_pretty_atom(t.label)} {_pretty_atom(t.body)}"
    if isinstance(t, Unlabel):
        return f"unlabel {_pretty_atom(t.body)}"
    if isinstance(t, GetLabel):
        return "getLabel"
    if isinstance(t, GetClearance):
        return "getClearance"
    if isinstance(t, ToLabeled):
        return f"toLabeled {_pretty_atom(t.label)} {_pretty_atom(t.body)}"
    if isinstance(t, StoreOp):
        return f"store {_pretty_atom(t.key)} {_pretty_atom(t.value)}"
    if isinstance(t, FetchOp):
        return f"fetch[{t.ty}] {_pretty_atom(t.key)} {_pretty_atom(t.default)}"
    if isinstance(t, LIOVal):
        return f"LIO {_pretty_atom(t.body)}"
    if isinstance(t, ResetBlock):
        return (
            f"⟨{t.saved_label}; {t.saved_clearance}; {t.target}⟩{{{pretty(t.body)}}}"
        )
    raise TypeError(f"unknown term: {t!r}")


def _pretty_atom(t: Term) -> str:
    if isinstance(t, (Var, Lit, LabeledLit, Pair, GetLabel, GetClearance)):
        return pretty(t)
    return f"({pretty(t)})"


def _pretty_app_head(t: Term) -> str:
    if isinstance(t, (Var, App, Lit)):
        return pretty(t)
    return f"({pretty(t)})"


# --- typechecker ------------------------------------------------------------------


class TypeCheckError(ValueError):
    def __init__(self, message: str, term: Term) -> None:
        super().__init__(f"{message} in: {pretty(term)}")
        self.term = term


Env = Dict[str, Type]


def typecheck(t: Term, env: Optional[Env] = None, expected: Optional[Type] = None) -> Type:
    """Type of a closed (or env-closed) term; raises TypeCheckError."""
    got = _check(t, dict(env or {}), expected)
    return got


def _check(t: Term, env: Env, expected: Optional[Type]) -> Type:
    got = _synth(t, env, expected)
    if expected is not None and got != expected:
        raise TypeCheckError(f"expected {expected}, got {got}", t)
    return got


def _synth(t: Term, env: Env, expected: Optional[Type]) -> Type:
    if isinstance(t, Var):
        if t.name not in env:
            raise TypeCheckError(f"unbound variable {t.name!r}", t)
        return env[t.name]
    if isinstance(t, Lit):
        return type_of_ground(t.value)
    if isinstance(t, LabeledLit):
        if not is_ground_value(t.value):
            raise TypeCheckError("labeled literal payload must be ground", t)
        return TLabeled(type_of_ground(t.value))
    if isinstance(t, Lam):
        if t.ann is not None:
            inner = dict(env)
            inner[t.var] = t.ann
            body_expected = expected.res if isinstance(expected, TFun) else None
            if isinstance(expected, TFun) and expected.arg != t.ann:
                raise TypeCheckError(
                    f"annotation {t.ann} conflicts with expected argument {expected.arg}", t
                )
            return TFun(t.ann, _check(t.body, inner, body_expected))
        if not isinstance(expected, TFun):
            raise TypeCheckError(
                "cannot infer the parameter type; annotate as λ"
                f"{t.var}: τ. …", t
            )
        inner = dict(env)
        inner[t.var] = expected.arg
        return TFun(expected.arg, _check(t.body, inner, expected.res))
    if isinstance(t, App):
        fn_ty = _synth(t.fn, env, None)
        if not isinstance(fn_ty, TFun):
            raise TypeCheckError(f"applying a non-function of type {fn_ty}", t)
        _check(t.arg, env, fn_ty.arg)
        return fn_ty.res
    if isinstance(t, Fix):
        want = TFun(expected, expected) if expected is not None else None
        fn_ty = _synth(t.fn, env, want)
        if not isinstance(fn_ty, TFun) or fn_ty.arg != fn_ty.res:
            raise TypeCheckError(f"fix needs τ -> τ, got {fn_ty}", t)
        return fn_ty.arg
    if isinstance(t, If):
        _check(t.cond, env, TBool())
        then_ty = _check(t.then, env, expected)
        _check(t.orelse, env, then_ty)
        return then_ty
    if isinstance(t, Pair):
        if isinstance(expected, TPair):
            return TPair(
                _check(t.first, env, expected.first),
                _check(t.second, env, expected.second),
            )
        return TPair(_synth(t.first, env, None), _synth(t.second, env, None))
    if isinstance(t, Fst):
        ty = _synth(t.pair, env, None)
        if not isinstance(ty, TPair):
            raise TypeCheckError(f"fst of non-pair type {ty}", t)
        return ty.first
    if isinstance(t, Snd):
        ty = _synth(t.pair, env, None)
        if not isinstance(ty, TPair):
            raise TypeCheckError(f"snd of non-pair type {ty}", t)
        return ty.second
    if isinstance(t, Ret):
        if isinstance(expected, TCLIO):
            return TCLIO(_check(t.body, env, expected.result))
        return TCLIO(_synth(t.body, env, None))
    if isinstance(t, Bind):
        first_ty = _synth(t.first, env, None)
        if not isinstance(first_ty, TCLIO):
            raise TypeCheckError(f"bind expects a computation, got {first_ty}", t)
        res = expected if isinstance(expected, TCLIO) else None
        # the continuation's argument type is known from the first computation,
        # so unannotated lambdas are fine here
        if isinstance(t.cont, Lam) and t.cont.ann is None:
            inner = dict(env)
            inner[t.cont.var] = first_ty.result
            body_ty = _check(t.cont.body, inner, res)
            if not isinstance(body_ty, TCLIO):
                raise TypeCheckError(
                    f"bind continuation must return a computation, got {body_ty}", t
                )
            return body_ty
        cont_ty = _check(t.cont, env, TFun(first_ty.result, res) if res else None)
        if not isinstance(cont_ty, TFun):
            raise TypeCheckError(f"bind continuation must be a function, got {cont_ty}", t)
        if cont_ty.arg != first_ty.result:
            raise TypeCheckError(
                f"bind continuation takes {cont_ty.arg}, computation gives {first_ty.result}",
                t,
            )
        if not isinstance(cont_ty.res, TCLIO):
            raise TypeCheckError(
                f"bind continuation must return a computation, got {cont_ty.res}", t
            )
        return cont_ty.res
    if isinstance(t, LabelOp):
        _check(t.label, env, TLabel())
        payload_expected = None
        if isinstance(expected, TCLIO) and isinstance(expected.result, TLabeled):
            payload_expected = expected.result.payload
        ty = _check(t.body, env, payload_expected)
        if not is_ground_type(ty):
            raise TypeCheckError(f"label payload must be ground-typed, got {ty}", t)
        return TCLIO(TLabeled(ty))
    if isinstance(t, Unlabel):
        ty = _synth(t.body, env, None)
        if not isinstance(ty, TLabeled):
            raise TypeCheckError(f"unlabel expects a labeled value, got {ty}", t)
        return TCLIO(ty.payload)
    if isinstance(t, (GetLabel, GetClearance)):
        return TCLIO(TLabel())
    if isinstance(t, ToLabeled):
        _check(t.label, env, TLabel())
        body_ty = _synth(t.body, env, None)
        if not isinstance(body_ty, TCLIO):
            raise TypeCheckError(f"toLabeled body must be a computation, got {body_ty}", t)
        if not is_ground_type(body_ty.result):
            raise TypeCheckError(
                f"toLabeled result must be ground-typed, got {body_ty.result}", t
            )
        return TCLIO(TLabeled(body_ty.result))
    if isinstance(t, StoreOp):
        key_ty = _synth(t.key, env, None)
        if not is_ground_type(key_ty):
            raise TypeCheckError(f"store key must be ground-typed, got {key_ty}", t)
        val_ty = _synth(t.value, env, None)
        if not isinstance(val_ty, TLabeled):
            raise TypeCheckError(
                f"store value must be a labeled value, got {val_ty}", t
            )
        return TCLIO(TUnit())
    if isinstance(t, FetchOp):
        if not is_ground_type(t.ty):
            raise TypeCheckError(f"fetch type must be ground, got {t.ty}", t)
        key_ty = _synth(t.key, env, None)
        if not is_ground_type(key_ty):
            raise TypeCheckError(f"fetch key must be ground-typed, got {key_ty}", t)
        _check(t.default, env, TLabeled(t.ty))
        return TCLIO(TLabeled(t.ty))
    if isinstance(t, LIOVal):
        return TCLIO(_synth(t.body, env, None))
    if isinstance(t, ResetBlock):
        body_ty = _synth(t.body, env, None)
        if not isinstance(body_ty, TCLIO):
            raise TypeCheckError("compartment body must be a computation", t)
        return TCLIO(TLabeled(body_ty.result))
    raise TypeCheckError(f"unknown term form {type(t).__name__}", t)


def substitute(t: Term, name: str, replacement: Term) -> Term:
    """Capture-avoiding substitution is not needed: programs are closed and
    substituted arguments are closed, so shadowing is the only concern."""
    if isinstance(t, Var):
        return replacement if t.name == name else t
    if isinstance(t, Lam):
        if t.var == name:
            return t
        return Lam(t.var, t.ann, substitute(t.body, name, replacement))
    if isinstance(t, App):
        return App(substitute(t.fn, name, replacement), substitute(t.arg, name, replacement))
    if isinstance(t, Fix):
        return Fix(substitute(t.fn, name, replacement))
    if isinstance(t, If):
        return If(
            substitute(t.cond, name, replacement),
            substitute(t.then, name, replacement),
            substitute(t.orelse, name, replacement),
        )
    if isinstance(t, Pair):
        return Pair(substitute(t.first, name, replacement), substitute(t.second, name, replacement))
    if isinstance(t, Fst):
        return Fst(substitute(t.pair, name, replacement))
    if isinstance(t, Snd):
        return Snd(substitute(t.pair, name, replacement))
    if isinstance(t, Ret):
        return Ret(substitute(t.body, name, replacement))
    if isinstance(t, Bind):
        return Bind(substitute(t.first, name, replacement), substitute(t.cont, name, replacement))
    if isinstance(t, LabelOp):
        return LabelOp(substitute(t.label, name, replacement), substitute(t.body, name, replacement))
    if isinstance(t, Unlabel):
        return Unlabel(substitute(t.body, name, replacement))
    if isinstance(t, ToLabeled):
        return ToLabeled(substitute(t.label, name, replacement), substitute(t.body, name, replacement))
    if isinstance(t, StoreOp):
        return StoreOp(substitute(t.key, name, replacement), substitute(t.value, name, replacement))
    if isinstance(t, FetchOp):
        return FetchOp(t.ty, substitute(t.key, name, replacement), substitute(t.default, name, replacement))
    if isinstance(t, LIOVal):
        return LIOVal(substitute(t.body, name, replacement))
    if isinstance(t, ResetBlock):
        return ResetBlock(
            t.saved_label, t.saved_clearance, t.target,
            substitute(t.body, name, replacement),
        )
    return t
