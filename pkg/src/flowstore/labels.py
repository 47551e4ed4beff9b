"""Three-component security labels over monotone CNF formulas of principals.

A label is a triple ``⟨confidentiality | integrity | availability⟩``.  Each
component is either the constant ``False`` or a conjunction of *categories*,
where a category is a disjunction of principals.  The empty conjunction is the
constant ``True``.  Components are kept in canonical form: members sorted
within a category, categories sorted by their text rendering, and clauses that
are supersets of other clauses removed (in monotone CNF a clause subsumes all
of its supersets).

The information-flow order differs per component: a more *confidential*
formula is one implied by fewer formulas, while integrity and availability
flow in the implication direction.  ``can_flow_to`` combines the three into
the product lattice order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import total_ordering
from itertools import product
from typing import FrozenSet, Iterable, Iterator, Optional, Tuple

_FORBIDDEN = set("∨∧|,")


class LabelSyntaxError(ValueError):
    """Raised on malformed label text; carries the offending position."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


class Principal(str):
    """A named principal.  Equality and order are byte-wise on the name."""

    def __new__(cls, name: str) -> "Principal":
        if not name:
            raise ValueError("principal name must be non-empty")
        if any(ch.isspace() or ch in _FORBIDDEN for ch in name):
            raise ValueError(f"invalid principal name: {name!r}")
        return super().__new__(cls, name)


@total_ordering
class Category:
    """A non-empty disjunction of principals, e.g. ``A∨B``."""

    __slots__ = ("members", "text", "_hash")

    def __init__(self, members: Iterable[Principal]) -> None:
        mem = frozenset(Principal(p) for p in members)
        if not mem:
            raise ValueError("category must have at least one member")
        object.__setattr__(self, "members", mem)
        object.__setattr__(self, "text", "∨".join(sorted(mem)))
        object.__setattr__(self, "_hash", hash(mem))

    members: FrozenSet[Principal]
    text: str

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Category) and self.members == other.members

    def __lt__(self, other: "Category") -> bool:
        return self.text < other.text

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Category({self.text})"


@dataclass(frozen=True)
class Formula:
    """Monotone CNF formula: ``False``, or a conjunction of categories.

    ``clauses is None`` encodes the distinguished constant ``False``; an empty
    clause set is the constant ``True``.  Construct via :meth:`of`,
    :meth:`true` and :meth:`false`, which canonicalize.
    """

    clauses: Optional[Tuple[Category, ...]]

    @staticmethod
    def true() -> "Formula":
        return Formula(())

    @staticmethod
    def false() -> "Formula":
        return Formula(None)

    @staticmethod
    def of(*clauses: Iterable[str]) -> "Formula":
        return Formula(tuple(Category(c) for c in clauses)).canonicalize()

    @property
    def is_false(self) -> bool:
        return self.clauses is None

    @property
    def is_true(self) -> bool:
        return self.clauses == ()

    def canonicalize(self) -> "Formula":
        """Remove subsumed clauses, deduplicate, and sort by category text."""
        if self.clauses is None:
            return self
        clauses = set(self.clauses)
        kept = [
            c
            for c in clauses
            if not any(o.members < c.members for o in clauses)
        ]
        return Formula(tuple(sorted(set(kept))))

    def principals(self) -> FrozenSet[Principal]:
        if self.clauses is None:
            return frozenset()
        return frozenset(p for c in self.clauses for p in c.members)

    def categories(self) -> Tuple[Category, ...]:
        """Clauses in canonical order; raises on the constant False."""
        if self.clauses is None:
            raise ValueError("the constant False has no categories")
        return self.clauses

    def __str__(self) -> str:
        if self.clauses is None:
            return "False"
        if not self.clauses:
            return "True"
        return " ∧ ".join(c.text for c in self.clauses)

    def __iter__(self) -> Iterator[Category]:
        return iter(self.categories())


def entails(f: Formula, g: Formula) -> bool:
    """Logical implication ``f ⇒ g`` for canonical monotone CNF.

    False entails everything and everything entails True.  Otherwise f ⇒ g
    holds iff every clause of g is weaker than some clause of f, i.e. has a
    clause of f as a subset.
    """
    if f.is_false:
        return True
    if g.is_false:
        return False
    return all(
        any(c.members <= d.members for c in f.clauses) for d in g.clauses
    )


def conj(f: Formula, g: Formula) -> Formula:
    if f.is_false or g.is_false:
        return Formula.false()
    return Formula(f.clauses + g.clauses).canonicalize()


def disj(f: Formula, g: Formula) -> Formula:
    if f.is_false:
        return g
    if g.is_false:
        return f
    if f.is_true or g.is_true:
        return Formula.true()
    merged = tuple(
        Category(c.members | d.members) for c, d in product(f.clauses, g.clauses)
    )
    return Formula(merged).canonicalize()


@dataclass(frozen=True)
class Label:
    """A ⟨confidentiality | integrity | availability⟩ triple."""

    conf: Formula
    integ: Formula
    avail: Formula

    def __post_init__(self) -> None:
        object.__setattr__(self, "conf", self.conf.canonicalize())
        object.__setattr__(self, "integ", self.integ.canonicalize())
        object.__setattr__(self, "avail", self.avail.canonicalize())

    def __str__(self) -> str:
        return format_label(self)


# Lattice extremes: bottom is public, untrusted, unavailable-to-none claims
# inverted -- per-component bottoms are ⟨True | False | False⟩.
BOTTOM = Label(Formula.true(), Formula.false(), Formula.false())
TOP = Label(Formula.false(), Formula.true(), Formula.true())
PUBLIC = Label(Formula.true(), Formula.true(), Formula.true())


def component_flow(kind: str, f: Formula, g: Formula) -> bool:
    """Per-component flow: conf is anti-monotone, integ/avail follow ⇒."""
    if kind == "conf":
        return entails(g, f)
    if kind in ("integ", "avail"):
        return entails(f, g)
    raise ValueError(f"unknown label component: {kind}")


def can_flow_to(l1: Label, l2: Label) -> bool:
    return (
        entails(l2.conf, l1.conf)
        and entails(l1.integ, l2.integ)
        and entails(l1.avail, l2.avail)
    )


def join(l1: Label, l2: Label) -> Label:
    return Label(
        conj(l1.conf, l2.conf),
        disj(l1.integ, l2.integ),
        disj(l1.avail, l2.avail),
    )


def meet(l1: Label, l2: Label) -> Label:
    return Label(
        disj(l1.conf, l2.conf),
        conj(l1.integ, l2.integ),
        conj(l1.avail, l2.avail),
    )


# --- label text grammar ----------------------------------------------------
#
#   label   := formula "|" formula "|" formula
#   formula := "True" | "False" | category ("∧" category)*
#   category:= principal ("∨" principal)*
#
# ASCII aliases "/\" and "\/" are accepted for ∧ and ∨.


def _tokenize_formula(text: str, offset: int) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "∧" or text.startswith("/\\", i):
            tokens.append(("AND", offset + i))
            i += 1 if ch == "∧" else 2
            continue
        if ch == "∨" or text.startswith("\\/", i):
            tokens.append(("OR", offset + i))
            i += 1 if ch == "∨" else 2
            continue
        j = i
        while j < len(text) and not text[j].isspace() and text[j] not in "∧∨\\/":
            j += 1
        if j == i:
            raise LabelSyntaxError(f"unexpected character {ch!r}", offset + i)
        tokens.append((text[i:j], offset + i))
        i = j
    return tokens


def parse_formula(text: str, offset: int = 0) -> Formula:
    tokens = _tokenize_formula(text, offset)
    if not tokens:
        raise LabelSyntaxError("empty formula", offset)
    if len(tokens) == 1 and tokens[0][0] in ("True", "False"):
        return Formula.true() if tokens[0][0] == "True" else Formula.false()
    clauses: list[Category] = []
    members: list[Principal] = []
    expect_name = True
    for tok, pos in tokens:
        if expect_name:
            if tok in ("AND", "OR"):
                raise LabelSyntaxError("expected principal name", pos)
            if tok in ("True", "False"):
                raise LabelSyntaxError(
                    f"{tok} cannot appear inside a compound formula", pos
                )
            try:
                members.append(Principal(tok))
            except ValueError as exc:
                raise LabelSyntaxError(str(exc), pos) from exc
            expect_name = False
        elif tok == "OR":
            expect_name = True
        elif tok == "AND":
            clauses.append(Category(members))
            members = []
            expect_name = True
        else:
            raise LabelSyntaxError(f"expected ∧ or ∨, found {tok!r}", pos)
    if expect_name:
        raise LabelSyntaxError("formula ends with a dangling connective", offset + len(text))
    clauses.append(Category(members))
    return Formula(tuple(clauses)).canonicalize()


def parse_label(text: str) -> Label:
    parts = text.split("|")
    if len(parts) != 3:
        raise LabelSyntaxError(
            f"label needs exactly 3 components separated by '|', got {len(parts)}",
            0,
        )
    offset = 0
    formulas = []
    for part in parts:
        formulas.append(parse_formula(part, offset))
        offset += len(part) + 1
    return Label(*formulas)


def format_label(label: Label) -> str:
    return f"{label.conf} | {label.integ} | {label.avail}"
