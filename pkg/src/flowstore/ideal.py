"""Reference store semantics: plaintext entries, adversary interactions and
low steps.  This is the specification oracle the cryptographic store is
checked against.

The store maps ground keys to labeled ground values.  Corrupted entries are
tracked separately from absent ones for provenance, but both answer a fetch
with a missing event.  Adversary interactions are restricted at low steps:
a stored value's integrity may not exceed the store level's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from . import terms as tm
from .encoding import b64, encode_ground
from .labels import Label, component_flow, entails, format_label
from .runtime import (
    Configuration,
    FetchEvt,
    LabeledGround,
    MissingEvt,
    StoreBridge,
    StoreEvent,
    StoreEvt,
    is_low_config,
    step,
)
from .terms import Term, Type, type_of_ground


class _Corrupted:
    def __repr__(self) -> str:
        return "CORRUPTED"


CORRUPTED = _Corrupted()

Entry = Union[LabeledGround, _Corrupted]


@dataclass
class IdealStore:
    """Value-semantics mapping from ground keys to entries."""

    entries: Dict[bytes, Tuple[tm.Ground, Entry]] = field(default_factory=dict)

    def copy(self) -> "IdealStore":
        return IdealStore(dict(self.entries))

    def put(self, key: tm.Ground, value: LabeledGround) -> None:
        self.entries[encode_ground(key)] = (key, value)

    def corrupt(self, key: tm.Ground) -> None:
        self.entries[encode_ground(key)] = (key, CORRUPTED)

    def lookup(self, key: tm.Ground) -> Optional[Entry]:
        hit = self.entries.get(encode_ground(key))
        return hit[1] if hit else None

    def dump_lines(self) -> List[str]:
        lines = []
        for kb in sorted(self.entries):
            _, entry = self.entries[kb]
            if isinstance(entry, _Corrupted):
                lines.append(f"{b64(kb)} - CORRUPT")
            else:
                lines.append(
                    f"{b64(kb)} {format_label(entry.label)} "
                    f"{b64(encode_ground(entry.value))}"
                )
        return lines


class RejectedInteraction(Exception):
    """An adversary interaction violating its side condition."""


@dataclass(frozen=True)
class IdealSkip:
    pass


@dataclass(frozen=True)
class IdealStoreI:
    key: tm.Ground
    value: LabeledGround
    store_level: Label

    def __post_init__(self) -> None:
        # non-runtime stores may not exceed the store level's integrity
        if not component_flow("integ", self.store_level.integ, self.value.label.integ):
            raise RejectedInteraction(
                "interaction integrity premise violated: "
                f"ℓ_integ ⇏ l₁_integ ({self.store_level.integ} vs {self.value.label.integ})"
            )


@dataclass(frozen=True)
class IdealCorrupt:
    keys: Tuple[tm.Ground, ...]


IdealInteraction = Union[IdealSkip, IdealStoreI, IdealCorrupt]

IDEAL_SKIP = IdealSkip()


def apply_ideal(store: IdealStore, interaction: IdealInteraction) -> IdealStore:
    out = store.copy()
    if isinstance(interaction, IdealSkip):
        return out
    if isinstance(interaction, IdealStoreI):
        if not component_flow(
            "integ", interaction.store_level.integ, interaction.value.label.integ
        ):
            raise RejectedInteraction("interaction integrity premise violated")
        out.put(interaction.key, interaction.value)
        return out
    if isinstance(interaction, IdealCorrupt):
        for key in interaction.keys:
            out.corrupt(key)
        return out
    raise TypeError(f"unknown interaction {interaction!r}")


class IdealBridge(StoreBridge):
    def __init__(self, store: IdealStore) -> None:
        self.store = store

    def on_store(self, key: tm.Ground, value: LabeledGround) -> None:
        self.store.put(key, value)

    def on_fetch(self, key, default, ty: Type):
        entry = self.store.lookup(key)
        if entry is None or isinstance(entry, _Corrupted):
            return MissingEvt(key)
        return FetchEvt(key, entry)


class HighSectionDiverged(Exception):
    pass


@dataclass
class IdealLowStepper:
    """Drives a configuration by low steps against an ideal store."""

    config: Configuration
    store: IdealStore
    store_level: Label
    high_budget: int = 1_000_000
    events: List[StoreEvent] = field(default_factory=list)

    @property
    def is_low(self) -> bool:
        return is_low_config(self.config, self.store_level)


def ideal_low_step(
    stepper: IdealLowStepper, adversary: Sequence[IdealInteraction] = ()
) -> IdealLowStepper:
    """Apply adversary interactions, then run through exactly one low step.

    One low step is one transition from a low configuration to the next low
    configuration, traversing any intervening high section.
    """
    if not stepper.is_low:
        raise RuntimeError("low step taken from a high configuration")
    store = stepper.store
    for interaction in adversary:
        store = apply_ideal(store, interaction)
    bridge = IdealBridge(store)
    config, evt = step(stepper.config, bridge, stepper.store_level)
    events = list(stepper.events) + [evt]
    budget = stepper.high_budget
    while not is_low_config(config, stepper.store_level):
        if config.is_terminal:
            raise HighSectionDiverged("program terminated inside a high section")
        if budget <= 0:
            raise HighSectionDiverged("diverged in high section")
        config, evt = step(config, bridge, stepper.store_level)
        events.append(evt)
        budget -= 1
    return IdealLowStepper(
        config, bridge.store, stepper.store_level, stepper.high_budget, events
    )


def run_ideal_low_steps(
    stepper: IdealLowStepper,
    script: Sequence[Sequence[IdealInteraction]],
    j: int,
) -> IdealLowStepper:
    """Take j low steps; script[i] is applied before low step i."""
    for i in range(j):
        adv: Sequence[IdealInteraction] = script[i] if i < len(script) else ()
        stepper = ideal_low_step(stepper, adv)
    return stepper


# --- confidentiality-only low equivalence ------------------------------------


def _conf_readable(label: Label, level: Label) -> bool:
    return component_flow("conf", label.conf, level.conf)


def low_equiv_term(t1: Term, t2: Term, level: Label) -> bool:
    """Structural equality after erasing unreadable labeled payloads.

    Labeled values must agree on their label; payloads compare by value when
    the label's confidentiality flows to the level, by type otherwise.
    """
    if isinstance(t1, tm.LabeledLit) and isinstance(t2, tm.LabeledLit):
        if t1.label != t2.label:
            return False
        if _conf_readable(t1.label, level):
            return t1.value == t2.value
        return type_of_ground(t1.value) == type_of_ground(t2.value)
    if type(t1) is not type(t2):
        return False
    if isinstance(t1, tm.Lit):
        return t1.value == t2.value
    if isinstance(t1, tm.Var):
        return t1.name == t2.name
    if isinstance(t1, tm.Lam):
        return (
            t1.var == t2.var
            and t1.ann == t2.ann
            and low_equiv_term(t1.body, t2.body, level)
        )
    if isinstance(t1, tm.FetchOp):
        return (
            t1.ty == t2.ty
            and low_equiv_term(t1.key, t2.key, level)
            and low_equiv_term(t1.default, t2.default, level)
        )
    if isinstance(t1, tm.ResetBlock):
        return (
            t1.saved_label == t2.saved_label
            and t1.saved_clearance == t2.saved_clearance
            and t1.target == t2.target
            and low_equiv_term(t1.body, t2.body, level)
        )
    children1 = _term_children(t1)
    children2 = _term_children(t2)
    if len(children1) != len(children2):
        return False
    return all(
        low_equiv_term(a, b, level) for a, b in zip(children1, children2)
    )


def _term_children(t: Term) -> Tuple[Term, ...]:
    if isinstance(t, tm.App):
        return (t.fn, t.arg)
    if isinstance(t, tm.Fix):
        return (t.fn,)
    if isinstance(t, tm.If):
        return (t.cond, t.then, t.orelse)
    if isinstance(t, tm.Pair):
        return (t.first, t.second)
    if isinstance(t, tm.Fst):
        return (t.pair,)
    if isinstance(t, tm.Snd):
        return (t.pair,)
    if isinstance(t, tm.Ret):
        return (t.body,)
    if isinstance(t, tm.Bind):
        return (t.first, t.cont)
    if isinstance(t, tm.LabelOp):
        return (t.label, t.body)
    if isinstance(t, tm.Unlabel):
        return (t.body,)
    if isinstance(t, tm.ToLabeled):
        return (t.label, t.body)
    if isinstance(t, tm.StoreOp):
        return (t.key, t.value)
    if isinstance(t, tm.LIOVal):
        return (t.body,)
    if isinstance(t, (tm.GetLabel, tm.GetClearance)):
        return ()
    raise TypeError(f"unknown term {t!r}")


def low_equiv(c1: Configuration, c2: Configuration, level: Label) -> bool:
    both_high = (
        not _conf_readable(c1.current, level)
        and not _conf_readable(c2.current, level)
        and not _conf_readable(c1.clearance, level)
        and not _conf_readable(c2.clearance, level)
    )
    if both_high:
        return True
    return (
        c1.current == c2.current
        and c1.clearance == c2.clearance
        and low_equiv_term(c1.term, c2.term, level)
    )


def public_events(trace: Iterable[StoreEvent], level: Label) -> List[StoreEvent]:
    """The non-skip subsequence visible at the store level's confidentiality.

    Missing events carry no label; keys are public, so they are included.
    """
    out: List[StoreEvent] = []
    for evt in trace:
        if isinstance(evt, StoreEvt) and _conf_readable(evt.stored.label, level):
            out.append(evt)
        elif isinstance(evt, FetchEvt) and _conf_readable(evt.fetched.label, level):
            out.append(evt)
        elif isinstance(evt, MissingEvt):
            out.append(evt)
    return out
