"""Floating-label monitor: small-step semantics emitting store events.

A configuration is ⟨current label, clearance, term⟩.  Each step produces
exactly one store event; steps that do not touch the store emit ``skip``.
The store itself is behind the :class:`StoreBridge` interface so that the
reference (plaintext) store and the cryptographic store plug into the same
monitor.

Monitor failures are label-check violations and are distinct from type
errors; the exception names the violated premise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple, Union

from . import terms as tm
from .labels import Label, can_flow_to, component_flow, format_label, join
from .terms import Term, Type, type_of_ground


@dataclass(frozen=True)
class LabeledGround:
    label: Label
    value: tm.Ground


@dataclass(frozen=True)
class SkipEvt:
    pass


@dataclass(frozen=True)
class StoreEvt:
    key: tm.Ground
    stored: LabeledGround


@dataclass(frozen=True)
class FetchEvt:
    key: tm.Ground
    fetched: LabeledGround


@dataclass(frozen=True)
class MissingEvt:
    key: tm.Ground


StoreEvent = Union[SkipEvt, StoreEvt, FetchEvt, MissingEvt]

SKIP = SkipEvt()


class StoreBridge:
    """What a store must answer.  Every fetch gets exactly one event back."""

    def on_store(self, key: tm.Ground, value: LabeledGround) -> None:
        raise NotImplementedError

    def on_fetch(
        self, key: tm.Ground, default: LabeledGround, ty: Type
    ) -> Union[FetchEvt, MissingEvt]:
        raise NotImplementedError


class NullBridge(StoreBridge):
    """For programs that never touch the store."""

    def on_store(self, key, value):
        raise RuntimeError("program touched the store but no store is attached")

    on_fetch = on_store


class MonitorFailure(Exception):
    """A violated label premise.  `premise` states the failed check."""

    def __init__(self, rule: str, premise: str, detail: str = "") -> None:
        self.rule = rule
        self.premise = premise
        msg = f"monitor failure in {rule}: violated premise {premise}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class StuckTermError(Exception):
    """A shape the evaluator cannot reduce; unreachable from well-typed terms."""


class StepBudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class Configuration:
    current: Label
    clearance: Label
    term: Term

    @property
    def is_terminal(self) -> bool:
        return isinstance(self.term, tm.LIOVal)


def is_low_config(config: Configuration, store_level: Label) -> bool:
    return can_flow_to(config.current, store_level)


def _require(ok: bool, rule: str, premise: str, l1: Label, l2: Label) -> None:
    if not ok:
        raise MonitorFailure(
            rule, premise, f"{format_label(l1)} ⋢ {format_label(l2)}"
        )


def _pure_step(t: Term) -> Term:
    """One call-by-name reduction of a non-monadic term."""
    if isinstance(t, tm.App):
        if isinstance(t.fn, tm.Lam):
            return tm.substitute(t.fn.body, t.fn.var, t.arg)
        return tm.App(_pure_step(t.fn), t.arg)
    if isinstance(t, tm.Fix):
        return tm.App(t.fn, t)
    if isinstance(t, tm.If):
        if isinstance(t.cond, tm.Lit) and isinstance(t.cond.value, bool):
            return t.then if t.cond.value else t.orelse
        return tm.If(_pure_step(t.cond), t.then, t.orelse)
    if isinstance(t, tm.Fst):
        if isinstance(t.pair, tm.Pair):
            return t.pair.first
        return tm.Fst(_pure_step(t.pair))
    if isinstance(t, tm.Snd):
        if isinstance(t.pair, tm.Pair):
            return t.pair.second
        return tm.Snd(_pure_step(t.pair))
    raise StuckTermError(f"cannot reduce: {tm.pretty(t)}")


def _ground_step(t: Term) -> Term:
    """Drive a term toward a fully-normalized ground value."""
    if isinstance(t, tm.Pair):
        if not tm.is_ground_term(t.first):
            return tm.Pair(_ground_step(t.first), t.second)
        return tm.Pair(t.first, _ground_step(t.second))
    return _pure_step(t)


def step(
    config: Configuration, bridge: StoreBridge, store_level: Label
) -> Tuple[Configuration, StoreEvent]:
    """One monitor step.  Terminal configurations do not step."""
    cur, clr, t = config.current, config.clearance, config.term

    if isinstance(t, tm.LIOVal):
        raise StepBudgetExhausted("terminal configuration cannot step")

    if isinstance(t, tm.Ret):
        return replace(config, term=tm.LIOVal(t.body)), SKIP

    if isinstance(t, tm.Bind):
        if isinstance(t.first, tm.LIOVal):
            return replace(config, term=tm.App(t.cont, t.first.body)), SKIP
        inner, evt = step(replace(config, term=t.first), bridge, store_level)
        return replace(inner, term=tm.Bind(inner.term, t.cont)), evt

    if isinstance(t, tm.ResetBlock):
        if isinstance(t.body, tm.LIOVal):
            _require(
                can_flow_to(cur, t.target),
                "reset", "lcur ⊑ l₁ (inner label within the compartment target)",
                cur, t.target,
            )
            restored = tm.LabelOp(tm.Lit(t.target), t.body.body)
            return (
                Configuration(t.saved_label, t.saved_clearance, restored),
                SKIP,
            )
        inner, evt = step(replace(config, term=t.body), bridge, store_level)
        block = tm.ResetBlock(t.saved_label, t.saved_clearance, t.target, inner.term)
        return replace(inner, term=block), evt

    if isinstance(t, tm.LabelOp):
        if not isinstance(t.label, tm.Lit):
            return replace(config, term=tm.LabelOp(_pure_step(t.label), t.body)), SKIP
        lab = _label_value(t.label)
        if not tm.is_ground_term(t.body):
            return replace(config, term=tm.LabelOp(t.label, _ground_step(t.body))), SKIP
        _require(can_flow_to(cur, lab), "label", "lcur ⊑ l", cur, lab)
        _require(can_flow_to(lab, clr), "label", "l ⊑ ccur", lab, clr)
        value = tm.ground_of_term(t.body)
        return replace(config, term=tm.LIOVal(tm.LabeledLit(lab, value))), SKIP

    if isinstance(t, tm.Unlabel):
        if not isinstance(t.body, tm.LabeledLit):
            return replace(config, term=tm.Unlabel(_pure_step(t.body))), SKIP
        raised = join(cur, t.body.label)
        _require(can_flow_to(raised, clr), "unlabel", "lcur ⊔ l ⊑ ccur", raised, clr)
        return (
            Configuration(raised, clr, tm.LIOVal(tm.term_of_ground(t.body.value))),
            SKIP,
        )

    if isinstance(t, tm.GetLabel):
        return replace(config, term=tm.LIOVal(tm.Lit(cur))), SKIP

    if isinstance(t, tm.GetClearance):
        return replace(config, term=tm.LIOVal(tm.Lit(clr))), SKIP

    if isinstance(t, tm.ToLabeled):
        if not isinstance(t.label, tm.Lit):
            return replace(config, term=tm.ToLabeled(_pure_step(t.label), t.body)), SKIP
        target = _label_value(t.label)
        _require(can_flow_to(cur, target), "toLabeled", "lcur ⊑ l₁", cur, target)
        _require(can_flow_to(target, clr), "toLabeled", "l₁ ⊑ ccur", target, clr)
        return replace(config, term=tm.ResetBlock(cur, clr, target, t.body)), SKIP

    if isinstance(t, tm.StoreOp):
        if not tm.is_ground_term(t.key):
            return replace(config, term=tm.StoreOp(_ground_step(t.key), t.value)), SKIP
        if not isinstance(t.value, tm.LabeledLit):
            return replace(config, term=tm.StoreOp(t.key, _pure_step(t.value))), SKIP
        _require(
            can_flow_to(cur, store_level),
            "store", "lcur ⊑ ℓ (current label bounded by store level)",
            cur, store_level,
        )
        _require(
            can_flow_to(cur, t.value.label),
            "store", "lcur ⊑ l₁ (current label flows to the stored label)",
            cur, t.value.label,
        )
        key = tm.ground_of_term(t.key)
        lv = LabeledGround(t.value.label, t.value.value)
        bridge.on_store(key, lv)
        return replace(config, term=tm.LIOVal(tm.Lit(tm.UNIT))), StoreEvt(key, lv)

    if isinstance(t, tm.FetchOp):
        if not tm.is_ground_term(t.key):
            return replace(config, term=tm.FetchOp(t.ty, _ground_step(t.key), t.default)), SKIP
        if not isinstance(t.default, tm.LabeledLit):
            return replace(config, term=tm.FetchOp(t.ty, t.key, _pure_step(t.default))), SKIP
        default = LabeledGround(t.default.label, t.default.value)
        if not component_flow("avail", store_level.avail, default.label.avail):
            raise MonitorFailure(
                "fetch",
                "ℓ_avail ⊑ᴬ l_d_avail (store availability bounds the default)",
                f"{store_level.avail} ⋢ {default.label.avail}",
            )
        key = tm.ground_of_term(t.key)
        answer = bridge.on_fetch(key, default, t.ty)
        if (
            isinstance(answer, FetchEvt)
            and can_flow_to(answer.fetched.label, default.label)
            and type_of_ground(answer.fetched.value) == t.ty
        ):
            result = tm.LabeledLit(answer.fetched.label, answer.fetched.value)
        else:
            result = tm.LabeledLit(default.label, default.value)
        return replace(config, term=tm.LIOVal(result)), answer

    # anything else is a pure reduction at the computation's head
    return replace(config, term=_pure_step(t)), SKIP


def _label_value(lit: tm.Lit) -> Label:
    if not isinstance(lit.value, Label):
        raise StuckTermError(f"expected a label literal, found {tm.pretty(lit)}")
    return lit.value


def run(
    config: Configuration,
    bridge: StoreBridge,
    store_level: Label,
    max_steps: int = 1_000_000,
) -> Tuple[Configuration, List[StoreEvent]]:
    """Iterate `step` to termination; the trace keeps skip events."""
    trace: List[StoreEvent] = []
    for _ in range(max_steps):
        if config.is_terminal:
            return config, trace
        config, evt = step(config, bridge, store_level)
        trace.append(evt)
    if config.is_terminal:
        return config, trace
    raise StepBudgetExhausted(f"no terminal configuration within {max_steps} steps")


def normalize_result(config: Configuration, max_steps: int = 10_000) -> Optional[tm.Ground]:
    """Fully evaluate a terminal configuration's result if it is ground-typed."""
    if not isinstance(config.term, tm.LIOVal):
        return None
    t = config.term.body
    for _ in range(max_steps):
        if isinstance(t, tm.LabeledLit):
            return None
        g = tm.ground_of_term(t)
        if g is not None:
            return g
        try:
            t = _ground_step(t)
        except StuckTermError:
            return None
    raise StepBudgetExhausted("result normalization exceeded budget")
