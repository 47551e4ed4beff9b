"""Desk-scale security games and the ideal/real equivalence oracle.

* The indistinguishability game: an adversary-chosen program is run on one of
  two confidentiality-equivalent inputs while an adversary strategy mutates
  the store; fixed distinguishers then try to tell the runs apart from the
  interaction history alone.  Advantage is estimated over seeded trials.
* The leveraged-forgery game: a high-authority phase-1 run produces
  interactions; a phase-2 adversary without the target principal's key tries
  to get a *new* validly-signed high-integrity entry into the store.
* The oracle runs the plaintext reference store and the cryptographic store
  in lockstep under a shared adversary script and reports the first
  divergence, if any.

The distinguisher family is a regression tripwire, not a proof of security:
it is the fixed set below plus anything the caller plugs in.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from . import terms as tm
from .cryptostore import (
    DeserializeFailure,
    Keystore,
    RSkip,
    RStoreCK,
    RStoreVal,
    RealInteraction,
    RealRuntimeState,
    RealStore,
    SkipStrategy,
    Strategy,
    apply_interaction,
    authority_of,
    clearance_label,
    derived_rng,
    deserialize,
    gen_keystore,
    real_low_step,
    replay,
    serialize,
    start_label,
    step_meta,
)
from .encoding import encode_ground
from .ideal import (
    CORRUPTED,
    IdealCorrupt,
    IdealInteraction,
    IdealLowStepper,
    IdealStore,
    IdealStoreI,
    _Corrupted,
    ideal_low_step,
    low_equiv_term,
)
from .labels import Formula, Label, component_flow, entails, format_label
from .providers import CryptoProvider
from .runtime import Configuration, LabeledGround, MonitorFailure
from .terms import Term, TCLIO, TFun, typecheck


class InstanceError(Exception):
    """An instance violating its own preconditions; raised before any trial."""


# --- the chosen-term indistinguishability game --------------------------------


@dataclass
class CtaInstance:
    name: str
    adversary_keystore: Keystore  # the adversary's own keys, private halves held
    protected: Tuple[str, ...]  # principals given fresh keys each trial
    term: Term  # a function; applied to one of the inputs
    input0: Term
    input1: Term
    strategy: Strategy
    j: int  # low steps per run
    provider: CryptoProvider
    trials: int = 200
    seed_base: int = 0

    @property
    def store_level(self) -> Label:
        return authority_of(self.adversary_keystore)


@dataclass(frozen=True)
class CtaPublicView:
    """Everything the adversary legitimately knows when guessing."""

    adversary_keystore: Keystore
    public_keys: Keystore
    term: Term
    input0: Term
    input1: Term
    store_level: Label
    provider: CryptoProvider


def validate_cta_instance(instance: CtaInstance) -> None:
    term_ty = typecheck(instance.term)
    if not isinstance(term_ty, TFun) or not isinstance(term_ty.res, TCLIO):
        raise InstanceError(f"game term must be a function into CLIO, got {term_ty}")
    for which, inp in (("input0", instance.input0), ("input1", instance.input1)):
        got = typecheck(inp, expected=term_ty.arg)
        if got != term_ty.arg:
            raise InstanceError(f"{which} has type {got}, function takes {term_ty.arg}")
    if not low_equiv_term(instance.input0, instance.input1, instance.store_level):
        raise InstanceError(
            "inputs are not confidentiality-only low equivalent at the store level"
        )
    if instance.j < 0:
        raise InstanceError("j must be non-negative")
    # both branches must make j low steps without monitor failure
    for b in (0, 1):
        try:
            run_cta_trial(instance, b, instance.seed_base)
        except MonitorFailure as exc:
            raise InstanceError(f"branch {b} hits a monitor failure: {exc}") from exc
        except Exception as exc:
            raise InstanceError(f"branch {b} cannot take {instance.j} low steps: {exc}") from exc


def run_cta_trial(
    instance: CtaInstance, b: int, seed: int
) -> Tuple[RealInteraction, ...]:
    """One game run: fresh protected keys, j low steps, full history out."""
    protected = gen_keystore(
        instance.protected, instance.provider, derived_rng(seed, "protected", b)
    )
    keystore = instance.adversary_keystore.merge(protected)
    inp = instance.input1 if b else instance.input0
    config = Configuration(
        start_label(keystore), clearance_label(keystore), tm.App(instance.term, inp)
    )
    state = step_meta(
        config,
        instance.strategy,
        instance.j,
        keystore,
        instance.store_level,
        instance.provider,
        seed=_mix(seed, "trial", b),
    )
    return tuple(state.history)


def _mix(seed: int, *scope: object) -> int:
    material = repr((seed,) + scope).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def _view_of(instance: CtaInstance) -> CtaPublicView:
    return CtaPublicView(
        adversary_keystore=instance.adversary_keystore,
        public_keys=instance.adversary_keystore.public_view(),
        term=instance.term,
        input0=instance.input0,
        input1=instance.input1,
        store_level=instance.store_level,
        provider=instance.provider,
    )


class Distinguisher:
    """Deterministic guess from one interaction history.

    `prepare` hands over the public view of the instance before any trial;
    the defaults ignore it.
    """

    name: str = "abstract"

    def prepare(self, view: CtaPublicView) -> None:
        pass

    def guess(self, history: Sequence[RealInteraction]) -> int:
        raise NotImplementedError


def _stable_bit(material: bytes) -> int:
    return hashlib.sha256(material).digest()[0] & 1


def _interaction_bytes(inter: RealInteraction) -> bytes:
    if isinstance(inter, RStoreVal):
        return inter.ciphertext
    if isinstance(inter, RStoreCK):
        ck = inter.key
        return ck.public + b"".join(w for _, w in ck.wrapped) + ck.signature
    return b""


class HistoryLengthDistinguisher(Distinguisher):
    name = "history-length"

    def guess(self, history):
        return len(history) % 2


class LengthVectorDistinguisher(Distinguisher):
    name = "ciphertext-length-vector"

    def guess(self, history):
        vector = ",".join(
            f"{type(i).__name__}:{len(_interaction_bytes(i))}" for i in history
        )
        return _stable_bit(vector.encode())


class ByteFrequencyDistinguisher(Distinguisher):
    name = "byte-frequency"

    def guess(self, history):
        data = b"".join(_interaction_bytes(i) for i in history)
        if not data:
            return 0
        high = sum(1 for byte in data if byte >= 0x80)
        return 1 if high * 2 > len(data) else 0


class LabelSequenceDistinguisher(Distinguisher):
    name = "label-sequence"

    def guess(self, history):
        labels = []
        for inter in history:
            if isinstance(inter, RStoreVal):
                labels.append(format_label(inter.label))
            elif isinstance(inter, RStoreCK):
                labels.append(f"ck:{inter.key.category.text}")
        return _stable_bit("|".join(labels).encode())


class ReadablePlaintextDistinguisher(Distinguisher):
    """Guesses 1 when material only input1 could produce shows up anywhere the
    adversary can read: raw interaction bytes, or payloads of entries that
    deserialize under the adversary's own keystore."""

    name = "readable-plaintext"

    def __init__(self) -> None:
        self._probes: Tuple[bytes, ...] = ()
        self._view: Optional[CtaPublicView] = None

    def prepare(self, view: CtaPublicView) -> None:
        self._view = view
        atoms1 = _leaf_encodings(view.input1)
        atoms0 = _leaf_encodings(view.input0)
        self._probes = tuple(sorted(atoms1 - atoms0))

    def guess(self, history):
        if not self._probes:
            return 0
        haystack = bytearray()
        store = RealStore()
        view = self._view
        for inter in history:
            apply_interaction(store, inter)
            haystack.extend(_interaction_bytes(inter))
            if (
                view is not None
                and isinstance(inter, RStoreVal)
                and component_flow("conf", inter.label.conf, view.store_level.conf)
            ):
                try:
                    value, _, _ = deserialize(
                        store, inter.label, inter.ciphertext, None,
                        view.adversary_keystore, view.provider,
                    )
                    haystack.extend(encode_ground(value))
                except DeserializeFailure:
                    pass
        blob = bytes(haystack)
        return 1 if any(p in blob for p in self._probes) else 0


def _leaf_encodings(value_term: Term) -> Set[bytes]:
    """Canonical encodings of every ground leaf inside a value term."""
    out: Set[bytes] = set()

    def walk(t: Term) -> None:
        if isinstance(t, tm.LabeledLit):
            _ground_leaves(t.value, out)
        elif isinstance(t, tm.Lit):
            _ground_leaves(t.value, out)
        elif isinstance(t, tm.Pair):
            walk(t.first)
            walk(t.second)

    walk(value_term)
    return out


def _ground_leaves(v: tm.Ground, out: Set[bytes]) -> None:
    if isinstance(v, tm.GroundPair):
        _ground_leaves(v.first, out)
        _ground_leaves(v.second, out)
    else:
        out.add(encode_ground(v))


def builtin_distinguishers() -> List[Distinguisher]:
    return [
        HistoryLengthDistinguisher(),
        LengthVectorDistinguisher(),
        ByteFrequencyDistinguisher(),
        ReadablePlaintextDistinguisher(),
        LabelSequenceDistinguisher(),
    ]


def estimate_advantage(
    instance: CtaInstance,
    distinguisher: Distinguisher,
    histories: Optional[Dict[int, List[Tuple[RealInteraction, ...]]]] = None,
) -> Tuple[float, float]:
    """|Pr[D=1 | b=0] - Pr[D=1 | b=1]| over `trials` seeded runs per branch.

    Pass `histories` to reuse runs across distinguishers.
    """
    if instance.trials < 30:
        raise InstanceError("need at least 30 trials per branch")
    distinguisher.prepare(_view_of(instance))
    rates = []
    for b in (0, 1):
        ones = 0
        for i in range(instance.trials):
            if histories is not None:
                history = histories[b][i]
            else:
                history = run_cta_trial(instance, b, _mix(instance.seed_base, "seed", i))
            ones += 1 if distinguisher.guess(history) else 0
        rates.append(ones / instance.trials)
    p0, p1 = rates
    n = instance.trials
    stderr = math.sqrt(p0 * (1 - p0) / n + p1 * (1 - p1) / n)
    return abs(p0 - p1), stderr


def collect_histories(
    instance: CtaInstance,
) -> Dict[int, List[Tuple[RealInteraction, ...]]]:
    return {
        b: [
            run_cta_trial(instance, b, _mix(instance.seed_base, "seed", i))
            for i in range(instance.trials)
        ]
        for b in (0, 1)
    }


@dataclass
class GameReport:
    game: str
    name: str
    trials: int
    advantage: float
    stderr: float
    passed: bool
    details: List[str] = field(default_factory=list)

    def summary(self) -> Dict[str, object]:
        return {
            "game": self.game,
            "name": self.name,
            "trials": self.trials,
            "advantage": round(self.advantage, 6),
            "stderr": round(self.stderr, 6),
            "pass": self.passed,
        }

    def lines(self) -> List[str]:
        status = "PASS" if self.passed else "FAIL"
        head = (
            f"[{status}] {self.game} {self.name}: advantage={self.advantage:.4f} "
            f"stderr={self.stderr:.4f} trials={self.trials}"
        )
        return [head, *self.details, json.dumps(self.summary(), sort_keys=True)]


DEFAULT_ADVANTAGE_THRESHOLD = 0.15


def run_cta_game(
    instance: CtaInstance,
    distinguishers: Optional[Sequence[Distinguisher]] = None,
    threshold: float = DEFAULT_ADVANTAGE_THRESHOLD,
) -> List[GameReport]:
    """Validate, run trials once, and score every distinguisher against them."""
    validate_cta_instance(instance)
    family = list(distinguishers) if distinguishers is not None else builtin_distinguishers()
    histories = collect_histories(instance)
    reports = []
    for d in family:
        advantage, stderr = estimate_advantage(instance, d, histories)
        reports.append(
            GameReport(
                game="cta",
                name=f"{instance.name}/{d.name}",
                trials=instance.trials,
                advantage=advantage,
                stderr=stderr,
                passed=advantage < threshold,
            )
        )
    return reports


# --- the Values metafunction and the leveraged-forgery game --------------------


def values_of(
    history: Sequence[RealInteraction],
    keystore: Keystore,
    provider: CryptoProvider,
) -> Set[Tuple[bytes, Label, bytes]]:
    """Stored entries whose payloads deserialize correctly, with the recorded
    key matching the key they were stored under, judged against the store
    state at their point in the history."""
    store = RealStore()
    out: Set[Tuple[bytes, Label, bytes]] = set()
    for inter in history:
        apply_interaction(store, inter)
        if not isinstance(inter, RStoreVal):
            continue
        try:
            _, recorded_key, _ = deserialize(
                store, inter.label, inter.ciphertext, None, keystore, provider
            )
        except DeserializeFailure:
            continue
        if recorded_key == inter.key:
            out.add((encode_ground(inter.key), inter.label, inter.ciphertext))
    return out


Phase2Builder = Callable[
    [Tuple[RealInteraction, ...], "ForgeryView"], Tuple[Term, Strategy]
]


@dataclass(frozen=True)
class ForgeryView:
    """What the phase-2 adversary legitimately holds."""

    adversary_keystore: Keystore
    public_keys: Keystore
    store_level: Label
    target: str
    provider: CryptoProvider


@dataclass
class ForgeryInstance:
    name: str
    target: str  # the principal whose signature must not be minted
    adversary_keystore: Keystore  # P0; never holds the target's private key
    phase1_term: Term
    phase1_strategy: Strategy
    j: int
    phase2_builder: Phase2Builder
    j2: int
    target_label: Label
    provider: CryptoProvider
    trials: int = 100
    seed_base: int = 0

    def __post_init__(self) -> None:
        if not component_flow(
            "integ", self.target_label.integ, Formula.of([self.target])
        ):
            raise InstanceError(
                "target label integrity does not reach the target principal"
            )
        kp = self.adversary_keystore.get(self.target)
        if kp is not None and kp.has_private:
            raise InstanceError("adversary keystore must not hold the target's key")


@dataclass
class ForgeryResult:
    instance: str
    trials: int
    successes: int
    floor_violations: int
    monitor_failures: int

    @property
    def passed(self) -> bool:
        return self.successes == 0 and self.floor_violations == 0

    def report(self) -> GameReport:
        return GameReport(
            game="forgery",
            name=self.instance,
            trials=self.trials,
            advantage=self.successes / max(self.trials, 1),
            stderr=0.0,
            passed=self.passed,
            details=[
                f"successes={self.successes} floor_violations={self.floor_violations} "
                f"monitor_failures={self.monitor_failures}"
            ],
        )


def _high_integrity(label: Label, target: str) -> bool:
    return entails(label.integ, Formula.of([target]))


def run_forgery_game(instance: ForgeryInstance) -> ForgeryResult:
    successes = 0
    floor_violations = 0
    monitor_failures = 0
    level = authority_of(instance.adversary_keystore)
    for trial in range(instance.trials):
        seed = _mix(instance.seed_base, "forgery", trial)
        protected = gen_keystore(
            [instance.target], instance.provider, derived_rng(seed, "target-keys")
        )
        full_ks = instance.adversary_keystore.merge(protected)
        config1 = Configuration(
            start_label(full_ks), clearance_label(full_ks), instance.phase1_term
        )
        state1 = step_meta(
            config1, instance.phase1_strategy, instance.j,
            full_ks, level, instance.provider, seed=_mix(seed, "phase1"),
        )
        history1 = tuple(state1.history)
        view = ForgeryView(
            adversary_keystore=instance.adversary_keystore,
            public_keys=full_ks.public_view(),
            store_level=level,
            target=instance.target,
            provider=instance.provider,
        )
        term2, strategy2 = instance.phase2_builder(history1, view)
        # phase 2 runs with the adversary's authority only
        start2 = start_label(instance.adversary_keystore)
        state2 = RealRuntimeState(
            config=Configuration(
                start2, clearance_label(instance.adversary_keystore), term2
            ),
            keystore=instance.adversary_keystore,
            store_level=level,
            provider=instance.provider,
            rng=derived_rng(seed, "phase2-runtime"),
        )
        adv_rng = derived_rng(seed, "phase2-strategy")
        floor = start2.integ
        for _ in range(instance.j2):
            if state2.config.is_terminal:
                break
            try:
                state2 = real_low_step(state2, strategy2, adv_rng)
            except MonitorFailure:
                monitor_failures += 1
                break
            integ = state2.config.current.integ
            if entails(integ, floor) and integ != floor:
                floor_violations += 1
        values1 = values_of(history1, full_ks, instance.provider)
        values2 = values_of(tuple(state2.history), full_ks, instance.provider)
        minted = {
            entry
            for entry in values2 - values1
            if _high_integrity(entry[1], instance.target)
        }
        if minted:
            successes += 1
    return ForgeryResult(
        instance=instance.name,
        trials=instance.trials,
        successes=successes,
        floor_violations=floor_violations,
        monitor_failures=monitor_failures,
    )


# canned phase-2 adversaries ----------------------------------------------------


class _ScriptedStrategy(Strategy):
    """Emits a fixed batch before the first low step.  Phase 2 starts from an
    empty history, so "first" is recognized purely from the input."""

    def __init__(self, name: str, batch: Sequence[RealInteraction]) -> None:
        self.name = name
        self._batch = tuple(batch)

    def next(self, history, rng):
        return list(self._batch) if not history else []


def _pad_program(n: int) -> Term:
    prog: Term = tm.Ret(tm.Lit(tm.UNIT))
    for _ in range(n):
        prog = tm.Bind(prog, tm.Lam("u", None, tm.Ret(tm.Lit(tm.UNIT))))
    return prog


def _phase1_values(history, view) -> List[RStoreVal]:
    return [
        i
        for i in history
        if isinstance(i, RStoreVal) and _high_integrity(i.label, view.target)
    ]


def _phase1_cks(history) -> List[RealInteraction]:
    return [i for i in history if isinstance(i, RStoreCK)]


def verbatim_replayer(history, view) -> Tuple[Term, Strategy]:
    return _pad_program(4), _ScriptedStrategy("verbatim-replayer", list(history))


def cross_key_splicer(history, view) -> Tuple[Term, Strategy]:
    batch: List[RealInteraction] = _phase1_cks(history)
    for val in _phase1_values(history, view):
        batch.append(RStoreVal("spliced-key", val.label, val.ciphertext))
    return _pad_program(4), _ScriptedStrategy("cross-key-splicer", batch)


def version_roller(history, view) -> Tuple[Term, Strategy]:
    batch: List[RealInteraction] = list(history)
    stale = _phase1_values(history, view)
    if stale:
        batch.append(stale[0])  # re-insert the earliest version
    return _pad_program(4), _ScriptedStrategy("version-roller", batch)


def bit_flipper(history, view) -> Tuple[Term, Strategy]:
    batch: List[RealInteraction] = _phase1_cks(history)
    for val in _phase1_values(history, view):
        flipped = bytearray(val.ciphertext)
        if flipped:
            flipped[len(flipped) // 2] ^= 0x01
        batch.append(RStoreVal(val.key, val.label, bytes(flipped)))
    return _pad_program(4), _ScriptedStrategy("bit-flipper", batch)


CANNED_PHASE2: Dict[str, Phase2Builder] = {
    "replayer": verbatim_replayer,
    "splicer": cross_key_splicer,
    "roller": version_roller,
    "flipper": bit_flipper,
}


# --- ideal vs real oracle -------------------------------------------------------


@dataclass(frozen=True)
class BenignStore:
    """Authorized adversary write, expressible in both semantics."""

    key: tm.Ground
    value: LabeledGround


@dataclass(frozen=True)
class CorruptKeys:
    keys: Tuple[tm.Ground, ...]


OracleAction = object  # BenignStore | CorruptKeys


@dataclass
class OracleReport:
    steps: int
    divergence: Optional[str] = None
    divergence_step: Optional[int] = None

    @property
    def equivalent(self) -> bool:
        return self.divergence is None

    def lines(self) -> List[str]:
        if self.equivalent:
            return [f"[PASS] ideal/real oracle: {self.steps} low steps, no divergence"]
        return [
            f"[FAIL] ideal/real oracle diverged at low step {self.divergence_step}: "
            f"{self.divergence}"
        ]


def _flip_byte(data: bytes) -> bytes:
    if not data:
        return data
    out = bytearray(data)
    out[len(out) // 2] ^= 0xFF
    return bytes(out)


def ideal_real_oracle(
    program: Term,
    script: Sequence[Sequence[OracleAction]],
    j: int,
    keystore: Keystore,
    store_level: Label,
    provider: CryptoProvider,
    seed: int,
) -> OracleReport:
    """Run both semantics in lockstep for j low steps and compare."""
    typecheck(program)
    start = start_label(keystore)
    clearance = clearance_label(keystore)
    ideal = IdealLowStepper(
        Configuration(start, clearance, program), IdealStore(), store_level
    )
    real = RealRuntimeState(
        config=Configuration(start, clearance, program),
        keystore=keystore,
        store_level=store_level,
        provider=provider,
        rng=derived_rng(seed, "oracle-runtime"),
    )
    adv_rng = derived_rng(seed, "oracle-adv")
    for i in range(j):
        actions = script[i] if i < len(script) else []
        ideal_batch: List[IdealInteraction] = []
        for action in actions:
            if isinstance(action, BenignStore):
                ideal_batch.append(
                    IdealStoreI(action.key, action.value, store_level)
                )
                store_now = real.current_store()
                kb = encode_ground(action.key)
                version = real.versions.get(kb, 0) + 1
                interactions, ciphertext = serialize(
                    store_now, action.value.label, action.value.value,
                    action.key, version, keystore, provider, adv_rng,
                )
                real.history.extend(interactions)
                real.history.append(
                    RStoreVal(action.key, action.value.label, ciphertext)
                )
            elif isinstance(action, CorruptKeys):
                ideal_batch.append(IdealCorrupt(tuple(action.keys)))
                store_now = real.current_store()
                for key in action.keys:
                    hit = store_now.lookup(key)
                    if hit is not None:
                        label, ciphertext = hit
                        real.history.append(
                            RStoreVal(key, label, _flip_byte(ciphertext))
                        )
            else:
                raise InstanceError(f"unknown oracle action {action!r}")
        ideal = ideal_low_step(ideal, ideal_batch)
        real = real_low_step(real, SkipStrategy(), adv_rng)
        problem = _compare_states(ideal, real, keystore, provider)
        if problem is not None:
            return OracleReport(steps=i + 1, divergence=problem, divergence_step=i)
    return OracleReport(steps=j)


def _compare_states(
    ideal: IdealLowStepper,
    real: RealRuntimeState,
    keystore: Keystore,
    provider: CryptoProvider,
) -> Optional[str]:
    ci, cr = ideal.config, real.config
    if ci != cr:
        return (
            f"configurations differ: ideal ⟨{ci.current}; {ci.clearance}⟩ "
            f"vs real ⟨{cr.current}; {cr.clearance}⟩"
        )
    real_store = real.current_store()
    ideal_keys = set(ideal.store.entries)
    real_keys = set(real_store.entries)
    for kb in ideal_keys | real_keys:
        key_ideal = ideal.store.entries.get(kb)
        hit_real = real_store.entries.get(kb)
        if key_ideal is None:
            return f"real store has an entry the ideal store lacks: {kb!r}"
        key, entry = key_ideal
        if isinstance(entry, _Corrupted):
            if hit_real is None:
                continue  # corrupted-but-absent on the real side fetches missing too
            _, label, ciphertext = hit_real
            try:
                deserialize(real_store, label, ciphertext, None, keystore, provider)
                return f"ideal entry {key!r} is corrupted but the real entry deserializes"
            except DeserializeFailure:
                continue
        if hit_real is None:
            return f"ideal entry {key!r} missing from the real store"
        _, label, ciphertext = hit_real
        if label != entry.label:
            return f"label mismatch at {key!r}: {entry.label} vs {label}"
        try:
            value, recorded_key, _ = deserialize(
                real_store, label, ciphertext, None, keystore, provider
            )
        except DeserializeFailure as exc:
            return f"real entry at {key!r} does not deserialize: {exc}"
        if recorded_key != key or value != entry.value:
            return f"payload mismatch at {key!r}"
    return None
