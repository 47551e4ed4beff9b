"""The cryptographic store: keystores, category keys, label-directed
serialization with replay protection, and the low-step machinery with
adversary strategies.

Confidentiality formulas direct layered ("onion") encryption, one layer per
category, first canonical category outermost.  Integrity formulas direct
signing, one signature per category in canonical order, all of which must
verify.  Every serialized payload binds the stored value, its key, and a
per-key version counter, which defeats swap, rollback and re-insertion
attacks.

The live store is never materialized as state of the runtime: it is the
result of replaying the full interaction history (runtime plus adversary)
over the initial store.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from random import Random
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from . import terms as tm
from .encoding import (
    DecodeError,
    append_signatures,
    b64,
    decode_ground,
    decode_payload,
    encode_ground,
    encode_payload,
    split_signatures,
    unb64,
)
from .labels import (
    Category,
    Formula,
    Label,
    LabelSyntaxError,
    Principal,
    parse_label,
)
from .providers import CryptoFailure, CryptoProvider, KeyPair
from .runtime import (
    Configuration,
    FetchEvt,
    LabeledGround,
    MissingEvt,
    StoreBridge,
    StoreEvent,
    is_low_config,
    step,
)
from .terms import Type, type_of_ground


class CategoryKeyError(Exception):
    pass


class SerializeError(Exception):
    pass


class DeserializeFailure(Exception):
    """Single opaque failure; decrypt, verify, decode and type failures are
    deliberately indistinguishable."""


# --- keystores ---------------------------------------------------------------


@dataclass(frozen=True)
class Keystore:
    """Principal name -> key pair.  Private halves may be absent."""

    keys: Tuple[Tuple[Principal, KeyPair], ...]

    @staticmethod
    def of(mapping: Dict[Principal, KeyPair]) -> "Keystore":
        return Keystore(tuple(sorted(mapping.items())))

    def mapping(self) -> Dict[Principal, KeyPair]:
        return dict(self.keys)

    def get(self, p: Principal) -> Optional[KeyPair]:
        return self.mapping().get(Principal(p))

    def owned(self) -> List[Principal]:
        return [p for p, kp in self.keys if kp.has_private]

    def merge(self, other: "Keystore") -> "Keystore":
        ours, theirs = self.mapping(), other.mapping()
        overlap = set(ours) & set(theirs)
        clashes = {p for p in overlap if ours[p] != theirs[p]}
        if clashes:
            raise ValueError(f"keystores disagree on principals {sorted(clashes)}")
        ours.update(theirs)
        return Keystore.of(ours)

    def public_view(self) -> "Keystore":
        return Keystore.of({p: kp.public_only() for p, kp in self.keys})


def gen_keystore(
    principals: Iterable[str], provider: CryptoProvider, rng: Random
) -> Keystore:
    names = [Principal(p) for p in principals]
    if len(set(names)) != len(names):
        raise ValueError("duplicate principals")
    return Keystore.of({p: provider.gen(rng) for p in sorted(names)})


def _owned_conjunction(ks: Keystore) -> Formula:
    return Formula.of(*[[p] for p in ks.owned()])


def authority_of(ks: Keystore) -> Label:
    owned = _owned_conjunction(ks)
    return Label(owned, owned, owned)


def start_label(ks: Keystore) -> Label:
    """Most public, trusted and available label the keystore justifies."""
    owned = _owned_conjunction(ks)
    return Label(Formula.true(), owned, owned)


def clearance_label(ks: Keystore) -> Label:
    """Least restrictive clearance: the most confidential data the keystore
    can read, with no trust or availability demands."""
    owned = _owned_conjunction(ks)
    return Label(owned, Formula.true(), Formula.true())


# --- category keys and the real store ----------------------------------------


@dataclass(frozen=True)
class CategoryKey:
    category: Category
    public: bytes
    wrapped: Tuple[Tuple[Principal, bytes], ...]  # member -> encrypted private
    signature: bytes

    def signed_message(self) -> bytes:
        return ck_signed_message(self.public, self.wrapped)


def ck_signed_message(public: bytes, wrapped: Tuple[Tuple[Principal, bytes], ...]) -> bytes:
    parts = [len(public).to_bytes(8, "big"), public]
    for name, blob in sorted(wrapped):
        raw = name.encode("utf-8")
        parts.append(len(raw).to_bytes(8, "big"))
        parts.append(raw)
        parts.append(len(blob).to_bytes(8, "big"))
        parts.append(blob)
    return b"".join(parts)


@dataclass
class RealStore:
    """Byte-level store contents: labeled ciphertexts plus category keys."""

    entries: Dict[bytes, Tuple[tm.Ground, Label, bytes]] = field(default_factory=dict)
    category_keys: Dict[Category, CategoryKey] = field(default_factory=dict)

    def copy(self) -> "RealStore":
        return RealStore(dict(self.entries), dict(self.category_keys))

    def put(self, key: tm.Ground, label: Label, ciphertext: bytes) -> None:
        self.entries[encode_ground(key)] = (key, label, ciphertext)

    def lookup(self, key: tm.Ground) -> Optional[Tuple[Label, bytes]]:
        hit = self.entries.get(encode_ground(key))
        return (hit[1], hit[2]) if hit else None


@dataclass(frozen=True)
class RSkip:
    pass


@dataclass(frozen=True)
class RStoreCK:
    category: Category
    key: CategoryKey


@dataclass(frozen=True)
class RStoreVal:
    key: tm.Ground
    label: Label
    ciphertext: bytes


RealInteraction = Union[RSkip, RStoreCK, RStoreVal]

R_SKIP = RSkip()


def apply_interaction(store: RealStore, interaction: RealInteraction) -> None:
    if isinstance(interaction, RSkip):
        return
    if isinstance(interaction, RStoreCK):
        store.category_keys[interaction.category] = interaction.key
        return
    if isinstance(interaction, RStoreVal):
        store.put(interaction.key, interaction.label, interaction.ciphertext)
        return
    raise TypeError(f"unknown interaction {interaction!r}")


def replay(
    history: Sequence[RealInteraction], base: Optional[RealStore] = None
) -> RealStore:
    store = base.copy() if base is not None else RealStore()
    for interaction in history:
        apply_interaction(store, interaction)
    return store


# --- category key management ---------------------------------------------------


def create_category_key(
    cat: Category, ks: Keystore, provider: CryptoProvider, rng: Random
) -> CategoryKey:
    keys = ks.mapping()
    owned = sorted(p for p in cat.members if p in keys and keys[p].has_private)
    if not owned:
        raise CategoryKeyError(
            f"cannot create key for {cat.text}: no member private key held"
        )
    missing = sorted(p for p in cat.members if p not in keys)
    if missing:
        raise CategoryKeyError(
            f"cannot create key for {cat.text}: unknown member public keys {missing}"
        )
    pair = provider.gen(rng)
    wrapped = tuple(
        (p, provider.enc(keys[p].public, pair.private, rng))
        for p in sorted(cat.members)
    )
    message = ck_signed_message(pair.public, wrapped)
    signer = keys[owned[0]]
    signature = provider.sign(signer.private, message, rng)
    return CategoryKey(cat, pair.public, wrapped, signature)


def verify_category_key(
    ck: CategoryKey, ks: Keystore, provider: CryptoProvider
) -> bool:
    """The key must be vouched for by some member of the category."""
    keys = ks.mapping()
    message = ck.signed_message()
    for member in sorted(ck.category.members):
        pair = keys.get(member)
        if pair is not None and provider.verify(pair.public, message, ck.signature):
            return True
    return False


def fetch_category_key(
    store: RealStore, cat: Category, ks: Keystore, provider: CryptoProvider
) -> Tuple[bytes, Optional[bytes]]:
    """Verified public part plus the private part when a member key is held."""
    ck = store.category_keys.get(cat)
    if ck is None:
        raise CategoryKeyError(f"no category key stored for {cat.text}")
    if not verify_category_key(ck, ks, provider):
        raise CategoryKeyError(f"unverifiable category key for {cat.text}")
    keys = ks.mapping()
    wrapped = dict(ck.wrapped)
    for member in sorted(cat.members):
        pair = keys.get(member)
        if pair is None or not pair.has_private or member not in wrapped:
            continue
        try:
            return ck.public, provider.dec(pair.private, wrapped[member])
        except CryptoFailure:
            continue
    return ck.public, None


def initialize_category_key(
    store: RealStore,
    cat: Category,
    ks: Keystore,
    provider: CryptoProvider,
    rng: Random,
) -> Tuple[CategoryKey, List[RealInteraction]]:
    """Return the stored verified key, or create, store and return a fresh one.

    An unverifiable stored key is replaced when this keystore is authorized to
    re-create it, and rejected otherwise.
    """
    existing = store.category_keys.get(cat)
    if existing is not None and verify_category_key(existing, ks, provider):
        return existing, []
    if existing is not None:
        owned = [p for p in cat.members if (kp := ks.get(p)) and kp.has_private]
        if not owned:
            raise CategoryKeyError(f"unverifiable category key for {cat.text}")
    ck = create_category_key(cat, ks, provider, rng)
    store.category_keys[cat] = ck
    return ck, [RStoreCK(cat, ck)]


# --- label-directed encryption and signing -------------------------------------


def encrypt_for_formula(
    store: RealStore,
    conf: Formula,
    payload: bytes,
    ks: Keystore,
    provider: CryptoProvider,
    rng: Random,
) -> Tuple[bytes, List[RealInteraction]]:
    if conf.is_false:
        raise SerializeError("cannot encrypt for the constant False")
    interactions: List[RealInteraction] = []
    ciphertext = payload
    # first canonical category must end up outermost, so wrap in reverse
    for cat in reversed(conf.categories()):
        ck, created = initialize_category_key(store, cat, ks, provider, rng)
        interactions.extend(created)
        ciphertext = provider.enc(ck.public, ciphertext, rng)
    return ciphertext, interactions


def decrypt_for_formula(
    store: RealStore,
    conf: Formula,
    ciphertext: bytes,
    ks: Keystore,
    provider: CryptoProvider,
) -> bytes:
    if conf.is_false:
        raise DeserializeFailure("confidentiality False")
    data = ciphertext
    for cat in conf.categories():
        try:
            _, private = fetch_category_key(store, cat, ks, provider)
        except CategoryKeyError as exc:
            raise DeserializeFailure(str(exc)) from exc
        if private is None:
            raise DeserializeFailure(f"no authority to decrypt {cat.text}")
        try:
            data = provider.dec(private, data)
        except CryptoFailure as exc:
            raise DeserializeFailure(str(exc)) from exc
    return data


def sign_for_formula(
    store: RealStore,
    integ: Formula,
    message: bytes,
    ks: Keystore,
    provider: CryptoProvider,
    rng: Random,
) -> Tuple[List[bytes], List[RealInteraction]]:
    if integ.is_false:
        raise SerializeError("cannot sign for the constant False")
    signatures: List[bytes] = []
    interactions: List[RealInteraction] = []
    for cat in integ.categories():
        _, created = initialize_category_key(store, cat, ks, provider, rng)
        interactions.extend(created)
        _, private = fetch_category_key(store, cat, ks, provider)
        if private is None:
            raise SerializeError(f"missing signing authority for {cat.text}")
        signatures.append(provider.sign(private, message, rng))
    return signatures, interactions


def verify_for_formula(
    store: RealStore,
    integ: Formula,
    message: bytes,
    signatures: Sequence[bytes],
    ks: Keystore,
    provider: CryptoProvider,
) -> bool:
    if integ.is_false:
        return False
    cats = integ.categories()
    if len(signatures) != len(cats):
        return False
    for cat, sig in zip(cats, signatures):
        try:
            public, _ = fetch_category_key(store, cat, ks, provider)
        except CategoryKeyError:
            return False
        if not provider.verify(public, message, sig):
            return False
    return True


# --- serialization ----------------------------------------------------------------


def serialize(
    store: RealStore,
    label: Label,
    value: tm.Ground,
    key: tm.Ground,
    version: int,
    ks: Keystore,
    provider: CryptoProvider,
    rng: Random,
) -> Tuple[List[RealInteraction], bytes]:
    """Sign per the integrity formula, then encrypt payload plus signatures
    per the confidentiality formula.  Mutates `store` with any category keys
    created and returns those interactions in creation order."""
    if not tm.is_ground_value(value):
        raise SerializeError("only ground values serialize")
    message = encode_payload(value, key, version)
    signatures, sign_inter = sign_for_formula(
        store, label.integ, message, ks, provider, rng
    )
    blob = append_signatures(message, signatures)
    ciphertext, enc_inter = encrypt_for_formula(
        store, label.conf, blob, ks, provider, rng
    )
    return sign_inter + enc_inter, ciphertext


def deserialize(
    store: RealStore,
    label: Label,
    ciphertext: bytes,
    ty: Optional[Type],
    ks: Keystore,
    provider: CryptoProvider,
) -> Tuple[tm.Ground, tm.Ground, int]:
    """Inverse of serialize: (value, recorded key, version) or a single
    opaque :class:`DeserializeFailure`."""
    if label.integ.is_false:
        raise DeserializeFailure("integrity False")
    blob = decrypt_for_formula(store, label.conf, ciphertext, ks, provider)
    n_sigs = len(label.integ.categories())
    try:
        message, signatures = split_signatures(blob, n_sigs)
        value, key, version, _ = decode_payload(message)
    except DecodeError as exc:
        raise DeserializeFailure(f"payload decode: {exc}") from exc
    if not verify_for_formula(store, label.integ, message, signatures, ks, provider):
        raise DeserializeFailure("signature verification failed")
    if ty is not None and type_of_ground(value) != ty:
        raise DeserializeFailure("type mismatch")
    return value, key, version


# --- the real runtime state ---------------------------------------------------------


class Strategy:
    """Adversary store-mutation policy, invoked before every low step with the
    full interaction history.  Must be a pure function of its inputs."""

    name: str = "abstract"

    def next(
        self, history: Sequence[RealInteraction], rng: Random
    ) -> List[RealInteraction]:
        raise NotImplementedError


class SkipStrategy(Strategy):
    name = "skip"

    def next(self, history, rng):
        return []


class StrategyOutputCapExceeded(Exception):
    pass


class LowStepShortfall(Exception):
    pass


class HighSectionDiverged(Exception):
    pass


STRATEGY_OUTPUT_CAP = 256


@dataclass
class RealRuntimeState:
    """One execution against the cryptographic store.

    The live store is always ``replay(history, base_store)``; `versions` is
    this runtime's last-seen version per key.
    """

    config: Configuration
    keystore: Keystore
    store_level: Label
    provider: CryptoProvider
    rng: Random
    history: List[RealInteraction] = field(default_factory=list)
    versions: Dict[bytes, int] = field(default_factory=dict)
    base_store: RealStore = field(default_factory=RealStore)
    events: List[StoreEvent] = field(default_factory=list)
    high_budget: int = 1_000_000

    def current_store(self) -> RealStore:
        return replay(self.history, self.base_store)

    @property
    def is_low(self) -> bool:
        return is_low_config(self.config, self.store_level)


class _RealBridge(StoreBridge):
    def __init__(self, state: RealRuntimeState) -> None:
        self.state = state

    def on_store(self, key: tm.Ground, value: LabeledGround) -> None:
        state = self.state
        kb = encode_ground(key)
        version = state.versions.get(kb, 0) + 1
        state.versions[kb] = version
        store = state.current_store()
        interactions, ciphertext = serialize(
            store, value.label, value.value, key, version,
            state.keystore, state.provider, state.rng,
        )
        state.history.extend(interactions)
        state.history.append(RStoreVal(key, value.label, ciphertext))

    def on_fetch(self, key: tm.Ground, default: LabeledGround, ty: Type):
        state = self.state
        store = state.current_store()
        hit = store.lookup(key)
        if hit is None:
            return MissingEvt(key)
        label, ciphertext = hit
        try:
            value, recorded_key, version = deserialize(
                store, label, ciphertext, ty, state.keystore, state.provider
            )
        except DeserializeFailure:
            return MissingEvt(key)
        kb = encode_ground(key)
        last_seen = state.versions.get(kb, 0)
        if recorded_key != key or version < last_seen:
            # replay, rollback or swap attempt: treated as missing, and the
            # version map is left unchanged
            return MissingEvt(key)
        state.versions[kb] = max(last_seen, version)
        return FetchEvt(key, LabeledGround(label, value))


def real_store_step(state: RealRuntimeState) -> RealRuntimeState:
    """One monitor step against the replayed store; mutates and returns state."""
    bridge = _RealBridge(state)
    config, evt = step(state.config, bridge, state.store_level)
    state.config = config
    state.events.append(evt)
    return state


def real_low_step(
    state: RealRuntimeState, strategy: Strategy, rng: Random
) -> RealRuntimeState:
    """Adversary interactions first, then drive through exactly one low step."""
    if not state.is_low:
        raise LowStepShortfall("low step requested from a high configuration")
    if state.config.is_terminal:
        raise LowStepShortfall("program already terminated")
    produced = strategy.next(tuple(state.history), rng)
    if len(produced) > STRATEGY_OUTPUT_CAP:
        raise StrategyOutputCapExceeded(
            f"strategy produced {len(produced)} interactions (cap {STRATEGY_OUTPUT_CAP})"
        )
    state.history.extend(produced)
    state = real_store_step(state)
    budget = state.high_budget
    while not state.is_low:
        if state.config.is_terminal:
            raise HighSectionDiverged("program terminated inside a high section")
        if budget <= 0:
            raise HighSectionDiverged("diverged in high section")
        state = real_store_step(state)
        budget -= 1
    return state


def step_meta(
    initial: Configuration,
    strategy: Strategy,
    j: int,
    keystore: Keystore,
    store_level: Label,
    provider: CryptoProvider,
    seed: int,
    base_store: Optional[RealStore] = None,
) -> RealRuntimeState:
    """Exactly j low steps from `initial`; deterministic given `seed`."""
    state = RealRuntimeState(
        config=initial,
        keystore=keystore,
        store_level=store_level,
        provider=provider,
        rng=derived_rng(seed, "runtime"),
        base_store=base_store.copy() if base_store else RealStore(),
    )
    adv_rng = derived_rng(seed, "strategy")
    for i in range(j):
        if state.config.is_terminal:
            raise LowStepShortfall(f"program terminated after {i} of {j} low steps")
        state = real_low_step(state, strategy, adv_rng)
    return state


def derived_rng(seed: int, *scope: object) -> Random:
    material = repr((seed,) + scope).encode("utf-8")
    return Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))


# --- wire format -----------------------------------------------------------------


def render_entry_line(key: tm.Ground, label: Label, ciphertext: bytes) -> str:
    return f"{b64(encode_ground(key))} {label} {b64(ciphertext)}"


def parse_entry_line(line: str) -> Tuple[tm.Ground, Label, bytes]:
    parts = line.split(" ")
    if len(parts) < 3:
        raise DecodeError(f"bad entry record: {line!r}")
    key = decode_ground(unb64(parts[0]))
    ciphertext = unb64(parts[-1])
    try:
        label = parse_label(" ".join(parts[1:-1]))
    except LabelSyntaxError as exc:
        raise DecodeError(f"bad entry label: {exc}") from exc
    return key, label, ciphertext


def render_ck_line(ck: CategoryKey) -> str:
    wraps = " ".join(f"{p}={b64(w)}" for p, w in sorted(ck.wrapped))
    return f"ck: {ck.category.text} {b64(ck.public)} {wraps} {b64(ck.signature)}"


def parse_ck_line(line: str) -> CategoryKey:
    if not line.startswith("ck: "):
        raise DecodeError(f"bad category key record: {line!r}")
    parts = line[4:].split(" ")
    if len(parts) < 3:
        raise DecodeError(f"bad category key record: {line!r}")
    cat = Category(parts[0].split("∨"))
    public = unb64(parts[1])
    signature = unb64(parts[-1])
    wrapped = []
    for item in parts[2:-1]:
        name, _, blob = item.partition("=")
        if not blob:
            raise DecodeError(f"bad wrap field {item!r}")
        wrapped.append((Principal(name), unb64(blob)))
    return CategoryKey(cat, public, tuple(sorted(wrapped)), signature)


def render_store_lines(store: RealStore) -> List[str]:
    lines = [render_ck_line(store.category_keys[c]) for c in sorted(store.category_keys)]
    for kb in sorted(store.entries):
        key, label, ciphertext = store.entries[kb]
        lines.append(render_entry_line(key, label, ciphertext))
    return lines


def parse_store_lines(lines: Iterable[str]) -> RealStore:
    store = RealStore()
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("ck: "):
            ck = parse_ck_line(line)
            store.category_keys[ck.category] = ck
        else:
            key, label, ciphertext = parse_entry_line(line)
            store.put(key, label, ciphertext)
    return store


def render_keystore_lines(ks: Keystore) -> List[str]:
    lines = []
    for name, pair in ks.keys:
        if pair.has_private:
            lines.append(f"{name} {b64(pair.public)} {b64(pair.private)}")
        else:
            lines.append(f"{name} {b64(pair.public)}")
    return lines


def parse_keystore_lines(lines: Iterable[str]) -> Keystore:
    mapping: Dict[Principal, KeyPair] = {}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) not in (2, 3):
            raise DecodeError(f"bad keystore record: {line!r}")
        private = unb64(parts[2]) if len(parts) == 3 else None
        mapping[Principal(parts[0])] = KeyPair(unb64(parts[1]), private)
    return Keystore.of(mapping)
