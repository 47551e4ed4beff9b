"""Keystores, category keys, label-directed serialization, replay defense,
and the low-step machinery for the cryptographic store."""

from __future__ import annotations

from random import Random

import pytest

from flowstore import terms as tm
from flowstore.cryptostore import (
    CategoryKey,
    CategoryKeyError,
    DeserializeFailure,
    Keystore,
    RStoreCK,
    RStoreVal,
    RealRuntimeState,
    RealStore,
    SerializeError,
    SkipStrategy,
    Strategy,
    apply_interaction,
    authority_of,
    clearance_label,
    create_category_key,
    derived_rng,
    deserialize,
    encrypt_for_formula,
    decrypt_for_formula,
    fetch_category_key,
    gen_keystore,
    initialize_category_key,
    parse_ck_line,
    parse_entry_line,
    parse_keystore_lines,
    parse_store_lines,
    real_low_step,
    render_ck_line,
    render_entry_line,
    render_keystore_lines,
    render_store_lines,
    replay,
    serialize,
    sign_for_formula,
    start_label,
    step_meta,
    verify_for_formula,
)
from flowstore.labels import Category, Formula, can_flow_to, parse_label
from flowstore.providers import RealProvider, TestVectorProvider
from flowstore.runtime import Configuration, FetchEvt, MissingEvt
from flowstore.terms import TInt, parse_term

PROV = RealProvider()


@pytest.fixture
def rng():
    return Random(2718)


@pytest.fixture
def ks(rng):
    return gen_keystore(["A", "B", "Z"], PROV, rng)


class TestKeystore:
    def test_gen_produces_all_pairs(self, ks):
        assert len(ks.keys) == 3
        assert all(kp.has_private for _, kp in ks.keys)

    def test_authority_is_owned_conjunction(self, ks):
        assert authority_of(ks) == parse_label("A∧B∧Z | A∧B∧Z | A∧B∧Z")

    def test_merge_unions_authority(self, rng):
        a = gen_keystore(["A"], PROV, rng)
        b = gen_keystore(["B"], PROV, rng)
        assert authority_of(a.merge(b)) == parse_label("A∧B | A∧B | A∧B")

    def test_merge_rejects_conflicts(self, rng):
        a = gen_keystore(["A"], PROV, rng)
        b = gen_keystore(["A"], PROV, rng)
        with pytest.raises(ValueError):
            a.merge(b)

    def test_empty_keystore_degenerate_labels(self):
        ks = Keystore.of({})
        assert start_label(ks) == parse_label("True | True | True")
        assert clearance_label(ks) == parse_label("True | True | True")

    def test_start_labels(self, ks):
        assert start_label(ks) == parse_label("True | A∧B∧Z | A∧B∧Z")
        assert clearance_label(ks) == parse_label("A∧B∧Z | True | True")
        assert can_flow_to(start_label(ks), clearance_label(ks))

    def test_public_view_loses_authority(self, ks):
        pub = ks.public_view()
        assert authority_of(pub) == parse_label("True | True | True")

    def test_duplicate_principals_rejected(self, rng):
        with pytest.raises(ValueError):
            gen_keystore(["A", "A"], PROV, rng)


class TestCategoryKeys:
    def test_create_wraps_for_every_member(self, ks, rng):
        cat = Category("AB")
        ck = create_category_key(cat, ks, PROV, rng)
        assert dict(ck.wrapped).keys() == {"A", "B"}

    def test_create_with_partial_authority(self, rng):
        # only A's private key held, category A∨B: creation must succeed
        full = gen_keystore(["A", "B"], PROV, rng)
        partial = Keystore.of(
            {p: (kp if p == "A" else kp.public_only()) for p, kp in full.keys}
        )
        ck = create_category_key(Category("AB"), partial, PROV, rng)
        assert ck.category == Category("AB")

    def test_create_without_authority_fails(self, rng):
        full = gen_keystore(["A", "B"], PROV, rng)
        none = full.public_view()
        with pytest.raises(CategoryKeyError):
            create_category_key(Category("AB"), none, PROV, rng)

    def test_create_unknown_member_fails(self, ks, rng):
        with pytest.raises(CategoryKeyError):
            create_category_key(Category(["A", "Mystery"]), ks, PROV, rng)

    def test_initialize_is_idempotent(self, ks, rng):
        store = RealStore()
        ck1, inter1 = initialize_category_key(store, Category("A"), ks, PROV, rng)
        ck2, inter2 = initialize_category_key(store, Category("A"), ks, PROV, rng)
        assert ck1 == ck2
        assert len(inter1) == 1 and inter2 == []

    def test_member_unwraps_private(self, ks, rng):
        store = RealStore()
        initialize_category_key(store, Category("AB"), ks, PROV, rng)
        public, private = fetch_category_key(store, Category("AB"), ks, PROV)
        assert private is not None

    def test_non_member_gets_public_only(self, ks, rng):
        store = RealStore()
        initialize_category_key(store, Category("AB"), ks, PROV, rng)
        outsider = Keystore.of(
            {p: (kp.public_only() if p in ("A", "B") else kp) for p, kp in ks.keys}
        )
        public, private = fetch_category_key(store, Category("AB"), outsider, PROV)
        assert private is None and public

    def test_tampered_signature_unverifiable(self, ks, rng):
        store = RealStore()
        ck, _ = initialize_category_key(store, Category("AB"), ks, PROV, rng)
        bad_sig = bytes([ck.signature[0] ^ 1]) + ck.signature[1:]
        store.category_keys[Category("AB")] = CategoryKey(
            ck.category, ck.public, ck.wrapped, bad_sig
        )
        with pytest.raises(CategoryKeyError):
            fetch_category_key(store, Category("AB"), ks, PROV)
        # an authorized keystore re-creates it
        fresh, inter = initialize_category_key(store, Category("AB"), ks, PROV, rng)
        assert fresh != ck and len(inter) == 1

    def test_outsider_resign_rejected(self, ks, rng):
        # an adversary (Z) re-signs a category key for A∨B with its own key
        store = RealStore()
        ck, _ = initialize_category_key(store, Category("AB"), ks, PROV, rng)
        z_pair = dict(ks.keys)["Z"]
        forged_sig = PROV.sign(z_pair.private, ck.signed_message(), rng)
        store.category_keys[Category("AB")] = CategoryKey(
            ck.category, ck.public, ck.wrapped, forged_sig
        )
        outsider_view = Keystore.of(
            {p: (kp.public_only() if p != "Z" else kp) for p, kp in ks.keys}
        )
        with pytest.raises(CategoryKeyError):
            fetch_category_key(store, Category("AB"), outsider_view, PROV)

    def test_missing_key_error(self, ks):
        with pytest.raises(CategoryKeyError):
            fetch_category_key(RealStore(), Category("A"), ks, PROV)


class TestFormulaCrypto:
    def test_true_formula_no_layers(self, ks, rng):
        store = RealStore()
        ct, inter = encrypt_for_formula(store, Formula.true(), b"open", ks, PROV, rng)
        assert ct == b"open" and inter == []

    def test_layer_count_equals_category_count(self, ks, rng):
        store = RealStore()
        conf = parse_label("A ∧ B ∧ Z | True | True").conf
        assert len(conf.categories()) == 3
        ct, _ = encrypt_for_formula(store, conf, b"x", ks, PROV, rng)
        assert len(ct) == 1 + 3 * PROV.ciphertext_overhead

    def test_onion_roundtrip(self, ks, rng):
        store = RealStore()
        conf = parse_label("A ∧ B∨Z | True | True").conf
        ct, _ = encrypt_for_formula(store, conf, b"layered", ks, PROV, rng)
        assert decrypt_for_formula(store, conf, ct, ks, PROV) == b"layered"

    def test_false_conf_rejected(self, ks, rng):
        with pytest.raises(SerializeError):
            encrypt_for_formula(RealStore(), Formula.false(), b"x", ks, PROV, rng)

    def test_sign_true_formula_empty(self, ks, rng):
        sigs, inter = sign_for_formula(RealStore(), Formula.true(), b"m", ks, PROV, rng)
        assert sigs == [] and inter == []

    def test_one_signature_per_category(self, ks, rng):
        store = RealStore()
        integ = parse_label("True | A ∧ B | True").integ
        sigs, _ = sign_for_formula(store, integ, b"m", ks, PROV, rng)
        assert len(sigs) == 2
        assert verify_for_formula(store, integ, b"m", sigs, ks, PROV)

    def test_dropped_signature_fails_verify(self, ks, rng):
        store = RealStore()
        integ = parse_label("True | A ∧ B | True").integ
        sigs, _ = sign_for_formula(store, integ, b"m", ks, PROV, rng)
        assert not verify_for_formula(store, integ, b"m", sigs[:1], ks, PROV)

    def test_sign_without_authority_fails(self, ks, rng):
        no_b = Keystore.of(
            {p: (kp.public_only() if p == "B" else kp) for p, kp in ks.keys}
        )
        # creating the category key already needs a member private key
        with pytest.raises((SerializeError, CategoryKeyError)):
            sign_for_formula(RealStore(), Formula.of("B"), b"m", no_b, PROV, rng)
        # with an existing key but no wrap we can open, signing fails too
        store = RealStore()
        initialize_category_key(store, Category("B"), ks, PROV, rng)
        with pytest.raises(SerializeError):
            sign_for_formula(store, Formula.of("B"), b"m", no_b, PROV, rng)


class TestSerialize:
    def test_roundtrip(self, ks, rng):
        store = RealStore()
        label = parse_label("A∨B | A | Z")
        inter, ct = serialize(store, label, tm.GroundPair(1, "x"), "key", 3, ks, PROV, rng)
        value, key, version = deserialize(store, label, ct, None, ks, PROV)
        assert (value, key, version) == (tm.GroundPair(1, "x"), "key", 3)

    def test_public_label_plaintext_with_empty_signatures(self, ks, rng):
        store = RealStore()
        label = parse_label("True | True | True")
        inter, ct = serialize(store, label, 5, "k", 1, ks, PROV, rng)
        assert inter == []
        from flowstore.encoding import encode_payload

        assert ct == encode_payload(5, "k", 1)

    def test_equal_length_payloads_equal_ciphertexts(self, ks, rng):
        store = RealStore()
        label = parse_label("A | A | Z")
        _, ct1 = serialize(store, label, 1111, "k", 1, ks, PROV, rng)
        _, ct2 = serialize(store, label, 2222, "k", 1, ks, PROV, rng)
        assert len(ct1) == len(ct2)

    def test_bit_flip_fails(self, ks, rng):
        store = RealStore()
        label = parse_label("A | A | Z")
        _, ct = serialize(store, label, 7, "k", 1, ks, PROV, rng)
        broken = bytearray(ct)
        broken[5] ^= 0x20
        with pytest.raises(DeserializeFailure):
            deserialize(store, label, bytes(broken), None, ks, PROV)

    def test_wrong_type_fails(self, ks, rng):
        store = RealStore()
        label = parse_label("A | A | Z")
        _, ct = serialize(store, label, 7, "k", 1, ks, PROV, rng)
        from flowstore.terms import TText

        with pytest.raises(DeserializeFailure):
            deserialize(store, label, ct, TText(), ks, PROV)
        assert deserialize(store, label, ct, TInt(), ks, PROV)[0] == 7

    def test_interactions_replay_to_live_store(self, ks, rng):
        store = RealStore()
        label = parse_label("A ∧ B∨Z | A | Z")
        inter, ct = serialize(store, label, 7, "k", 1, ks, PROV, rng)
        rebuilt = replay(inter + [RStoreVal("k", label, ct)])
        assert rebuilt.category_keys == store.category_keys
        assert rebuilt.lookup("k") == (label, ct)


def make_state(src: str, ks, seed: int = 5) -> RealRuntimeState:
    term = parse_term(src)
    return RealRuntimeState(
        config=Configuration(start_label(ks), clearance_label(ks), term),
        keystore=ks,
        store_level=authority_of(ks),
        provider=PROV,
        rng=derived_rng(seed, "test"),
    )


def drive(state: RealRuntimeState, max_steps: int = 200) -> RealRuntimeState:
    from flowstore.cryptostore import real_store_step

    for _ in range(max_steps):
        if state.config.is_terminal:
            return state
        state = real_store_step(state)
    raise AssertionError("did not terminate")


class TestRealStoreStep:
    def test_versions_increment(self, ks):
        src = (
            "bind (label ⟨A | A | Z⟩ 1) (λv. "
            'bind (store "k" v) (λu. '
            "bind (label ⟨A | A | Z⟩ 2) (λw. "
            'store "k" w)))'
        )
        state = drive(make_state(src, ks))
        from flowstore.encoding import encode_ground

        assert state.versions[encode_ground("k")] == 2
        vals = [i for i in state.history if isinstance(i, RStoreVal)]
        assert len(vals) == 2

    def test_fetch_roundtrip_through_store(self, ks):
        src = (
            "bind (label ⟨A | A | Z⟩ 11) (λv. "
            'bind (store "cell" v) (λu. '
            'bind (fetch[Int] "cell" v) (λr. return r)))'
        )
        state = drive(make_state(src, ks))
        assert state.config.term == tm.LIOVal(
            tm.LabeledLit(parse_label("A | A | Z"), 11)
        )
        assert any(isinstance(e, FetchEvt) for e in state.events)

    def test_rollback_to_old_version_defaults(self, ks):
        # store v1, store v2, adversary re-inserts the v1 ciphertext, fetch
        src1 = (
            "bind (label ⟨A | A | Z⟩ 1) (λv. "
            'bind (store "k" v) (λu. '
            "bind (label ⟨A | A | Z⟩ 2) (λw. "
            'bind (store "k" w) (λx. '
            'bind (fetch[Int] "k" v) (λy. return y)))))'
        )
        state = make_state(src1, ks)
        # run until both stores have happened
        while sum(isinstance(i, RStoreVal) for i in state.history) < 2:
            from flowstore.cryptostore import real_store_step

            state = real_store_step(state)
        old = next(i for i in state.history if isinstance(i, RStoreVal))
        state.history.append(old)  # rollback: re-insert version 1
        state = drive(state)
        # fetch must give the default (payload 1 from v), not the stale value,
        # and must mark the miss
        assert any(isinstance(e, MissingEvt) for e in state.events)

    def test_cross_key_swap_defaults(self, ks):
        src = (
            "bind (label ⟨A | A | Z⟩ 5) (λv. "
            'bind (store "origin" v) (λu. '
            'bind (fetch[Int] "moved" v) (λr. return r)))'
        )
        state = make_state(src, ks)
        while not any(isinstance(i, RStoreVal) for i in state.history):
            from flowstore.cryptostore import real_store_step

            state = real_store_step(state)
        stored = next(i for i in state.history if isinstance(i, RStoreVal))
        state.history.append(RStoreVal("moved", stored.label, stored.ciphertext))
        state = drive(state)
        assert any(isinstance(e, MissingEvt) for e in state.events)


class TestLowStepsAndStepMeta:
    def test_skip_strategy_is_plain_low_step(self, ks):
        src = 'bind (label ⟨A | A | Z⟩ 3) (λv. store "k" v)'
        a = step_meta(
            Configuration(start_label(ks), clearance_label(ks), parse_term(src)),
            SkipStrategy(), 4, ks, authority_of(ks), PROV, seed=44,
        )
        assert any(isinstance(i, RStoreVal) for i in a.history)

    def test_step_meta_deterministic(self, ks):
        src = 'bind (label ⟨A | A | Z⟩ 3) (λv. store "k" v)'
        cfg = Configuration(start_label(ks), clearance_label(ks), parse_term(src))
        a = step_meta(cfg, SkipStrategy(), 4, ks, authority_of(ks), PROV, seed=44)
        b = step_meta(cfg, SkipStrategy(), 4, ks, authority_of(ks), PROV, seed=44)
        assert a.history == b.history
        assert a.config == b.config

    def test_step_meta_zero_steps(self, ks):
        cfg = Configuration(start_label(ks), clearance_label(ks), parse_term("return 1"))
        state = step_meta(cfg, SkipStrategy(), 0, ks, authority_of(ks), PROV, seed=1)
        assert state.history == [] and not state.config.is_terminal

    def test_corrupting_strategy_forces_default(self, ks):
        class Corruptor(Strategy):
            name = "corruptor"

            def next(self, history, rng):
                out = []
                for i in history:
                    if isinstance(i, RStoreVal) and not any(
                        isinstance(j, RStoreVal)
                        and j.key == i.key
                        and j.ciphertext != i.ciphertext
                        for j in history
                    ):
                        broken = bytearray(i.ciphertext)
                        broken[0] ^= 0xFF
                        out.append(RStoreVal(i.key, i.label, bytes(broken)))
                return out[:1]

        src = (
            "bind (label ⟨A | A | Z⟩ 9) (λv. "
            'bind (store "k" v) (λu. '
            'bind (fetch[Int] "k" v) (λr. return r)))'
        )
        cfg = Configuration(start_label(ks), clearance_label(ks), parse_term(src))
        state = step_meta(cfg, Corruptor(), 10, ks, authority_of(ks), PROV, seed=3)
        assert any(isinstance(e, MissingEvt) for e in state.events)

    def test_low_step_shortfall(self, ks):
        from flowstore.cryptostore import LowStepShortfall

        cfg = Configuration(start_label(ks), clearance_label(ks), parse_term("return 1"))
        with pytest.raises(LowStepShortfall):
            step_meta(cfg, SkipStrategy(), 50, ks, authority_of(ks), PROV, seed=1)


class TestWireFormat:
    def test_entry_line_roundtrip(self, ks, rng):
        store = RealStore()
        label = parse_label("A∨B ∧ Z | A | Z")
        _, ct = serialize(store, label, 5, tm.GroundPair("k", 2), 1, ks, PROV, rng)
        line = render_entry_line(tm.GroundPair("k", 2), label, ct)
        key, lab, ct2 = parse_entry_line(line)
        assert (key, lab, ct2) == (tm.GroundPair("k", 2), label, ct)

    def test_ck_line_roundtrip(self, ks, rng):
        ck = create_category_key(Category("AB"), ks, PROV, rng)
        assert parse_ck_line(render_ck_line(ck)) == ck

    def test_store_lines_roundtrip(self, ks, rng):
        store = RealStore()
        label = parse_label("A | A∨B | Z")
        inter, ct = serialize(store, label, "payload", "k", 1, ks, PROV, rng)
        store.put("k", label, ct)
        rebuilt = parse_store_lines(render_store_lines(store))
        assert rebuilt.entries == store.entries
        assert rebuilt.category_keys == store.category_keys

    def test_keystore_lines_roundtrip(self, ks):
        assert parse_keystore_lines(render_keystore_lines(ks)) == ks

    def test_keystore_public_only_records(self, ks):
        pub = ks.public_view()
        lines = render_keystore_lines(pub)
        assert all(len(l.split(" ")) == 2 for l in lines)
        assert parse_keystore_lines(lines) == pub
