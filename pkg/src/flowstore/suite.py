"""Shipped programs and game instances: the tax-pipeline case study, the
leak-free indistinguishability suite, the forgery suite, curated
noninterference pairs, and generated programs for the ideal/real oracle.

Secrets in the leak-free suite are equal-length by construction (integers are
fixed-width; texts are padded to matching lengths), which is the premise the
indistinguishability argument needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import terms as tm
from .cryptostore import (
    Keystore,
    RStoreVal,
    RealInteraction,
    SkipStrategy,
    Strategy,
    gen_keystore,
    derived_rng,
)
from .harness import (
    BenignStore,
    CorruptKeys,
    CtaInstance,
    ForgeryInstance,
    CANNED_PHASE2,
    OracleAction,
)
from .labels import Label, parse_label
from .providers import CryptoProvider
from .runtime import LabeledGround
from .terms import Term, parse_term, parse_value

ADVERSARY = ("Z",)
PROTECTED = ("A",)

# --- tax pipeline case study -----------------------------------------------------

CASE_STUDY_PRINCIPALS = ("C", "IRS", "P", "S")
CASE_STUDY_STORE_LEVEL = "True | True | S"

TAXPAYER_TYPE = "(Text, (Text, (Int, Text)))"
TAX_RETURN_TYPE = f"({TAXPAYER_TYPE}, Bool)"

SSN = "123-45-6789"

CUSTOMER_SOURCE = f"""-- customer: label the taxpayer record and store it
bind (label ⟨C∨IRS∨P | C | S⟩ ("alice", ("{SSN}", (50000, "bank-9"))))
     (λinfo. bind (store "taxpayer_info" info)
                  (λu. return ()))
"""

PREPARER_SOURCE = f"""-- preparer: fetch the record, prepare the return in a
-- compartment, store the result
bind (label ⟨IRS∨P | C∨P | S⟩ ("", ("", (0, ""))))
 (λdflt. bind (fetch[{TAXPAYER_TYPE}] "taxpayer_info" dflt)
  (λinfo. bind (toLabeled ⟨IRS∨P | C∨P | S⟩
                 (bind (unlabel info) (λi. return (i, true))))
   (λr. bind (store "tax_return" r)
             (λu. return ()))))
"""

IRS_SOURCE = f"""-- tax agency: fetch the return, unlabel it, audit it
bind (label ⟨IRS | C∨IRS∨P | S⟩ (("", ("", (0, ""))), false))
 (λdflt. bind (fetch[{TAX_RETURN_TYPE}] "tax_return" dflt)
  (λlv. bind (unlabel lv)
             (λtr. return (snd tr))))
"""


def case_study_sources() -> Dict[str, str]:
    return {
        "customer": CUSTOMER_SOURCE,
        "preparer": PREPARER_SOURCE,
        "irs": IRS_SOURCE,
    }


def verify_return_oracle(prepared_flag: bool = True) -> bool:
    """What the pipeline must produce, computed directly: the preparer tags
    the record with an approval flag and the agency reads that flag back."""
    taxpayer = ("alice", (SSN, (50000, "bank-9")))
    tax_return = (taxpayer, prepared_flag)
    return tax_return[1]


# --- leak-free indistinguishability suite ------------------------------------------


@dataclass
class CtaSpec:
    name: str
    term_source: str
    input0: str
    input1: str
    j: int
    strategy: Callable[[], Strategy]


class PublicNoiseStrategy(Strategy):
    """Benign adversary writing one unreadable-to-no-one junk record per step."""

    name = "public-noise"

    def next(self, history, rng):
        label = parse_label("True | True | Z")
        payload = bytes([rng.randrange(256) for _ in range(8)])
        return [RStoreVal(f"noise-{len(history)}", label, payload)]


CTA_SPECS: List[CtaSpec] = [
    CtaSpec(
        name="store-secret-int",
        term_source='λs: Labeled Int. bind (store "box" s) (λu. return ())',
        input0="{A | A | Z} 1111",
        input1="{A | A | Z} 2222",
        j=4,
        strategy=SkipStrategy,
    ),
    CtaSpec(
        # branch on the secret inside a compartment, store equal-length texts
        name="secret-branch-equal-length",
        term_source=(
            "λs: Labeled Bool. "
            "bind (toLabeled ⟨A | True | Z⟩ "
            '(bind (unlabel s) (λx. if x then return "yes!!!" else return "no????"))) '
            '(λr. bind (store "out" r) (λu. return ()))'
        ),
        input0="{A | True | Z} false",
        input1="{A | True | Z} true",
        j=6,
        strategy=SkipStrategy,
    ),
    CtaSpec(
        name="secret-pair-two-stores",
        term_source=(
            "λs: Labeled (Int, Int). "
            'bind (store "left" s) '
            "(λu. bind (label ⟨True | True | Z⟩ 42) "
            '(λpub. bind (store "right" pub) (λw. return ())))'
        ),
        input0="{A | A | Z} (1, 2)",
        input1="{A | A | Z} (3, 4)",
        j=8,
        strategy=SkipStrategy,
    ),
    CtaSpec(
        name="store-fetch-restore",
        term_source=(
            "λs: Labeled Int. "
            'bind (store "cell" s) '
            '(λu. bind (fetch[Int] "cell" s) '
            '(λv. bind (store "cell2" v) (λw. return ())))'
        ),
        input0="{A | A | Z} -7",
        input1="{A | A | Z} 7000",
        j=8,
        strategy=SkipStrategy,
    ),
    CtaSpec(
        name="secret-text-with-noise",
        term_source='λs: Labeled Text. bind (store "doc" s) (λu. return ())',
        input0='{A | A | Z} "first-secret!!"',
        input1='{A | A | Z} "other-secret.."',
        j=4,
        strategy=PublicNoiseStrategy,
    ),
    CtaSpec(
        name="no-store-pure",
        term_source=(
            "λs: Labeled Int. "
            "bind (toLabeled ⟨A | True | Z⟩ (unlabel s)) (λr. return ())"
        ),
        input0="{A | A | Z} 10",
        input1="{A | A | Z} 20",
        j=4,
        strategy=SkipStrategy,
    ),
]


def adversary_keystore(provider: CryptoProvider, seed: int = 1000) -> Keystore:
    return gen_keystore(ADVERSARY, provider, derived_rng(seed, "adversary-keys"))


def cta_instances(
    provider: CryptoProvider,
    trials: int = 200,
    seed_base: int = 2024,
    specs: Optional[Sequence[CtaSpec]] = None,
) -> List[CtaInstance]:
    p0 = adversary_keystore(provider, seed_base)
    out = []
    for spec in specs if specs is not None else CTA_SPECS:
        out.append(
            CtaInstance(
                name=spec.name,
                adversary_keystore=p0,
                protected=PROTECTED,
                term=parse_term(spec.term_source),
                input0=parse_value(spec.input0),
                input1=parse_value(spec.input1),
                strategy=spec.strategy(),
                j=spec.j,
                provider=provider,
                trials=trials,
                seed_base=seed_base,
            )
        )
    return out


# --- noninterference pairs (ideal semantics) ---------------------------------------

# each pair is (name, term source, input0, input1, j); inputs differ only in
# secret payloads, so runs must agree on every public-readable event


def noninterference_pairs() -> List[Tuple[str, str, str, str, int]]:
    pairs = [(s.name, s.term_source, s.input0, s.input1, s.j) for s in CTA_SPECS]
    pairs += [
        (
            "secret-then-public-constant",
            'λs: Labeled Int. bind (store "s" s) '
            "(λu. bind (label ⟨True | True | Z⟩ 5) "
            '(λp. bind (store "p" p) (λw. return ())))',
            "{A | A | Z} 100",
            "{A | A | Z} 200",
            8,
        ),
        (
            "secret-branch-same-public-store",
            "λs: Labeled Bool. "
            "bind (toLabeled ⟨A | True | Z⟩ "
            "(bind (unlabel s) (λx. if x then return 1 else return 2))) "
            '(λr. bind (label ⟨True | True | Z⟩ 9) (λp. bind (store "k" p) (λu. return ())))',
            "{A | True | Z} true",
            "{A | True | Z} false",
            8,
        ),
        (
            "fetch-missing-default-secret",
            'λs: Labeled Int. bind (fetch[Int] "absent" s) (λv. bind (store "out" v) (λu. return ()))',
            "{A | A | Z} 1",
            "{A | A | Z} 2",
            6,
        ),
        (
            "getlabel-public",
            "λs: Labeled Int. bind getLabel (λl. bind (label ⟨True | True | Z⟩ l) "
            '(λlv. bind (store "lab" lv) (λu. return ())))',
            "{A | A | Z} 1",
            "{A | A | Z} 2",
            8,
        ),
        (
            "pair-projection-secret",
            "λs: Labeled (Int, Bool). "
            "bind (toLabeled ⟨A | True | Z⟩ (bind (unlabel s) (λx. return (fst x)))) "
            '(λr. bind (store "fst" r) (λu. return ()))',
            "{A | A | Z} (5, true)",
            "{A | A | Z} (6, false)",
            8,
        ),
    ]
    return pairs


# --- forgery suite -------------------------------------------------------------------


@dataclass
class ForgerySpec:
    name: str
    phase1_source: str
    target_label: str
    j: int
    j2: int


FORGERY_SPECS: List[ForgerySpec] = [
    ForgerySpec(
        name="plain-high-integrity-store",
        phase1_source=(
            "bind (label ⟨True | P1 | Z⟩ 41) "
            '(λv. bind (store "hi" v) (λu. return ()))'
        ),
        target_label="True | P1 | Z",
        j=4,
        j2=4,
    ),
    ForgerySpec(
        name="encrypted-high-integrity-store",
        phase1_source=(
            "bind (label ⟨P1∨Z | P1 | Z⟩ \"signed-secret\") "
            '(λv. bind (store "vault" v) (λu. return ()))'
        ),
        target_label="P1∨Z | P1 | Z",
        j=4,
        j2=4,
    ),
    ForgerySpec(
        name="two-keys-high-integrity",
        phase1_source=(
            "bind (label ⟨True | P1 | Z⟩ (1, 2)) "
            '(λv. bind (store "k1" v) '
            "(λu. bind (label ⟨True | P1 | Z⟩ (3, 4)) "
            '(λw. bind (store "k2" w) (λx. return ()))))'
        ),
        target_label="True | P1 | Z",
        j=8,
        j2=4,
    ),
]

FORGERY_TARGET = "P1"


def forgery_instances(
    provider: CryptoProvider,
    trials: int = 100,
    seed_base: int = 5150,
    phase2: Optional[Sequence[str]] = None,
) -> List[ForgeryInstance]:
    p0 = adversary_keystore(provider, seed_base)
    names = list(phase2) if phase2 is not None else sorted(CANNED_PHASE2)
    out = []
    for spec in FORGERY_SPECS:
        for adv_name in names:
            out.append(
                ForgeryInstance(
                    name=f"{spec.name}/{adv_name}",
                    target=FORGERY_TARGET,
                    adversary_keystore=p0,
                    phase1_term=parse_term(spec.phase1_source),
                    phase1_strategy=SkipStrategy(),
                    j=spec.j,
                    phase2_builder=CANNED_PHASE2[adv_name],
                    j2=spec.j2,
                    target_label=parse_label(spec.target_label),
                    provider=provider,
                    trials=trials,
                    seed_base=seed_base,
                )
            )
    return out


# --- oracle programs -------------------------------------------------------------------


def oracle_programs() -> List[Tuple[str, str, int]]:
    """(name, closed program source, low steps) for the ideal/real oracle.

    Store level and keystore: the oracle runs with full authority over A and
    Z, store level ⟨True | Z | Z⟩-style public store owned by Z.
    """
    programs = [
        (
            "store-fetch-int",
            'bind (label ⟨A | A | Z⟩ 5) (λv. bind (store "k" v) '
            '(λu. bind (label ⟨A | A | Z⟩ 0) (λd. bind (fetch[Int] "k" d) '
            "(λr. return r))))",
            10,
        ),
        (
            "fetch-missing",
            'bind (label ⟨A | A | Z⟩ -1) (λd. bind (fetch[Int] "nope" d) (λr. return r))',
            6,
        ),
        (
            "store-overwrite",
            'bind (label ⟨True | A | Z⟩ 1) (λv. bind (store "k" v) '
            "(λu. bind (label ⟨True | A | Z⟩ 2) "
            '(λw. bind (store "k" w) (λx. return ()))))',
            10,
        ),
        (
            "compartment-store",
            "bind (label ⟨A | A | Z⟩ 10) (λs. "
            "bind (toLabeled ⟨A | True | Z⟩ (bind (unlabel s) (λx. return x))) "
            '(λr. bind (store "out" r) (λu. return ())))',
            10,
        ),
        (
            "label-value-payload",
            'bind (label ⟨True | A | Z⟩ ⟨A | A | Z⟩) (λv. bind (store "lab" v) (λu. return ()))',
            6,
        ),
        (
            "pair-payload",
            "bind (label ⟨A∨Z | A | Z⟩ ((1, true), \"x\")) "
            '(λv. bind (store "pair" v) (λu. return ()))',
            6,
        ),
        (
            "unit-payload",
            'bind (label ⟨True | True | Z⟩ ()) (λv. bind (store "u" v) (λu. return ()))',
            6,
        ),
        (
            "text-roundtrip",
            'bind (label ⟨A | A | Z⟩ "hello world") (λv. bind (store "t" v) '
            '(λu. bind (fetch[Text] "t" v) (λr. return r)))',
            10,
        ),
        (
            "two-cells",
            'bind (label ⟨A | A | Z⟩ 1) (λa. bind (store "x" a) '
            "(λu. bind (label ⟨Z | A | Z⟩ 2) "
            '(λb. bind (store "y" b) (λw. return ()))))',
            10,
        ),
        (
            "fetch-after-overwrite",
            'bind (label ⟨True | A | Z⟩ 1) (λv. bind (store "c" v) '
            "(λu. bind (label ⟨True | A | Z⟩ 2) "
            '(λw. bind (store "c" w) '
            '(λx. bind (fetch[Int] "c" v) (λr. return r)))))',
            12,
        ),
        (
            "getclearance",
            "bind getClearance (λc. return c)",
            4,
        ),
    ]
    return programs


def oracle_scripts(
    store_level: Label,
) -> Dict[str, Sequence[Sequence[OracleAction]]]:
    """Benign and corrupting adversary scripts usable with any oracle program."""
    benign_value = LabeledGround(parse_label("True | Z | Z"), 777)
    return {
        "none": [],
        "benign-store": [[BenignStore("adv-key", benign_value)], [], []],
        "corrupt-main-keys": [
            [],
            [],
            [CorruptKeys(("k", "c", "out", "t"))],
        ],
        "benign-then-corrupt": [
            [BenignStore("adv-key", benign_value)],
            [CorruptKeys(("adv-key", "k"))],
        ],
    }
