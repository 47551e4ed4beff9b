"""Command-line front end: keystore generation, program execution, store
inspection, and the security games.

Exit codes: 0 success, 1 usage or validation error, 2 type error, 3 monitor
failure, 4 step budget exhausted.  Game subcommands exit 0 iff the game
passes.  All randomness flows from --seed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click

from . import suite
from .backends import FileBackend, MemoryBackend, load_store, save_store
from .cryptostore import (
    DeserializeFailure,
    Keystore,
    RStoreCK,
    RStoreVal,
    RealRuntimeState,
    SkipStrategy,
    authority_of,
    clearance_label,
    derived_rng,
    deserialize,
    gen_keystore,
    parse_keystore_lines,
    real_store_step,
    render_keystore_lines,
    start_label,
)
from .encoding import b64
from .harness import (
    CANNED_PHASE2,
    CtaInstance,
    ForgeryInstance,
    InstanceError,
    run_cta_game,
    run_forgery_game,
)
from .labels import LabelSyntaxError, can_flow_to, format_label, parse_label
from .providers import get_provider
from .runtime import Configuration, MonitorFailure, StepBudgetExhausted, normalize_result
from .terms import (
    TermSyntaxError,
    TypeCheckError,
    parse_term,
    parse_value,
    pretty,
    term_of_ground,
    typecheck,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TYPE_ERROR = 2
EXIT_MONITOR_FAILURE = 3
EXIT_BUDGET = 4

STRATEGIES = {
    "skip": SkipStrategy,
    "public-noise": suite.PublicNoiseStrategy,
}


@click.group()
def main() -> None:
    """Label-directed encrypted key-value storage runtime."""


@main.command()
@click.argument("principals", nargs=-1, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--provider", default="real", show_default=True)
@click.option("--seed", type=int, default=None, help="deterministic keys (testing)")
def keygen(principals: Sequence[str], out: str, provider: str, seed: Optional[int]) -> None:
    """Generate fresh key pairs for PRINCIPALS and write a keystore file."""
    prov = get_provider(provider)
    if seed is not None:
        rng = derived_rng(seed, "keygen")
    else:
        import random

        rng = random.Random()
    try:
        ks = gen_keystore(principals, prov, rng)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    Path(out).write_text(
        "".join(line + "\n" for line in render_keystore_lines(ks)), encoding="utf-8"
    )
    click.echo(f"wrote {len(principals)} key pairs to {out}")
    click.echo(f"authority: {format_label(authority_of(ks))}")


def _load_keystore(path: str) -> Keystore:
    try:
        return parse_keystore_lines(Path(path).read_text(encoding="utf-8").splitlines())
    except OSError as exc:
        raise click.ClickException(f"cannot read keystore {path}: {exc}")


def _digest(data: bytes, raw: bool) -> str:
    return b64(data) if raw else data[:8].hex()


def _history_lines(history, raw: bool) -> List[str]:
    lines = []
    for inter in history:
        if isinstance(inter, RStoreVal):
            lines.append(
                f"  store {inter.key!r} ⟨{format_label(inter.label)}⟩ "
                f"ct={_digest(inter.ciphertext, raw)}"
            )
        elif isinstance(inter, RStoreCK):
            lines.append(
                f"  store-ck {inter.key.category.text} pub={_digest(inter.key.public, raw)}"
            )
    return lines


@main.command()
@click.argument("program", type=click.Path(exists=True, dir_okay=False))
@click.option("--keystore", "keystore_path", type=click.Path(exists=True), required=True)
@click.option("--store", "store_path", default=":memory:", show_default=True,
              help="store file path, or :memory:")
@click.option("--store-level", "store_level_text", default=None,
              help="label text; default: the keystore's authority")
@click.option("--label", "label_text", default=None, help="initial current label")
@click.option("--clearance", "clearance_text", default=None, help="initial clearance")
@click.option("--max-steps", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--provider", default="real", show_default=True)
@click.option("--raw", is_flag=True, help="full ciphertexts instead of digests")
@click.option("--dry-type", is_flag=True, help="typecheck only, do not run")
def run(program: str, keystore_path: str, store_path: str, store_level_text: Optional[str],
        label_text: Optional[str], clearance_text: Optional[str], max_steps: int,
        seed: int, provider: str, raw: bool, dry_type: bool) -> None:
    """Typecheck and execute PROGRAM against the cryptographic store."""
    try:
        term = parse_term(Path(program).read_text(encoding="utf-8"))
    except TermSyntaxError as exc:
        click.echo(f"syntax error: {exc}", err=True)
        sys.exit(EXIT_TYPE_ERROR)
    try:
        ty = typecheck(term)
    except TypeCheckError as exc:
        click.echo(f"type error: {exc}", err=True)
        sys.exit(EXIT_TYPE_ERROR)
    click.echo(f"program type: {ty}")
    if dry_type:
        return

    ks = _load_keystore(keystore_path)
    prov = get_provider(provider)
    try:
        level = (
            parse_label(store_level_text)
            if store_level_text
            else authority_of(ks)
        )
        initial = parse_label(label_text) if label_text else start_label(ks)
        clearance = parse_label(clearance_text) if clearance_text else clearance_label(ks)
    except LabelSyntaxError as exc:
        raise click.ClickException(f"bad label: {exc}")
    if not can_flow_to(initial, clearance):
        raise click.ClickException("initial label does not flow to the clearance")

    backend = MemoryBackend() if store_path == ":memory:" else FileBackend(store_path)
    base = load_store(backend)

    state = RealRuntimeState(
        config=Configuration(initial, clearance, term),
        keystore=ks,
        store_level=level,
        provider=prov,
        rng=derived_rng(seed, "cli-run"),
        base_store=base,
    )
    steps = 0
    try:
        while not state.config.is_terminal:
            if steps >= max_steps:
                click.echo("step budget exhausted", err=True)
                sys.exit(EXIT_BUDGET)
            state = real_store_step(state)
            steps += 1
    except MonitorFailure as exc:
        click.echo(f"monitor failure: {exc}", err=True)
        sys.exit(EXIT_MONITOR_FAILURE)
    except (StepBudgetExhausted,) as exc:
        click.echo(f"{exc}", err=True)
        sys.exit(EXIT_BUDGET)

    if store_path != ":memory:":
        save_store(state.current_store(), backend)

    result = normalize_result(state.config)
    click.echo(f"final term: {pretty(state.config.term)}")
    if result is not None:
        click.echo(f"result: {pretty(term_of_ground(result))}")
    click.echo(f"final label: {format_label(state.config.current)}")
    click.echo(f"final clearance: {format_label(state.config.clearance)}")
    click.echo(f"interactions ({len(state.history)}):")
    for line in _history_lines(state.history, raw):
        click.echo(line)


@main.command()
@click.option("--store", "store_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--keystore", "keystore_path", type=click.Path(exists=True), default=None,
              help="decrypt payloads where this keystore's authority suffices")
@click.option("--provider", default="real", show_default=True)
@click.option("--raw", is_flag=True)
def dump(store_path: str, keystore_path: Optional[str], provider: str, raw: bool) -> None:
    """Print store contents: labels and digests, payloads with a keystore."""
    backend = FileBackend(store_path)
    store = load_store(backend)
    prov = get_provider(provider)
    ks = _load_keystore(keystore_path) if keystore_path else None
    for cat in sorted(store.category_keys):
        ck = store.category_keys[cat]
        click.echo(f"ck {cat.text} pub={_digest(ck.public, raw)} sig={_digest(ck.signature, raw)}")
    for kb in sorted(store.entries):
        key, label, ciphertext = store.entries[kb]
        line = f"{key!r} ⟨{format_label(label)}⟩ ct={_digest(ciphertext, raw)}"
        if ks is not None:
            try:
                value, _, version = deserialize(store, label, ciphertext, None, ks, prov)
                line += f" payload={value!r} version={version}"
            except DeserializeFailure:
                line += " payload=<no authority or invalid>"
        click.echo(line)


@main.group()
def game() -> None:
    """Run a security game from an instance description file."""


def _load_instance(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot load instance {path}: {exc}")


def _program_from(desc: dict, key: str, base: Path):
    if f"{key}_source" in desc:
        return parse_term(desc[f"{key}_source"])
    if key in desc:
        return parse_term((base / desc[key]).read_text(encoding="utf-8"))
    raise click.ClickException(f"instance needs {key!r} or {key}_source")


@game.command("cta")
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="override the instance seed")
@click.option("--trials", type=int, default=None)
@click.option("--j", type=int, default=None)
@click.option("--provider", default=None, help="override the instance provider")
@click.option("--threshold", type=float, default=0.15, show_default=True)
def game_cta(instance_file: str, seed: Optional[int], trials: Optional[int],
             j: Optional[int], provider: Optional[str], threshold: float) -> None:
    """Indistinguishability game; exits 0 iff every distinguisher stays below
    the advantage threshold."""
    desc = _load_instance(instance_file)
    base = Path(instance_file).parent
    prov = get_provider(provider or desc.get("provider", "real"))
    seed_base = seed if seed is not None else desc.get("seed", 0)
    strategy_name = desc.get("strategy", "skip")
    if strategy_name not in STRATEGIES:
        raise click.ClickException(f"unknown strategy {strategy_name!r}")
    try:
        instance = CtaInstance(
            name=desc.get("name", Path(instance_file).stem),
            adversary_keystore=gen_keystore(
                desc["adversary"], prov, derived_rng(seed_base, "adversary-keys")
            ),
            protected=tuple(desc["protected"]),
            term=_program_from(desc, "program", base),
            input0=parse_value(desc["input0"]),
            input1=parse_value(desc["input1"]),
            strategy=STRATEGIES[strategy_name](),
            j=j if j is not None else desc["j"],
            provider=prov,
            trials=trials if trials is not None else desc.get("trials", 200),
            seed_base=seed_base,
        )
        reports = run_cta_game(instance, threshold=threshold)
    except (InstanceError, TermSyntaxError, TypeCheckError, KeyError) as exc:
        click.echo(f"instance invalid: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    ok = True
    for report in reports:
        for line in report.lines():
            click.echo(line)
        ok = ok and report.passed
    sys.exit(EXIT_OK if ok else EXIT_USAGE)


@game.command("forgery")
@click.argument("instance_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--provider", default=None)
def game_forgery(instance_file: str, seed: Optional[int], trials: Optional[int],
                 provider: Optional[str]) -> None:
    """Leveraged-forgery game; exits 0 iff no forgery succeeds and the
    integrity floor holds."""
    desc = _load_instance(instance_file)
    base = Path(instance_file).parent
    prov = get_provider(provider or desc.get("provider", "real"))
    seed_base = seed if seed is not None else desc.get("seed", 0)
    phase2_names = desc.get("phase2", sorted(CANNED_PHASE2))
    ok = True
    for adv_name in phase2_names:
        if adv_name not in CANNED_PHASE2:
            raise click.ClickException(f"unknown phase-2 adversary {adv_name!r}")
        try:
            instance = ForgeryInstance(
                name=f"{desc.get('name', Path(instance_file).stem)}/{adv_name}",
                target=desc["target"],
                adversary_keystore=gen_keystore(
                    desc["adversary"], prov, derived_rng(seed_base, "adversary-keys")
                ),
                phase1_term=_program_from(desc, "phase1_program", base),
                phase1_strategy=STRATEGIES[desc.get("phase1_strategy", "skip")](),
                j=desc["j"],
                phase2_builder=CANNED_PHASE2[adv_name],
                j2=desc.get("j2", desc["j"]),
                target_label=parse_label(desc["target_label"]),
                provider=prov,
                trials=trials if trials is not None else desc.get("trials", 100),
                seed_base=seed_base,
            )
        except (InstanceError, TermSyntaxError, TypeCheckError, KeyError,
                LabelSyntaxError) as exc:
            click.echo(f"instance invalid: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        result = run_forgery_game(instance)
        for line in result.report().lines():
            click.echo(line)
        ok = ok and result.passed
    sys.exit(EXIT_OK if ok else EXIT_USAGE)


if __name__ == "__main__":
    main()
