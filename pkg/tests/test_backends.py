"""Backend persistence: roundtrips, byte-exact reload, tombstones."""

from __future__ import annotations

from random import Random

import pytest

from flowstore.backends import FileBackend, MemoryBackend, load_store, save_store
from flowstore.cryptostore import (
    RealStore,
    gen_keystore,
    render_store_lines,
    serialize,
)
from flowstore.labels import parse_label
from flowstore.providers import RealProvider

PROV = RealProvider()


@pytest.fixture(params=["memory", "file"])
def backend(request, tmp_path):
    if request.param == "memory":
        return MemoryBackend()
    return FileBackend(tmp_path / "store.txt")


class TestBackendContract:
    def test_put_get_roundtrip(self, backend):
        backend.put("entry", b"k1", b"value-one")
        assert backend.get("entry", b"k1") == b"value-one"

    def test_absent_key(self, backend):
        assert backend.get("entry", b"missing") is None

    def test_last_write_wins(self, backend):
        backend.put("ck", b"cat", b"old")
        backend.put("ck", b"cat", b"new")
        assert backend.get("ck", b"cat") == b"new"

    def test_delete_then_get_absent(self, backend):
        backend.put("entry", b"k", b"v")
        backend.delete("entry", b"k")
        assert backend.get("entry", b"k") is None

    def test_namespaces_independent(self, backend):
        backend.put("entry", b"k", b"e")
        backend.put("ck", b"k", b"c")
        assert backend.get("entry", b"k") == b"e"
        assert backend.get("ck", b"k") == b"c"

    def test_unknown_namespace_rejected(self, backend):
        with pytest.raises(ValueError):
            backend.put("other", b"k", b"v")

    def test_snapshot_sorted_and_complete(self, backend):
        backend.put("entry", b"b", b"2")
        backend.put("entry", b"a", b"1")
        records = list(backend.snapshot())
        assert records == [("ck", k, v) for k, v in ()] + [
            ("entry", b"a", b"1"),
            ("entry", b"b", b"2"),
        ]


class TestFileBackend:
    def test_reload_reproduces_snapshot(self, tmp_path):
        path = tmp_path / "s.txt"
        fb = FileBackend(path)
        fb.put("entry", b"k", b"dmFsdWU= stand-in")
        fb.put("ck", "C".encode(), b"payload parts here")
        fb.delete("entry", b"k")
        fb.put("entry", b"k2", b"second")
        reloaded = FileBackend(path)
        assert list(reloaded.snapshot()) == list(fb.snapshot())

    def test_compaction_drops_tombstones(self, tmp_path):
        path = tmp_path / "s.txt"
        fb = FileBackend(path)
        fb.put("entry", b"k", b"v1")
        fb.put("entry", b"k", b"v2")
        fb.delete("entry", b"k")
        fb.put("entry", b"other", b"kept")
        assert len(path.read_text().splitlines()) == 4
        fb.compact()
        lines = path.read_text().splitlines()
        assert len(lines) == 1 and "rm:" not in lines[0]

    def test_newline_in_value_rejected(self, tmp_path):
        fb = FileBackend(tmp_path / "s.txt")
        with pytest.raises(ValueError):
            fb.put("entry", b"k", b"line1\nline2")


class TestStoreAdapters:
    def test_byte_exact_persistence(self, tmp_path):
        from flowstore.terms import GroundPair

        rng = Random(5)
        ks = gen_keystore(["A", "B"], PROV, rng)
        store = RealStore()
        label = parse_label("A∨B | A | True")
        _, ct = serialize(store, label, 42, "answer", 1, ks, PROV, rng)
        store.put("answer", label, ct)
        _, ct2 = serialize(store, label, "text", GroundPair("pair", 1), 2, ks, PROV, rng)
        store.put(GroundPair("pair", 1), label, ct2)

        path = tmp_path / "persisted.txt"
        save_store(store, FileBackend(path))
        first_bytes = path.read_bytes()

        reloaded = load_store(FileBackend(path))
        assert render_store_lines(reloaded) == render_store_lines(store)

        path2 = tmp_path / "again.txt"
        save_store(reloaded, FileBackend(path2))
        assert path2.read_bytes() == first_bytes

    def test_memory_adapter_roundtrip(self):
        from flowstore.terms import GroundPair

        rng = Random(5)
        ks = gen_keystore(["A", "B"], PROV, rng)
        store = RealStore()
        label = parse_label("A∨B | A | True")
        _, ct = serialize(store, label, 42, "answer", 1, ks, PROV, rng)
        store.put("answer", label, ct)
        backend = MemoryBackend()
        save_store(store, backend)
        assert render_store_lines(load_store(backend)) == render_store_lines(store)
