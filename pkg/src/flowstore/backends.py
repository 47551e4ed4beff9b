"""Key-value persistence for store contents: in-memory and file-backed.

Both backends speak the same interface: namespaced byte keys to byte values,
last write wins.  The two namespaces are ``entry`` (serialized labeled
values) and ``ck`` (category keys).

The file backend is line-oriented append-with-compaction in the store wire
format: an entry line is ``key-b64 SP label-text SP ciphertext-b64`` and a
category-key line is ``ck: SP category-text SP pub-b64 SP wraps SP sig-b64``,
where the backend's value holds everything after the key field.  Deletions
append an ``rm:`` tombstone and disappear on compaction, so fixture files
stay diffable.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple

from .cryptostore import (
    RealStore,
    parse_ck_line,
    parse_entry_line,
    render_ck_line,
    render_entry_line,
)
from .encoding import b64, unb64

NAMESPACES = ("entry", "ck")

Record = Tuple[str, bytes, bytes]  # namespace, key, value


class Backend:
    def get(self, namespace: str, key: bytes) -> Optional[bytes]:
        raise NotImplementedError

    def put(self, namespace: str, key: bytes, value: bytes) -> None:
        raise NotImplementedError

    def delete(self, namespace: str, key: bytes) -> None:
        raise NotImplementedError

    def snapshot(self) -> Iterator[Record]:
        raise NotImplementedError


def _check_record(namespace: str, value: Optional[bytes] = None) -> None:
    if namespace not in NAMESPACES:
        raise ValueError(f"unknown namespace {namespace!r}; expected one of {NAMESPACES}")
    if value is not None and b"\n" in value:
        raise ValueError("backend values are single records and cannot contain newlines")


class MemoryBackend(Backend):
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._data: Dict[Tuple[str, bytes], bytes] = {}

    def get(self, namespace: str, key: bytes) -> Optional[bytes]:
        _check_record(namespace)
        with self._lock:
            return self._data.get((namespace, key))

    def put(self, namespace: str, key: bytes, value: bytes) -> None:
        _check_record(namespace, value)
        with self._lock:
            self._data[(namespace, key)] = value

    def delete(self, namespace: str, key: bytes) -> None:
        _check_record(namespace)
        with self._lock:
            self._data.pop((namespace, key), None)

    def snapshot(self) -> Iterator[Record]:
        with self._lock:
            items = sorted(self._data.items())
        for (namespace, key), value in items:
            yield namespace, key, value


def _encode_line(namespace: str, key: bytes, value: bytes) -> str:
    text = value.decode("utf-8")
    if namespace == "ck":
        return f"ck: {key.decode('utf-8')} {text}"
    return f"{b64(key)} {text}"


def _decode_line(line: str) -> Record:
    if line.startswith("ck: "):
        rest = line[4:]
        key_text, _, value = rest.partition(" ")
        return "ck", key_text.encode("utf-8"), value.encode("utf-8")
    key_b64, _, value = line.partition(" ")
    return "entry", unb64(key_b64), value.encode("utf-8")


class FileBackend(Backend):
    """Append-with-compaction persistence in the store wire format."""

    def __init__(self, path: str | Path) -> None:
        self._lock = threading.Lock()
        self.path = Path(path)
        self._data: Dict[Tuple[str, bytes], bytes] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read store file {self.path}: {exc}") from exc
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("rm: "):
                _, ns, kb = line.split(" ", 2)
                self._data.pop((ns, unb64(kb)), None)
                continue
            ns, key, value = _decode_line(line)
            self._data[(ns, key)] = value

    def _append(self, line: str) -> None:
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        except OSError as exc:
            raise OSError(f"cannot write store file {self.path}: {exc}") from exc

    def get(self, namespace: str, key: bytes) -> Optional[bytes]:
        _check_record(namespace)
        with self._lock:
            return self._data.get((namespace, key))

    def put(self, namespace: str, key: bytes, value: bytes) -> None:
        _check_record(namespace, value)
        with self._lock:
            self._data[(namespace, key)] = value
            self._append(_encode_line(namespace, key, value))

    def delete(self, namespace: str, key: bytes) -> None:
        _check_record(namespace)
        with self._lock:
            if (namespace, key) in self._data:
                del self._data[(namespace, key)]
                self._append(f"rm: {namespace} {b64(key)}")

    def snapshot(self) -> Iterator[Record]:
        with self._lock:
            items = sorted(self._data.items())
        for (namespace, key), value in items:
            yield namespace, key, value

    def compact(self) -> None:
        with self._lock:
            lines = [
                _encode_line(ns, key, value)
                for (ns, key), value in sorted(self._data.items())
            ]
            self.path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def memory_backend() -> Backend:
    return MemoryBackend()


def file_backend(path: str | Path) -> Backend:
    return FileBackend(path)


# --- RealStore adapters -------------------------------------------------------


def save_store(store: RealStore, backend: Backend) -> None:
    for cat in sorted(store.category_keys):
        ck = store.category_keys[cat]
        line = render_ck_line(ck)
        value = line[4 + len(cat.text) + 1:]  # strip "ck: <category-text> "
        backend.put("ck", cat.text.encode("utf-8"), value.encode("utf-8"))
    for kb in sorted(store.entries):
        key, label, ciphertext = store.entries[kb]
        line = render_entry_line(key, label, ciphertext)
        value = line.split(" ", 1)[1]  # strip the key field
        backend.put("entry", kb, value.encode("utf-8"))
    if isinstance(backend, FileBackend):
        backend.compact()


def load_store(backend: Backend) -> RealStore:
    store = RealStore()
    for namespace, key, value in backend.snapshot():
        if namespace == "ck":
            line = f"ck: {key.decode('utf-8')} {value.decode('utf-8')}"
            ck = parse_ck_line(line)
            store.category_keys[ck.category] = ck
        else:
            line = f"{b64(key)} {value.decode('utf-8')}"
            gkey, label, ciphertext = parse_entry_line(line)
            store.put(gkey, label, ciphertext)
    return store
