"""Versioned on-disk store for profiles, narratives, and the search index.

Layout under one directory:

    meta.json            current version, catalog fingerprint per artifact
    profiles-<n>.json    column and table profiles
    narratives-<n>.json  narrative documents
    index-<n>.bin        embedding index (opaque bytes owned by the caller)

Writes are atomic (temp file + rename) and bump the version; readers always
follow meta.json, so a crashed writer never corrupts the visible state.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from pathlib import Path
from typing import Optional

from .narratives import Narrative
from .profiler import ColumnProfile, TableProfile


class KnowledgeBase:
    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    # -- meta ----------------------------------------------------------------

    def _meta(self) -> dict:
        path = self.dir / "meta.json"
        if not path.exists():
            return {"version": 0, "fingerprints": {}}
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_meta(self, meta: dict) -> None:
        self._atomic_write(self.dir / "meta.json",
                           json.dumps(meta, indent=2).encode("utf-8"))

    def _atomic_write(self, path: Path, payload: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def version(self) -> int:
        return self._meta()["version"]

    def fingerprint(self, artifact: str) -> Optional[str]:
        return self._meta()["fingerprints"].get(artifact)

    def is_stale(self, artifact: str, current_fingerprint: str) -> bool:
        stored = self.fingerprint(artifact)
        return stored is None or stored != current_fingerprint

    def _bump(self, artifact: str, fingerprint: str) -> int:
        meta = self._meta()
        meta["version"] += 1
        meta["fingerprints"][artifact] = fingerprint
        meta.setdefault("files", {})[artifact] = meta["version"]
        self._write_meta(meta)
        return meta["version"]

    def _current_file(self, artifact: str, stem: str, suffix: str) -> Optional[Path]:
        meta = self._meta()
        version = meta.get("files", {}).get(artifact)
        if version is None:
            return None
        path = self.dir / f"{stem}-{version}{suffix}"
        return path if path.exists() else None

    # -- profiles -------------------------------------------------------------

    def save_profiles(
        self,
        fingerprint: str,
        column_profiles: list[ColumnProfile],
        table_profiles: list[TableProfile],
    ) -> int:
        payload = {
            "fingerprint": fingerprint,
            "columns": [dataclasses.asdict(p) for p in column_profiles],
            "tables": [dataclasses.asdict(p) for p in table_profiles],
        }
        encoded = json.dumps(payload, indent=1, ensure_ascii=False).encode("utf-8")
        version = self._bump("profiles", fingerprint)
        self._atomic_write(self.dir / f"profiles-{version}.json", encoded)
        return version

    def load_profiles(self) -> tuple[list[ColumnProfile], list[TableProfile]]:
        path = self._current_file("profiles", "profiles", ".json")
        if path is None:
            return [], []
        payload = json.loads(path.read_text(encoding="utf-8"))
        columns = [ColumnProfile(**_tupled(c, ("fk_reference",)))
                   for c in payload["columns"]]
        tables = []
        for t in payload["tables"]:
            t = dict(t)
            t["foreign_keys"] = {
                k: (v[0], list(v[1])) for k, v in (t.get("foreign_keys") or {}).items()}
            for key in ("spatial_extent", "temporal_coverage"):
                if t.get(key) is not None:
                    t[key] = tuple(t[key])
            tables.append(TableProfile(**t))
        return columns, tables

    # -- narratives -----------------------------------------------------------

    def save_narratives(self, fingerprint: str, narratives: list[Narrative]) -> int:
        payload = [dataclasses.asdict(n) for n in narratives]
        encoded = json.dumps(payload, indent=1, ensure_ascii=False).encode("utf-8")
        version = self._bump("narratives", fingerprint)
        self._atomic_write(self.dir / f"narratives-{version}.json", encoded)
        return version

    def load_narratives(self) -> list[Narrative]:
        path = self._current_file("narratives", "narratives", ".json")
        if path is None:
            return []
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [
            Narrative(subject=tuple(n["subject"]), text=n["text"],
                      generated_by=n["generated_by"],
                      source_profile_hash=n["source_profile_hash"])
            for n in payload
        ]

    # -- opaque index bytes -----------------------------------------------------

    def save_index(self, fingerprint: str, blob: bytes) -> int:
        version = self._bump("index", fingerprint)
        self._atomic_write(self.dir / f"index-{version}.bin", blob)
        return version

    def load_index(self) -> Optional[bytes]:
        path = self._current_file("index", "index", ".bin")
        return path.read_bytes() if path else None


def _tupled(record: dict, keys: tuple[str, ...]) -> dict:
    out = dict(record)
    for key in keys:
        if out.get(key) is not None:
            table, cols = out[key]
            out[key] = (table, list(cols))
    return out
