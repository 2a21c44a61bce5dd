"""Line-delimited corpus store: one JSONL file per stage plus a manifest.

Layout under a run directory:

    <run>/<stage>.jsonl      one JSON object per line, append-only
    <run>/manifest.json      {run_id, seed, config_digest, stages: [...]}

The manifest tracks per-stage record counts and sha256 digests so a
resumed or audited run can detect truncation/corruption before reading.
One writer per stage at a time; sealed stages are safe for concurrent
readers.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .records import ValidationError

MANIFEST_NAME = "manifest.json"


class StoreError(RuntimeError):
    pass


class StageCorruptionError(StoreError):
    """Stage file content no longer matches its manifest digest."""


class RecordValidationError(ValidationError):
    """A batch contained an invalid record; nothing from the batch was written."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"record at index {index} is invalid: {reason}")
        self.index = index
        self.reason = reason


def json_line(obj: dict) -> str:
    """Canonical single-line encoding used for every stage record."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_digest(config_obj) -> str:
    payload = json.dumps(config_obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


@dataclass
class StageEntry:
    name: str
    path: str  # relative to the run directory
    count: int
    sha256: str

    def to_json_dict(self) -> dict:
        return {"name": self.name, "path": self.path, "count": self.count, "sha256": self.sha256}


class CorpusStore:
    """Versioned index over pipeline stage outputs in one run directory."""

    def __init__(self, run_dir: str | Path, run_id: str = "", seed: int = 0,
                 config_digest: str = ""):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._manifest_path = self.run_dir / MANIFEST_NAME
        if self._manifest_path.exists():
            self._load_manifest()
        else:
            self.run_id = run_id
            self.seed = seed
            self.config_digest = config_digest
            self._stages: dict[str, StageEntry] = {}
            self._write_manifest()

    # -- manifest -----------------------------------------------------------

    def _load_manifest(self) -> None:
        with open(self._manifest_path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        self.run_id = data["run_id"]
        self.seed = data["seed"]
        self.config_digest = data["config_digest"]
        self._stages = {
            s["name"]: StageEntry(s["name"], s["path"], s["count"], s["sha256"])
            for s in data["stages"]
        }

    def _write_manifest(self) -> None:
        data = {
            "run_id": self.run_id,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "stages": [self._stages[name].to_json_dict() for name in sorted(self._stages)],
        }
        tmp = self._manifest_path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, self._manifest_path)

    @property
    def stages(self) -> dict[str, StageEntry]:
        return dict(self._stages)

    def has_stage(self, stage: str) -> bool:
        return stage in self._stages

    def count(self, stage: str) -> int:
        return self._stages[stage].count if stage in self._stages else 0

    def stage_path(self, stage: str) -> Path:
        return self.run_dir / f"{stage}.jsonl"

    # -- writing ------------------------------------------------------------

    @staticmethod
    def _encode(record, index: int) -> dict:
        if isinstance(record, dict):
            return record
        to_json = getattr(record, "to_json_dict", None)
        if to_json is None:
            raise RecordValidationError(index, f"unsupported record type {type(record).__name__}")
        return to_json()

    def append_records(self, stage: str, records: Iterable, record_type=None) -> StageEntry:
        """Durably append a batch; all-or-nothing on validation failure.

        Every record is encoded (and, when record_type is given, re-parsed
        through it) before any byte is written, so a bad record at index i
        rejects the whole batch with that index and leaves the stage file
        and manifest untouched.
        """
        records = list(records)
        lines = []
        for i, record in enumerate(records):
            try:
                obj = self._encode(record, i)
                if record_type is not None:
                    record_type.from_json_dict(json.loads(json_line(obj)))
                lines.append(json_line(obj))
            except RecordValidationError:
                raise
            except Exception as exc:
                raise RecordValidationError(i, str(exc)) from exc

        path = self.stage_path(stage)
        with open(path, "a", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

        entry = StageEntry(
            name=stage,
            path=path.name,
            count=self.count(stage) + len(lines),
            sha256=_sha256_file(path),
        )
        self._stages[stage] = entry
        self._write_manifest()
        return entry

    def replace_stage(self, stage: str, records: Iterable, record_type=None) -> StageEntry:
        """Overwrite a stage wholesale (used by idempotent exports)."""
        path = self.stage_path(stage)
        if path.exists():
            path.unlink()
        self._stages.pop(stage, None)
        return self.append_records(stage, records, record_type=record_type)

    def drop_stage(self, stage: str) -> None:
        path = self.stage_path(stage)
        if path.exists():
            path.unlink()
        if stage in self._stages:
            del self._stages[stage]
            self._write_manifest()

    # -- reading ------------------------------------------------------------

    def iterate_stage(self, stage: str, record_type=None) -> Iterator:
        """Yield records in append order after verifying the stage digest."""
        if stage not in self._stages:
            raise StoreError(f"unknown stage: {stage!r}")
        entry = self._stages[stage]
        path = self.run_dir / entry.path
        if not path.exists():
            raise StageCorruptionError(f"stage file missing: {path}")
        if _sha256_file(path) != entry.sha256:
            raise StageCorruptionError(f"stage file digest mismatch: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                yield record_type.from_json_dict(obj) if record_type is not None else obj

    def read_stage(self, stage: str, record_type=None) -> list:
        return list(self.iterate_stage(stage, record_type=record_type))

    def verify(self) -> list[str]:
        """Return descriptions of every stage whose file fails its digest."""
        problems = []
        for entry in self._stages.values():
            path = self.run_dir / entry.path
            if not path.exists():
                problems.append(f"{entry.name}: file missing")
            elif _sha256_file(path) != entry.sha256:
                problems.append(f"{entry.name}: digest mismatch")
        return problems
