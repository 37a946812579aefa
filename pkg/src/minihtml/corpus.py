"""Ingest raw HTML collections, drive simplification, and persist shards.

Sources are either directories of ``.html``/``.htm`` files or WARC
archives (optionally gzip-compressed); both yield stable document ids.
The pipeline fans simplification out to a process pool, then sorts all
results by doc id before writing, so shard bytes are identical regardless
of worker count. Individual bad documents never abort a run; they are
counted and reported in the summary.

Shard format: JSON Lines, one record per line with fields
``{doc_id, url, mhtml, raw_chars, mhtml_chars, text_chars, text_ratio,
lang}``, UTF-8, plus a ``manifest.json`` sidecar
``{version, shards: [{path, record_count}], rejects: {reason: count}}``.
"""

from __future__ import annotations

import gzip
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Union

from .mhtml import MhtmlConfig, MhtmlRecord, RejectReason, simplify_bytes

FORMAT_VERSION = 1
DEFAULT_SHARD_SIZE = 10000
MANIFEST_NAME = "manifest.json"

_HTML_SUFFIXES = {".html", ".htm"}


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class RawDoc:
    doc_id: str
    url: Optional[str]
    data: bytes


@dataclass(frozen=True)
class Shard:
    path: str
    record_count: int
    format_version: int = FORMAT_VERSION


@dataclass
class RunSummary:
    ingested: int = 0
    accepted: int = 0
    rejects: dict[str, int] = field(default_factory=dict)
    skipped_corrupt: int = 0
    shards: list[Shard] = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return sum(self.rejects.values())

    def balanced(self) -> bool:
        return self.accepted + self.rejected + self.skipped_corrupt == self.ingested


def _iter_directory(source: Path) -> Iterator[RawDoc]:
    paths = sorted(
        (p for p in source.rglob("*") if p.is_file() and p.suffix.lower() in _HTML_SUFFIXES),
        key=lambda p: p.relative_to(source).as_posix(),
    )
    for path in paths:
        yield RawDoc(
            doc_id=path.relative_to(source).as_posix(),
            url=None,
            data=path.read_bytes(),
        )


def _read_warc_headers(stream: BinaryIO) -> Optional[dict[str, str]]:
    # Skip blank record separators, then read the WARC header block.
    line = stream.readline()
    while line in (b"\r\n", b"\n"):
        line = stream.readline()
    if not line:
        return None
    if not line.startswith(b"WARC/"):
        raise CorpusError(f"expected WARC version line, got {line[:30]!r}")
    headers: dict[str, str] = {}
    while True:
        line = stream.readline()
        if line in (b"\r\n", b"\n", b""):
            break
        if b":" in line:
            name, _, value = line.partition(b":")
            headers[name.decode("ascii", "replace").strip().lower()] = (
                value.decode("utf-8", "replace").strip()
            )
    return headers


def _split_http_payload(payload: bytes) -> tuple[dict[str, str], bytes]:
    head, sep, body = payload.partition(b"\r\n\r\n")
    if not sep:
        head, sep, body = payload.partition(b"\n\n")
        if not sep:
            return {}, payload
    headers: dict[str, str] = {}
    for line in head.splitlines()[1:]:
        if b":" in line:
            name, _, value = line.partition(b":")
            headers[name.decode("ascii", "replace").strip().lower()] = (
                value.decode("utf-8", "replace").strip()
            )
    return headers, body


def _iter_warc(path: Path, errors: Optional[list[str]] = None) -> Iterator[RawDoc]:
    opener = gzip.open if path.name.endswith(".gz") else open
    index = 0
    with opener(path, "rb") as stream:  # type: ignore[arg-type]
        while True:
            try:
                headers = _read_warc_headers(stream)
                if headers is None:
                    return
                length = int(headers.get("content-length", ""))
                payload = stream.read(length)
                if len(payload) < length:
                    raise CorpusError("truncated WARC payload")
            except (CorpusError, ValueError) as exc:
                if errors is not None:
                    errors.append(f"{path.name}: {exc}")
                return  # framing is lost; remaining records are unrecoverable
            index += 1
            if headers.get("warc-type") != "response":
                continue
            http_headers, body = _split_http_payload(payload)
            if "text/html" not in http_headers.get("content-type", ""):
                continue
            yield RawDoc(
                doc_id=f"{path.name}#{index}",
                url=headers.get("warc-target-uri"),
                data=body,
            )


def ingest(
    source: Union[str, Path],
    errors: Optional[list[str]] = None,
) -> Iterator[RawDoc]:
    """Yield raw documents from a directory or WARC archive.

    Per-record problems are appended to ``errors`` (when given) instead of
    raising; an unreadable source raises immediately.
    """
    source = Path(source)
    if source.is_dir():
        yield from _iter_directory(source)
    elif source.is_file():
        if ".warc" not in source.name:
            raise CorpusError(f"{source}: not a directory or .warc file")
        yield from _iter_warc(source, errors)
    else:
        raise CorpusError(f"{source}: no such file or directory")


def _simplify_payload(
    payload: tuple[str, Optional[str], bytes, MhtmlConfig],
) -> tuple[str, Union[MhtmlRecord, RejectReason]]:
    doc_id, url, data, cfg = payload
    return doc_id, simplify_bytes(data, cfg, doc_id=doc_id, url=url)


def _write_shards(
    records: list[MhtmlRecord],
    out_dir: Path,
    shard_size: int,
) -> list[Shard]:
    shards: list[Shard] = []
    for start in range(0, len(records), shard_size):
        chunk = records[start:start + shard_size]
        name = f"shard-{len(shards):05d}.jsonl"
        path = out_dir / name
        try:
            with open(path, "w", encoding="utf-8") as handle:
                for record in chunk:
                    handle.write(json.dumps(record.to_dict(), ensure_ascii=False))
                    handle.write("\n")
        except OSError:
            path.unlink(missing_ok=True)  # drop the partial shard
            raise
        shards.append(Shard(path=name, record_count=len(chunk)))
    return shards


def run_pipeline(
    source: Union[str, Path],
    cfg: MhtmlConfig,
    workers: int = 1,
    out: Union[str, Path] = "out",
    shard_size: int = DEFAULT_SHARD_SIZE,
) -> RunSummary:
    """Simplify every ingested document and write sorted shards.

    Output bytes depend only on the input corpus and config, not on
    ``workers``: results are ordered by doc_id before writing.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    skip_log: list[str] = []
    docs = list(ingest(source, errors=skip_log))
    payloads = [(d.doc_id, d.url, d.data, cfg) for d in docs]

    if workers == 1 or len(payloads) < 2:
        outcomes = [_simplify_payload(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(payloads) // (workers * 4))
            outcomes = list(pool.map(_simplify_payload, payloads, chunksize=chunk))

    summary = RunSummary(ingested=len(docs) + len(skip_log), skipped_corrupt=len(skip_log))
    accepted: list[MhtmlRecord] = []
    for _, result in outcomes:
        if isinstance(result, MhtmlRecord):
            accepted.append(result)
        else:
            summary.rejects[result.code] = summary.rejects.get(result.code, 0) + 1
    accepted.sort(key=lambda r: r.doc_id)
    summary.accepted = len(accepted)

    summary.shards = _write_shards(accepted, out_dir, shard_size)
    manifest = {
        "version": FORMAT_VERSION,
        "shards": [{"path": s.path, "record_count": s.record_count} for s in summary.shards],
        "rejects": {code: summary.rejects[code] for code in sorted(summary.rejects)},
    }
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return summary


def read_manifest(shard_dir: Union[str, Path]) -> dict:
    path = Path(shard_dir) / MANIFEST_NAME
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CorpusError(f"cannot read manifest: {exc}") from exc
    if manifest.get("version") != FORMAT_VERSION:
        raise CorpusError(f"unsupported shard format version: {manifest.get('version')}")
    return manifest


def read_records(shard_dir: Union[str, Path]) -> Iterator[MhtmlRecord]:
    """Stream records from a shard directory in manifest order."""
    shard_dir = Path(shard_dir)
    manifest = read_manifest(shard_dir)
    for entry in manifest["shards"]:
        with open(shard_dir / entry["path"], encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    yield MhtmlRecord.from_dict(json.loads(line))


def read_records_from_paths(paths: Iterable[Union[str, Path]]) -> Iterator[MhtmlRecord]:
    for path in paths:
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    yield MhtmlRecord.from_dict(json.loads(line))
