"""
JSON-lines corpus manifests
"""
from pathlib import Path
from typing import Iterable, List, Optional, Union

import orjson
import structlog
from pydantic import ValidationError

from app.exceptions import ManifestError
from app.schemas.ctc import Alphabet
from app.schemas.manifest import ManifestEntry
from app.services.storage import atomic_write_bytes

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


def parse_manifest_lines(lines: Iterable[str], alphabet: Optional[Alphabet] = None) -> List[ManifestEntry]:
    """
    Parse manifest lines in order; blank lines are skipped

    Each line is one JSON object with audio_path, transcript and duration_s.
    With an alphabet, every transcript character must belong to it.
    """
    entries = []
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = orjson.loads(line)
        except orjson.JSONDecodeError as e:
            raise ManifestError(f"malformed JSON: {e}", line_number) from None
        if not isinstance(record, dict):
            raise ManifestError(f"expected a JSON object, got {type(record).__name__}", line_number)
        try:
            entry = ManifestEntry.model_validate(record)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'entry'}: {err['msg']}" for err in e.errors()
            )
            raise ManifestError(problems, line_number) from None
        if alphabet is not None:
            unknown = alphabet.unknown_characters(entry.transcript)
            if unknown:
                raise ManifestError(f"transcript character {unknown[0]!r} is not in the alphabet", line_number)
        entries.append(entry)
    return entries


def parse_manifest(path: PathLike, alphabet: Optional[Alphabet] = None) -> List[ManifestEntry]:
    """Read a manifest file; see parse_manifest_lines"""
    text = Path(path).read_text(encoding="utf-8")
    entries = parse_manifest_lines(text.splitlines(), alphabet)
    logger.info("manifest_loaded", path=str(path), entries=len(entries))
    return entries


def manifest_to_text(entries: Iterable[ManifestEntry]) -> str:
    lines = [orjson.dumps(entry.model_dump(exclude_none=True)).decode("utf-8") for entry in entries]
    return "".join(line + "\n" for line in lines)


def write_manifest(entries: Iterable[ManifestEntry], path: PathLike) -> None:
    atomic_write_bytes(path, manifest_to_text(entries).encode("utf-8"))


def resolve_audio_path(entry: ManifestEntry, manifest_path: PathLike) -> Path:
    """Audio path of an entry; relative paths are taken from the manifest's directory"""
    audio = Path(entry.audio_path)
    if audio.is_absolute():
        return audio
    return Path(manifest_path).parent / audio
