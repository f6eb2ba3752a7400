"""Shared helpers for the line-oriented ``HLSM-*`` artifact files.

Every artifact starts with a magic line (``HLSM-CORPUS v1`` etc.), optionally
followed by ``# key: value`` metadata lines.  Metadata carries the pipeline
config and the content hash of the input the artifact was derived from.
"""
import hashlib
import json


class FormatError(ValueError):
    """Raised when an artifact file is malformed or has the wrong magic line."""


class VocabularyMismatchError(FormatError):
    """Raised when two artifacts were built over different vocabularies."""


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def vocabulary_hash(words):
    return hashlib.sha256("\n".join(words).encode("utf-8")).hexdigest()


def write_header(fh, magic, meta=None):
    fh.write(magic + "\n")
    write_meta(fh, meta)


def write_meta(fh, meta):
    for key, value in (meta or {}).items():
        if not isinstance(value, str):
            value = json.dumps(value, sort_keys=True)
        fh.write(f"# {key}: {value}\n")


def read_header(lines, magic, path="<stream>"):
    """Check the magic line and collect leading ``# key: value`` metadata.

    ``lines`` is a list of lines without trailing newlines.  Returns
    ``(meta, index_of_first_body_line)``.
    """
    if not lines or lines[0].strip() != magic:
        found = lines[0].strip()[:60] if lines else "<empty file>"
        raise FormatError(f"{path}: expected header {magic!r}, found {found!r}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        key, sep, value = lines[i][2:].partition(": ")
        if not sep:
            break
        meta[key] = value
        i += 1
    return meta, i


def read_lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read().split("\n")
