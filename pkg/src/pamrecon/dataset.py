"""Dataset manifests and directory ingestion."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

from .image import InvalidImageError, check_image, is_supported, preprocess, read_image, write_image

log = logging.getLogger(__name__)

MANIFEST_HEADER = "PAMMANIFEST 1"
SPLIT_TAGS = ("train", "val", "test")


class ManifestError(ValueError):
    pass


@dataclass
class Manifest:
    """Image paths (relative to ``root``) with optional split tags."""

    entries: list = field(default_factory=list)
    root: str = "."
    version: int = 1

    def __post_init__(self):
        seen = set()
        for path, tag in self.entries:
            if path in seen:
                raise ManifestError(f"duplicate path {path!r}")
            if tag is not None and tag not in SPLIT_TAGS:
                raise ManifestError(f"{path}: invalid split tag {tag!r}")
            seen.add(path)

    def __len__(self):
        return len(self.entries)

    def paths(self, tag=None):
        return [os.path.join(self.root, p) for p, t in self.entries if tag is None or t == tag]

    def with_tags(self, tags):
        """Copy with split tags replaced from a ``{path: tag}`` mapping."""
        return Manifest([(p, tags.get(p, t)) for p, t in self.entries], self.root, self.version)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(MANIFEST_HEADER + "\n")
            for p, tag in self.entries:
                fh.write(f"{p}\t{tag or '-'}\n")

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0].strip() != MANIFEST_HEADER:
            raise ManifestError(f"{path}: missing '{MANIFEST_HEADER}' header")
        entries = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ManifestError(f"{path}:{lineno}: expected '<path>\\t<tag>'")
            rel, tag = parts[0], parts[1].strip()
            entries.append((rel, None if tag == "-" else tag))
        return cls(entries, root=os.path.dirname(os.path.abspath(path)))


def load_images(manifest, tag=None):
    return [read_image(p) for p in manifest.paths(tag)]


def ingest_directory(src, out_dir, floor=0.0, manifest_name="manifest.txt"):
    """Preprocess every supported image in ``src`` into ``out_dir``.

    Writes normalized ``.pamimg`` copies and a manifest. Unreadable files are
    skipped with a warning. Returns ``(manifest, skipped_count)``.
    """
    if not os.path.isdir(src):
        raise FileNotFoundError(f"{src} is not a directory")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    skipped = 0
    for name in sorted(os.listdir(src)):
        path = os.path.join(src, name)
        if not os.path.isfile(path) or not is_supported(path):
            continue
        try:
            img = preprocess(read_image(path), floor=floor)
            check_image(img)
        except (InvalidImageError, OSError, ValueError) as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped += 1
            continue
        rel = os.path.splitext(name)[0] + ".pamimg"
        if any(rel == e[0] for e in entries):
            rel = name + ".pamimg"
        write_image(os.path.join(out_dir, rel), img)
        entries.append((rel, None))
    if not entries:
        log.warning("no usable images found in %s", src)
    manifest = Manifest(entries, root=os.path.abspath(out_dir))
    manifest.write(os.path.join(out_dir, manifest_name))
    return manifest, skipped
