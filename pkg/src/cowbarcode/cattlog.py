"""The Cattlog: enrollment from single-cow clips, entry management, matching,
and versioned persistence.

One entry per animal, built from one annotated clip by aggregating per-frame
barcodes with the bitwise mode. Catalog files are auditable JSON carrying the
format version, template id, and grid dimensions; barcodes are hex strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import barcode as bc
from .alignment import (
    DEFAULT_BORDER_MARGIN,
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_TEMPLATE,
    TemplateShape,
    is_enrollable,
)
from .annotations import AnnotationStream
from .barcode import Barcode
from .errors import (
    CatalogError,
    CatalogVersionError,
    ConflictError,
    EnrollmentError,
)
from .pipeline import FrameSkip, ImageLoader, frame_barcode

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CattlogEntry:
    """One enrolled animal: its barcode plus enrollment provenance."""

    cow_id: str
    barcode: Barcode
    frames_used: int
    source_ref: str = ""
    enrolled_at: str = ""

    def __post_init__(self):
        if not self.cow_id:
            raise CatalogError("entry: cow_id must be nonempty")
        if self.frames_used < 1:
            raise CatalogError("entry: frames_used must be >= 1")


@dataclass
class Cattlog:
    """Catalog of enrolled animals, keyed by cow_id."""

    format_version: int = FORMAT_VERSION
    template_id: str = DEFAULT_TEMPLATE.template_id
    grid_rows: int = bc.GRID_ROWS
    grid_cols: int = bc.GRID_COLS
    entries: dict[str, CattlogEntry] = field(default_factory=dict)
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)
    _matrix_ids: list[str] = field(default_factory=list, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return sorted(self.entries)

    def get(self, cow_id: str) -> CattlogEntry:
        try:
            return self.entries[cow_id]
        except KeyError:
            raise CatalogError(f"no entry with id {cow_id!r}") from None

    def add_entry(self, entry: CattlogEntry) -> None:
        if entry.cow_id in self.entries:
            raise ConflictError(f"id {entry.cow_id!r} already enrolled")
        self.entries[entry.cow_id] = entry
        self._matrix = None

    def remove_entry(self, cow_id: str) -> CattlogEntry:
        if cow_id not in self.entries:
            raise CatalogError(f"no entry with id {cow_id!r}")
        entry = self.entries.pop(cow_id)
        self._matrix = None
        return entry

    def _packed(self) -> tuple[list[str], np.ndarray]:
        if self._matrix is None or len(self._matrix_ids) != len(self.entries):
            ids = self.ids()
            self._matrix_ids = ids
            self._matrix = bc.pack_catalog(self.entries[i].barcode for i in ids)
        return self._matrix_ids, self._matrix

    def match_top_k(self, query: Barcode, k: int) -> list[tuple[str, int]]:
        """Closest k entries by Hamming distance, ties broken by id."""
        if not self.entries:
            raise CatalogError("cannot match against an empty catalog")
        if k < 1:
            raise ValueError("k must be >= 1")
        ids, matrix = self._packed()
        dists = bc.hamming_scan(query, matrix)
        # ids are pre-sorted, so a stable sort on distance is the tie rule
        order = np.argsort(dists, kind="stable")[:k]
        return [(ids[i], int(dists[i])) for i in order]


def match_top_k(query: Barcode, catalog: Cattlog, k: int) -> list[tuple[str, int]]:
    return catalog.match_top_k(query, k)


def add_entry(catalog: Cattlog, entry: CattlogEntry) -> Cattlog:
    catalog.add_entry(entry)
    return catalog


def remove_entry(catalog: Cattlog, cow_id: str) -> Cattlog:
    catalog.remove_entry(cow_id)
    return catalog


def enroll(stream: AnnotationStream, cow_id: str, catalog: Cattlog,
           image_loader: ImageLoader, *, source_ref: str = "",
           enrolled_at: str = "",
           template: TemplateShape = DEFAULT_TEMPLATE,
           conf_threshold: float = DEFAULT_CONF_THRESHOLD,
           border_margin: int = DEFAULT_BORDER_MARGIN) -> CattlogEntry:
    """Build and add one entry from a single-cow clip.

    Every frame that clearly shows the full back contributes one barcode;
    the entry stores their bitwise mode. Frames failing the enrollability
    gate (or alignment) are skipped, not fatal.
    """
    if template.template_id != catalog.template_id:
        raise CatalogError(
            f"catalog template {catalog.template_id!r} does not match "
            f"{template.template_id!r}"
        )
    if cow_id in catalog.entries:
        raise ConflictError(f"id {cow_id!r} already enrolled")

    codes: list[Barcode] = []
    for f in stream:
        if not is_enrollable(f, conf_threshold=conf_threshold,
                             border_margin=border_margin):
            continue
        try:
            codes.append(frame_barcode(f, image_loader(f), template))
        except FrameSkip:
            continue
    if not codes:
        raise EnrollmentError(
            f"no enrollable frame in clip for {cow_id!r} "
            "(need at least one clear full-back view)"
        )
    entry = CattlogEntry(
        cow_id=cow_id,
        barcode=bc.bitwise_mode(codes),
        frames_used=len(codes),
        source_ref=source_ref,
        enrolled_at=enrolled_at,
    )
    catalog.add_entry(entry)
    return entry


def save(catalog: Cattlog, path) -> None:
    """Write the catalog as deterministic, human-auditable JSON."""
    doc = {
        "format_version": catalog.format_version,
        "template_id": catalog.template_id,
        "grid_rows": catalog.grid_rows,
        "grid_cols": catalog.grid_cols,
        "entries": [
            {
                "cow_id": e.cow_id,
                "barcode_hex": e.barcode.to_hex(),
                "frames_used": e.frames_used,
                "source_ref": e.source_ref,
                "enrolled_at": e.enrolled_at,
            }
            for e in (catalog.entries[i] for i in catalog.ids())
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load(path) -> Cattlog:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"corrupt catalog file: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise CatalogError("corrupt catalog file: expected a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CatalogVersionError(
            f"unsupported catalog format version {version!r} "
            f"(this tool reads version {FORMAT_VERSION})"
        )
    catalog = Cattlog(
        format_version=version,
        template_id=doc.get("template_id", ""),
        grid_rows=int(doc.get("grid_rows", 0)),
        grid_cols=int(doc.get("grid_cols", 0)),
    )
    if catalog.grid_rows != bc.GRID_ROWS or catalog.grid_cols != bc.GRID_COLS:
        raise CatalogError(
            f"catalog grid {catalog.grid_rows}x{catalog.grid_cols} does not "
            f"match this build ({bc.GRID_ROWS}x{bc.GRID_COLS})"
        )
    try:
        for rec in doc.get("entries", []):
            catalog.add_entry(CattlogEntry(
                cow_id=rec["cow_id"],
                barcode=Barcode.from_hex(rec["barcode_hex"]),
                frames_used=int(rec["frames_used"]),
                source_ref=rec.get("source_ref", ""),
                enrolled_at=rec.get("enrolled_at", ""),
            ))
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"corrupt catalog entry: {exc}") from exc
    return catalog
