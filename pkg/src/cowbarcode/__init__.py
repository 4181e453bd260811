"""Visual identification of Holstein cattle from top-view video.

Coat patterns are aligned to a canonical template, encoded as 2048-bit
barcodes, and matched by Hamming distance: enroll each animal once from an
annotated clip, identify single-cow clips, and retrieve time-stamped
per-cow segments from continuous streams. A synthetic herd generator
provides deterministic end-to-end evaluation data.
"""

from .alignment import (
    CANVAS_HEIGHT,
    CANVAS_WIDTH,
    DEFAULT_TEMPLATE,
    TEMPLATE_ID,
    CheckReport,
    TemplateShape,
    TemplateWarp,
    align_to_template,
    check_keypoints,
    is_enrollable,
    rectify_keypoints,
    remove_background,
)
from .annotations import (
    LANDMARK_NAMES,
    AnnotationStream,
    FrameAnnotation,
    KeypointSet,
    MaskRaster,
    load_stream,
    parse_annotation_line,
    save_stream,
    serialize_annotation,
)
from .barcode import (
    BITS,
    GRID_COLS,
    GRID_ROWS,
    Barcode,
    bitwise_mode,
    encode,
    hamming,
    matching_backend,
    otsu_threshold,
)
from .cattlog import (
    Cattlog,
    CattlogEntry,
    enroll,
    load,
    match_top_k,
    save,
)
from .cowfinder import (
    Detection,
    EvaluationResult,
    FinderConfig,
    Segment,
    cluster_detections,
    evaluate_segments,
    find_cows,
    load_segments_csv,
    merge_consecutive,
    save_segments_csv,
    threshold_filter,
)
from .errors import (
    AlignmentError,
    CatalogError,
    CatalogVersionError,
    ConflictError,
    CowBarcodeError,
    EncodeError,
    EnrollmentError,
    NoEvidenceError,
    ParseError,
    RenderError,
    ScheduleError,
    StreamOrderError,
    ValidationError,
)
from .pipeline import file_image_loader, frame_barcode, load_image
from .recognizer import (
    FrameMatch,
    FrameSkipRecord,
    VideoPrediction,
    recognize_frame,
    recognize_video,
)
from .synthherd import (
    CoatPattern,
    Pose,
    ScenarioBundle,
    WalkEntry,
    WalkSchedule,
    generate_clip,
    generate_coat,
    generate_scenario,
    render_canonical,
    render_frame,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "AnnotationStream", "BITS", "Barcode", "CANVAS_HEIGHT",
    "CANVAS_WIDTH", "CatalogError", "CatalogVersionError", "Cattlog",
    "CattlogEntry", "CheckReport", "CoatPattern", "ConflictError",
    "CowBarcodeError", "DEFAULT_TEMPLATE", "Detection", "EncodeError",
    "EnrollmentError", "EvaluationResult", "FinderConfig", "FrameAnnotation",
    "FrameMatch", "FrameSkipRecord", "GRID_COLS", "GRID_ROWS",
    "KeypointSet", "LANDMARK_NAMES", "MaskRaster", "NoEvidenceError",
    "ParseError", "Pose", "RenderError", "ScenarioBundle", "ScheduleError",
    "Segment", "StreamOrderError", "TEMPLATE_ID", "TemplateShape",
    "TemplateWarp", "ValidationError", "VideoPrediction", "WalkEntry",
    "WalkSchedule", "align_to_template", "bitwise_mode", "check_keypoints",
    "cluster_detections", "encode", "enroll", "evaluate_segments",
    "file_image_loader", "find_cows", "frame_barcode", "generate_clip",
    "generate_coat", "generate_scenario", "hamming", "is_enrollable", "load",
    "load_image", "load_segments_csv", "load_stream", "match_top_k",
    "matching_backend", "merge_consecutive", "otsu_threshold",
    "parse_annotation_line", "recognize_frame", "recognize_video",
    "rectify_keypoints", "remove_background", "render_canonical",
    "render_frame", "save", "save_segments_csv", "save_stream",
    "serialize_annotation", "threshold_filter",
]
