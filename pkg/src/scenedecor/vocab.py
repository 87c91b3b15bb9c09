"""Foreground class vocabulary and display palette."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import VocabularyError

# The 12 foreground furniture classes, in index order. Indices are stable:
# serialized documents store names, so reordering this tuple would only break
# raw-index consumers (checkpoint layouts), never documents.
DEFAULT_CLASSES = (
    "cabinet",
    "picture",
    "bed",
    "curtain",
    "chair",
    "television",
    "sofa",
    "nightstand",
    "table",
    "lamp",
    "desk",
    "pillow",
)

# Classes present in both empty and decorated renders; never annotated as
# placeable objects.
BACKGROUND_CLASSES = frozenset({"window", "door", "wall", "ceiling", "floor"})

# Display colors (hex RGB) for overlays and the studio UI, one per class.
DEFAULT_PALETTE = (
    "#8dd3c7",
    "#ffed6f",
    "#bebada",
    "#fb8072",
    "#80b1d3",
    "#fdb462",
    "#b3de69",
    "#fccde5",
    "#d9d9d9",
    "#bc80bd",
    "#ccebc5",
    "#ffffb3",
)


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered set of foreground class names; index == layout channel."""

    classes: tuple[str, ...] = DEFAULT_CLASSES
    palette: tuple[str, ...] = field(default=DEFAULT_PALETTE)

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise VocabularyError("class names must be unique")
        if not self.classes:
            raise VocabularyError("vocabulary must contain at least one class")
        if len(self.palette) < len(self.classes):
            # Pad with a neutral gray so custom vocabularies stay usable.
            pad = ("#888888",) * (len(self.classes) - len(self.palette))
            object.__setattr__(self, "palette", tuple(self.palette) + pad)

    @property
    def size(self) -> int:
        return len(self.classes)

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise VocabularyError(f"unknown class {name!r}") from None

    def name(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.classes):
            raise VocabularyError(f"class index {class_id} out of range 0..{len(self.classes) - 1}")
        return self.classes[class_id]

    def color(self, class_id: int) -> str:
        self.name(class_id)
        return self.palette[class_id]

    def __contains__(self, name: str) -> bool:
        return name in self.classes
