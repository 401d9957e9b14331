from .quant import ATTR_ORDER, AttrSpec, QuantSpec, dequantize_attr, quantize_attr
from .vocab import CLASSES, SPECIALS, Vocabulary
from .events import (DEFAULT_BLOCK_SIZE, DEFAULT_CONDITION_LENGTH,
                     FrameParseError, TokenEvent, TokenWindow, build_window,
                     decode_frame, encode_frame, logical_event_count,
                     stored_velocity, KIND_KEY, KIND_SPECIAL, KIND_VALUE)
from .masks import (SLOT_ATTR, SLOT_LIGHT_STATE, SLOT_NEWBORN_CLASS,
                    SLOT_NEWBORN_KEY, SLOT_TRACKED_KEY, SlotDescriptor,
                    valid_mask)

__all__ = [
    "ATTR_ORDER", "AttrSpec", "QuantSpec", "quantize_attr", "dequantize_attr",
    "CLASSES", "SPECIALS", "Vocabulary",
    "DEFAULT_BLOCK_SIZE", "DEFAULT_CONDITION_LENGTH", "FrameParseError",
    "TokenEvent", "TokenWindow", "build_window", "decode_frame", "encode_frame",
    "logical_event_count", "stored_velocity",
    "KIND_KEY", "KIND_SPECIAL", "KIND_VALUE",
    "SLOT_ATTR", "SLOT_LIGHT_STATE", "SLOT_NEWBORN_CLASS", "SLOT_NEWBORN_KEY",
    "SLOT_TRACKED_KEY", "SlotDescriptor", "valid_mask",
]
