"""HTC-2022 MATLAB container converter: portable rasters + geometry JSON."""

from .convert import convert, verify
from .matfile import HtcFormatError, HtcRecord, load_record, load_segmentation

__all__ = ["convert", "verify", "HtcFormatError", "HtcRecord",
           "load_record", "load_segmentation"]
