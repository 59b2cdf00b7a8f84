"""Decode bitmap word clouds back into (word, weight) data."""
from cloudecode.config import PipelineConfig
from cloudecode.errors import CloudDecodeError, ConfigError, DecodeError, LayoutError
from cloudecode.raster import RasterImage, load_image
from cloudecode.sizing import CloudData, DecodedWord, decode_cloud

__all__ = [
    "CloudData", "CloudDecodeError", "ConfigError", "DecodeError", "DecodedWord", "LayoutError",
    "PipelineConfig", "RasterImage", "decode_cloud", "load_image",
]
__version__ = "0.1.0"
