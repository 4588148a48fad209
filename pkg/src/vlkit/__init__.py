"""Multimodal input machinery for vision-language models with native-resolution vision encoders."""

from .geometry import PatchGrid, llm_token_count, smart_resize, vit_token_count
from .rope import (
    ImageSpan,
    MRopeIds,
    RopeConfig,
    TextSpan,
    VideoSpan,
    apply_mrope,
    mrope_ids_image,
    mrope_ids_sequence,
    mrope_ids_text,
    mrope_ids_video,
)
from .encoder import PRESETS, EncoderConfig, WindowLayout, window_partition
from .videopipe import FrameSampling, format_timestamp, pair_frames, parse_timestamp, plan_video, sample_frames
from .packing import PackedBatch, pack
from .grounding import BBox, Point, TimeSpan, iou, miou, parse_spatial_output, serialize_spatial, temporal_iou
from .docformat import DocElement, DocTree, parse_qwenvl_html, serialize_qwenvl_html

__version__ = "0.1.0"
