"""Synthetic clips, pools, episodes and corruption protocols."""

from .episodes import Episode, EpisodeKeys, FilePool, SynthPool, sample_episode, sample_episode_keys
from .noise import inject_frame_noise, inject_sample_noise, inject_visual_noise
from .otv import read_manifest, read_otv, write_manifest, write_otv
from .synth import CLASSES, REVERSE_PAIRS, SynthConfig, VideoSample, synth_generate

__all__ = [
    "CLASSES",
    "REVERSE_PAIRS",
    "Episode",
    "EpisodeKeys",
    "FilePool",
    "SynthConfig",
    "SynthPool",
    "VideoSample",
    "inject_frame_noise",
    "inject_sample_noise",
    "inject_visual_noise",
    "read_manifest",
    "read_otv",
    "sample_episode",
    "sample_episode_keys",
    "synth_generate",
    "write_manifest",
    "write_otv",
]
