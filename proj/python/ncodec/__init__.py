"""Streamable neural audio codec: coding, streaming, bitstreams and metrics."""

from ._ncodec import (
    Codec,
    Error,
    StreamDecoder,
    StreamEncoder,
    cli,
    config_hash,
    f0_metrics,
    load_codec,
    load_config,
    lsd,
    mcd,
    seeded_codec,
    synth_speech,
    unpack,
)

__all__ = [
    "Codec",
    "Error",
    "StreamDecoder",
    "StreamEncoder",
    "cli",
    "config_hash",
    "f0_metrics",
    "load_codec",
    "load_config",
    "lsd",
    "mcd",
    "seeded_codec",
    "synth_speech",
    "unpack",
]
