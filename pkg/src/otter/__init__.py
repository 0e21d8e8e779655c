"""Few-shot action recognition for wide-angle clips with RWKV-style mixing."""

__version__ = "0.1.0"
