"""Python surface over the symmetria C++ core.

The extension module does the heavy lifting; this package re-exports it and
adds small conveniences for dict-based configs.
"""

import json as _json

from _symmetria import (  # noqa: F401
    canonical_config,
    check,
    eval_checkpoint,
    generate_glyphs,
    glyph_bitmap,
    glyph_count,
    inspect,
    run,
    version,
)

__all__ = [
    "canonical_config",
    "check",
    "eval_checkpoint",
    "generate_glyphs",
    "glyph_bitmap",
    "glyph_count",
    "inspect",
    "run",
    "run_config",
    "version",
]


def run_config(config: dict, resume: bool = False) -> dict:
    """Run an experiment described by a plain dict (serialised to JSON)."""
    return run(_json.dumps(config), resume=resume)
