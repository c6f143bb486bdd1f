"""Bundled RTL syntax-error knowledge base.

Each document pairs a compiler error pattern with fix guidance, so a raw
error message used as a retrieval query surfaces the matching remedy.
"""

from __future__ import annotations

from pathlib import Path

from ..knowledge import KnowledgeBase, load_kb_dir

RTL_KB_NAME = "rtl_syntax"


def rtl_kb_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "rtl_syntax_kb"


def seed_rtl_syntax_kb() -> KnowledgeBase:
    """Load the bundled corpus; document ids are the file stems."""
    return load_kb_dir(RTL_KB_NAME, rtl_kb_dir())
