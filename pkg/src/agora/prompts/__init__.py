"""Prompt template loading and placeholder rendering.

Templates are plain-text assets in this package using ``{{name}}``
placeholders. Placeholder names are a contract shared with the template
files; rendering is strict in both directions (a value without a matching
placeholder or a leftover unfilled one is an error) and purely textual, so
identical inputs always produce identical prompts.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_PLACEHOLDER = re.compile(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, **values: object) -> str:
    template = load_template(name)
    wanted = set(_PLACEHOLDER.findall(template))
    missing = wanted - values.keys()
    if missing:
        raise KeyError(f"template {name!r} missing values for: {sorted(missing)}")
    extra = values.keys() - wanted
    if extra:
        raise KeyError(f"template {name!r} has no placeholders for: {sorted(extra)}")
    # Replacement via callable: inserted values are never re-scanned, so
    # candidate code containing brace pairs cannot corrupt the prompt.
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), template)
