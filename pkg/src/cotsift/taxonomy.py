"""Embedded discipline/field/sub-field taxonomy used for question labeling.

The taxonomy is a three-level tree with 13 top-level disciplines. It is
stored as package data and rendered into the domain-annotation prompt as a
dict literal; `parse_taxonomy_literal` round-trips that rendering, which the
test suite uses to keep prompt text and structured data in sync.
"""

from __future__ import annotations

import ast
import json
from functools import lru_cache
from importlib import resources

UNLABELED = "unlabeled"

Taxonomy = dict[str, dict[str, list[str]]]


@lru_cache(maxsize=1)
def load_taxonomy() -> Taxonomy:
    text = resources.files("cotsift").joinpath("_data/taxonomy.json").read_text("utf-8")
    return json.loads(text)


def disciplines() -> list[str]:
    return list(load_taxonomy().keys())


def is_valid_path(discipline: str, field: str, sub_field: str) -> bool:
    """True when (discipline, field, sub_field) is a path in the taxonomy."""
    tax = load_taxonomy()
    return sub_field in tax.get(discipline, {}).get(field, ())


def format_taxonomy_literal(taxonomy: Taxonomy | None = None) -> str:
    """Render the taxonomy as the dict literal embedded in the domain prompt.

    One sub-field per line, with the hanging indentation of a pretty-printed
    Python literal. The output parses back via ast.literal_eval.
    """
    tax = taxonomy if taxonomy is not None else load_taxonomy()
    discipline_parts = []
    for discipline, fields in tax.items():
        field_parts = []
        for field, subs in fields.items():
            subs_text = ",\n   ".join(repr(s) for s in subs)
            field_parts.append(f"{field!r}: [{subs_text}]")
        discipline_parts.append(f"{discipline!r}: {{" + ",\n  ".join(field_parts) + "}")
    return "{" + ",\n ".join(discipline_parts) + "}"


def parse_taxonomy_literal(text: str) -> Taxonomy:
    """Parse a taxonomy dict literal back into structured form."""
    return ast.literal_eval(text)
