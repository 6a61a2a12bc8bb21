"""Prompt templates and structured-output extraction.

Template files live in ``interactsim/prompts``. Everything above the first
``---`` line is the system message, everything below is the user message;
``$name`` placeholders are filled with :class:`string.Template`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional, Union

from .errors import FormatError


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: Template
    user: Template

    def render(self, **values) -> tuple[str, str]:
        values = {k: ("" if v is None else str(v)) for k, v in values.items()}
        return self.system.substitute(values).strip(), self.user.substitute(values).strip()


def parse_template(name: str, text: str) -> PromptTemplate:
    head, sep, body = text.partition("\n---\n")
    if not sep:
        head, body = "", text
    return PromptTemplate(name, Template(head), Template(body))


@lru_cache(maxsize=None)
def load_prompt(name: str, directory: Optional[str] = None) -> PromptTemplate:
    if directory:
        text = Path(directory, f"{name}.txt").read_text("utf-8")
    else:
        text = resources.files("interactsim").joinpath(f"prompts/{name}.txt").read_text("utf-8")
    return parse_template(name, text)


_TASK_RE = re.compile(r"\[task:\s*([^\]]+)\]")


def task_tag(system_message: str) -> Optional[str]:
    m = _TASK_RE.search(system_message or "")
    return m.group(1).strip() if m else None


def iter_json_objects(text: str):
    """Yield every top-level ``{...}`` substring found by a balanced-brace scan.

    Braces inside JSON string literals are ignored.
    """
    depth = 0
    start = None
    in_str = False
    escape = False
    for i, ch in enumerate(text):
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"' and depth > 0:
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                yield text[start : i + 1]
                start = None


def extract_json_block(text: str, required_key: Optional[str] = None) -> dict:
    """Return the last parseable JSON object in ``text`` (optionally one holding ``required_key``)."""
    found = None
    for chunk in iter_json_objects(text or ""):
        try:
            obj = json.loads(chunk)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and (required_key is None or required_key in obj):
            found = obj
    if found is None:
        raise FormatError("no parseable JSON block" + (f" with key {required_key!r}" if required_key else ""))
    return found


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


JsonLike = Union[dict, list, str, int, float, None]
