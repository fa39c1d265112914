"""Persona prompt files.

A persona file is UTF-8 text: a ``---`` delimited header of ``key: value``
lines (id, display_name, mbti_axis) followed by the prompt text itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

PERSONA_IDS = ("Thinker", "Realist", "Feeler")


@dataclass(frozen=True)
class Persona:
    id: str
    display_name: str
    prompt_text: str
    mbti_axis: str = ""

    def __post_init__(self) -> None:
        if not self.prompt_text.strip():
            raise ValueError(f"persona {self.id!r} has an empty prompt")


def parse_persona(text: str) -> Persona:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "---":
        raise ValueError("persona file must start with a '---' header")
    try:
        end = next(i for i in range(1, len(lines)) if lines[i].strip() == "---")
    except StopIteration:
        raise ValueError("persona header is not closed with '---'") from None
    header = {}
    for line in lines[1:end]:
        if line.strip():
            key, sep, value = line.partition(":")
            if not sep:
                raise ValueError(f"bad header line {line!r}")
            header[key.strip()] = value.strip()
    for key in ("id", "display_name"):
        if key not in header:
            raise ValueError(f"persona header lacks {key!r}")
    body = "\n".join(lines[end + 1 :]).strip()
    # Paragraphs are hard-wrapped in the files; the prompt gets one line each.
    prompt = "\n\n".join(" ".join(p.split()) for p in body.split("\n\n"))
    return Persona(header["id"], header["display_name"], prompt, header.get("mbti_axis", ""))


def load_persona(name_or_path: str | Path) -> Persona:
    """Load a bundled persona by id (case-insensitive) or a persona file by path."""
    path = Path(name_or_path)
    if path.suffix == ".txt" and path.exists():
        return parse_persona(path.read_text(encoding="utf-8"))
    name = str(name_or_path).lower()
    if name.capitalize() not in PERSONA_IDS:
        raise KeyError(f"unknown persona {name_or_path!r}; bundled: {', '.join(PERSONA_IDS)}")
    text = resources.files("agentlab.agent").joinpath("personas", f"{name}.txt").read_text("utf-8")
    return parse_persona(text)


def bundled_personas() -> list[Persona]:
    return [load_persona(p) for p in PERSONA_IDS]
