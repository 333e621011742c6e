"""Small shared helpers for the toolkit's text file formats."""

from __future__ import annotations


def fmt_float(x: float) -> str:
    """Floats in CSV/report outputs carry 9 significant digits."""
    return f"{x:.9g}"


def fmt_optional(x) -> str:
    return "" if x is None else fmt_float(float(x))


def parse_optional_float(text: str) -> float | None:
    text = text.strip()
    return None if text == "" else float(text)


def parse_optional_int(text: str) -> int | None:
    text = text.strip()
    return None if text == "" else int(text)
