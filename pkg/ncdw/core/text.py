import re
import unicodedata

_WHITESPACE = re.compile(r"\s+")


def normalize_text(value):
    """
    Normalize free text for dimension deduplication.

    Args:
        value: Raw attribute value (None is treated as empty)

    Returns:
        str: Trimmed, whitespace-collapsed, case-folded text
    """
    if value is None:
        return ""
    return _WHITESPACE.sub(" ", str(value)).strip().casefold()


def strip_diacritics(value):
    """
    Remove combining marks so that transliterated names compare equal.

    Args:
        value: Text possibly containing accented letters

    Returns:
        str: The same text with diacritics removed
    """
    decomposed = unicodedata.normalize("NFKD", value)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))
