"""
Phonetic name codes for record linkage.

This Soundex variant keeps the first letter, then appends the digit of every
later letter whose digit differs from the previously appended one. Letters
without a digit (vowels, H, W, Y) are skipped and do NOT reset the previous
digit, unlike classic American Soundex. Codes are padded with '0' or truncated
to four characters.
"""
import logging
import re

from ncdw.core.errors import InvalidNameError
from ncdw.core.text import strip_diacritics

logger = logging.getLogger(__name__)

CODE_LENGTH = 4

_GROUPS = {
    "BFPV": "1",
    "CGJKQSXZ": "2",
    "DT": "3",
    "L": "4",
    "MN": "5",
    "R": "6",
}
MAPPING = {letter: digit for letters, digit in _GROUPS.items() for letter in letters}

_NON_LETTERS = re.compile(r"[^A-Z]")


def normalize_token(token):
    """Strip diacritics, uppercase and drop everything that is not A-Z"""
    return _NON_LETTERS.sub("", strip_diacritics(token).upper())


def soundex_encode(name_token):
    """
    Encode one name token into its four-character code.

    Args:
        name_token: A single name token, any script transliterated to Latin

    Returns:
        str: First letter followed by three digits from {0..6}
    """
    letters = normalize_token(name_token)
    if not letters:
        raise InvalidNameError(f"name token {name_token!r} has no encodable letters")

    code = [letters[0]]
    previous = MAPPING.get(letters[0])
    for letter in letters[1:]:
        digit = MAPPING.get(letter)
        if digit is None:
            continue
        if digit != previous:
            code.append(digit)
            previous = digit
        if len(code) == CODE_LENGTH:
            break

    return "".join(code).ljust(CODE_LENGTH, "0")[:CODE_LENGTH]


def encode_full_name(full_name):
    """
    Encode every whitespace-separated token of a full name.
    Tokens with no letters are dropped; at least one must survive.
    """
    codes = []
    for token in (full_name or "").split():
        try:
            codes.append(soundex_encode(token))
        except InvalidNameError:
            logger.debug("dropping unencodable name token")
    if not codes:
        raise InvalidNameError("name has no encodable token")
    return codes
