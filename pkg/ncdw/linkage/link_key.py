import hashlib
import hmac
from dataclasses import dataclass, field

from ncdw.core.errors import KeyMaterialError, ValidationError
from ncdw.core.text import normalize_text
from ncdw.core.types import PIK, PIK_LENGTH, Gender
from ncdw.linkage.soundex import CODE_LENGTH, encode_full_name

MIN_SECRET_BYTES = 16
MAX_AGE_BAND = 12


def age_band(age):
    """Decade index of an age in years, clamped to [0, 12]"""
    band = int(float(age) // 10)
    return max(0, min(MAX_AGE_BAND, band))


@dataclass(frozen=True)
class LinkKey:
    """
    Blocking key for one patient occurrence: phonetic codes of every name
    token, decade age band, gender and an optional geography key.
    """
    token_codes: tuple
    age_band: int
    gender: Gender = Gender.UNKNOWN
    geo: int | None = field(default=None, compare=True)

    def __post_init__(self):
        codes = tuple(self.token_codes)
        if not codes:
            raise ValidationError("link key needs at least one token code")
        for code in codes:
            if len(code) != CODE_LENGTH:
                raise ValidationError(f"invalid soundex code {code!r}")
        if not 0 <= int(self.age_band) <= MAX_AGE_BAND:
            raise ValidationError(f"age band {self.age_band} outside [0, {MAX_AGE_BAND}]")
        object.__setattr__(self, "token_codes", codes)
        object.__setattr__(self, "age_band", int(self.age_band))
        object.__setattr__(self, "gender", Gender(self.gender))

    @classmethod
    def from_patient(cls, full_name, age, gender, geo=None):
        """Build a key from raw patient attributes"""
        return cls(tuple(encode_full_name(full_name)), age_band(age), Gender.parse(gender), geo)

    @property
    def code_block(self):
        """Order-insensitive multiset of token codes used for blocking"""
        return tuple(sorted(self.token_codes))


def canonical_form(link_key, dob_or_age):
    """Deterministic serialization of the pseudonymizer inputs"""
    return "|".join((
        "codes=" + ",".join(link_key.code_block),
        f"age_band={link_key.age_band}",
        f"gender={link_key.gender.value}",
        "dob_or_age=" + normalize_text(dob_or_age),
    ))


def make_pik(link_key, dob_or_age, secret):
    """
    Derive the pseudonymous patient identifier.

    Args:
        link_key: LinkKey of the patient occurrence
        dob_or_age: Date of birth when known, otherwise the stated age
        secret: Link key bytes (at least 16)

    Returns:
        PIK: keyed one-way digest, 32 hex characters
    """
    if not isinstance(secret, (bytes, bytearray)) or len(secret) < MIN_SECRET_BYTES:
        raise KeyMaterialError(f"link key must be at least {MIN_SECRET_BYTES} bytes")
    digest = hmac.new(bytes(secret), canonical_form(link_key, dob_or_age).encode("utf-8"), hashlib.sha256)
    return PIK(digest.hexdigest()[:PIK_LENGTH])
