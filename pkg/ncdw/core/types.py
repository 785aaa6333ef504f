import re
from dataclasses import dataclass
from enum import Enum

from ncdw.core.errors import ValidationError
from ncdw.core.surrogate import check_surrogate
from ncdw.core.text import normalize_text

_PIK_PATTERN = re.compile(r"^[0-9a-f]{32}$")
PIK_LENGTH = 32


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    OTHER = "other"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, raw):
        """Map a free-text gender value onto the four canonical values"""
        value = normalize_text(raw)
        if value in ("m", "male", "man", "boy"):
            return cls.MALE
        if value in ("f", "female", "woman", "girl"):
            return cls.FEMALE
        if value in ("o", "other", "third", "third gender", "hijra"):
            return cls.OTHER
        return cls.UNKNOWN


@dataclass(frozen=True)
class PIK:
    """
    Patient Identifier Key: pseudonymous replacement for direct identifiers.
    Always 32 lowercase hexadecimal characters.
    """
    value: str

    def __post_init__(self):
        if not isinstance(self.value, str) or not _PIK_PATTERN.match(self.value):
            raise ValidationError(f"PIK must be {PIK_LENGTH} lowercase hex characters")

    def __str__(self):
        return self.value


GEO_LEVELS = ("city", "upazila", "district", "division")


def geo_tuple(city="", upazila="", district="", division=""):
    """Normalized (city, upazila, district, division) natural key"""
    return tuple(normalize_text(part) for part in (city, upazila, district, division))


@dataclass(frozen=True)
class GeoKey:
    """
    One row of the GEOGRAPHY dimension: a surrogate key plus the
    normalized administrative hierarchy it stands for.
    """
    key: int
    city: str
    upazila: str
    district: str
    division: str

    def __post_init__(self):
        check_surrogate(self.key)
        for level in GEO_LEVELS:
            object.__setattr__(self, level, normalize_text(getattr(self, level)))

    @property
    def natural_key(self):
        return (self.city, self.upazila, self.district, self.division)
