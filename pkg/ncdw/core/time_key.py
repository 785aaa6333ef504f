from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

from ncdw.core.errors import RangeError

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
FIRST_DATE = date(1970, 1, 1)
END_DATE = date(2100, 1, 1)
MAX_EPOCH_SECONDS = int((datetime(2100, 1, 1, tzinfo=timezone.utc) - EPOCH).total_seconds())

# Bangladesh Standard Time
DEFAULT_ZONE_OFFSET_MINUTES = 360


def zone(offset_minutes):
    """Fixed-offset tzinfo for a zone offset given in minutes"""
    return timezone(timedelta(minutes=offset_minutes))


@dataclass(frozen=True, order=True)
class TimeKey:
    """
    UNIX-format time key: whole seconds since 1970-01-01T00:00:00 UTC.
    Every fact timestamp in the warehouse is stored as one of these.
    """
    epoch_seconds: int

    def __post_init__(self):
        if not isinstance(self.epoch_seconds, int) or isinstance(self.epoch_seconds, bool):
            raise RangeError(f"time key must be an integer, got {self.epoch_seconds!r}")
        if not 0 <= self.epoch_seconds < MAX_EPOCH_SECONDS:
            raise RangeError(f"time key {self.epoch_seconds} outside [0, {MAX_EPOCH_SECONDS})")

    @classmethod
    def from_calendar(cls, moment, zone_offset_minutes=0):
        """
        Build a key from a calendar date-time.

        Naive date-times are read in the given zone offset; aware ones keep
        their own offset. Sub-second parts are discarded.
        """
        if moment.tzinfo is None:
            moment = moment.replace(tzinfo=zone(zone_offset_minutes))
        local_day = moment.date()
        if not FIRST_DATE <= local_day < END_DATE:
            raise RangeError(f"date {local_day.isoformat()} outside [1970-01-01, 2100-01-01)")
        delta = moment - EPOCH
        return cls(delta.days * 86400 + delta.seconds)

    def to_calendar(self, zone_offset_minutes=0):
        """Aware date-time for this key, expressed in the given zone offset"""
        return (EPOCH + timedelta(seconds=self.epoch_seconds)).astimezone(zone(zone_offset_minutes))

    def day(self, zone_offset_minutes=0):
        """Calendar day of this key in the given zone offset"""
        return self.to_calendar(zone_offset_minutes).date()

    def __int__(self):
        return self.epoch_seconds


def make_time_key(calendar, zone_offset_minutes=0):
    """
    Convert a calendar instant into a UTC TimeKey.

    Args:
        calendar: date-time, naive (read in zone_offset_minutes) or aware
        zone_offset_minutes: Offset of the source zone from UTC

    Returns:
        TimeKey: UTC epoch seconds
    """
    return TimeKey.from_calendar(calendar, zone_offset_minutes)


def day_start_key(day, zone_offset_minutes=0):
    """TimeKey of local midnight on a calendar day"""
    return TimeKey.from_calendar(datetime(day.year, day.month, day.day), zone_offset_minutes)
