from ncdw.core.surrogate import FIRST_KEY, LAST_KEY, KeyAllocator, next_surrogate
from ncdw.core.time_key import DEFAULT_ZONE_OFFSET_MINUTES, TimeKey, make_time_key
from ncdw.core.types import PIK, GeoKey, Gender, geo_tuple
