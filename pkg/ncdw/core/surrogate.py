import threading

from ncdw.core.errors import CapacityError, RangeError

FIRST_KEY = 10000
LAST_KEY = 99999


def check_surrogate(value):
    """Validate that a value is a five-digit surrogate key and return it"""
    if isinstance(value, bool) or not isinstance(value, int) or not FIRST_KEY <= value <= LAST_KEY:
        raise RangeError(f"surrogate key must be an integer in [{FIRST_KEY}, {LAST_KEY}], got {value!r}")
    return value


class KeyAllocator:
    """
    Sequential five-digit key allocator with one counter per dimension.
    Keys start at 10000 and are handed out as previous max + 1.
    Single writer: callers serialize next_key calls for one allocator.
    """
    def __init__(self, last_issued=None):
        self._last = {}
        self._lock = threading.Lock()
        for dimension, key in (last_issued or {}).items():
            if key is not None:
                self._last[dimension] = check_surrogate(int(key))

    def next_key(self, dimension):
        """Issue the next key for a dimension"""
        with self._lock:
            last = self._last.get(dimension)
            key = FIRST_KEY if last is None else last + 1
            if key > LAST_KEY:
                raise CapacityError(
                    f"dimension '{dimension}' exhausted its {LAST_KEY - FIRST_KEY + 1} five-digit keys"
                )
            self._last[dimension] = key
            return key

    def last_issued(self, dimension):
        """Most recent key for a dimension, or None when nothing was issued"""
        return self._last.get(dimension)

    def issued_count(self, dimension):
        last = self._last.get(dimension)
        return 0 if last is None else last - FIRST_KEY + 1

    def snapshot(self):
        return dict(self._last)


def next_surrogate(dimension, allocator):
    """
    Allocate the next surrogate key for a dimension.

    Args:
        dimension: Dimension name
        allocator: KeyAllocator holding per-dimension state

    Returns:
        int: Key in [10000, 99999]
    """
    return allocator.next_key(dimension)
