from ncdw.linkage.index import LinkageIndex, MatchGrade, match_records
from ncdw.linkage.link_key import LinkKey, age_band, make_pik
from ncdw.linkage.soundex import encode_full_name, soundex_encode
