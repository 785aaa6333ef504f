from ncdw.datamart.analytics import (
    age_distribution, age_share_below, correlate_environment, correlation_table, monthly_distribution,
    weekday_profile,
)
from ncdw.datamart.mart import MartSpec, derive_mart, load_codes, mart_root, open_mart
from ncdw.datamart.outbreak import OutbreakReport, OutbreakRun, detect_outbreak
from ncdw.datamart.report import MartReport, build_mart_report, write_mart_report
from ncdw.datamart.series import MonthlySeries, build_monthly_series, month_label
