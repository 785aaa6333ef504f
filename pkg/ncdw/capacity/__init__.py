from ncdw.capacity.estimator import (
    CapacityInputs, CapacityReport, CategoryLoad, HospitalCategory, StorageEstimate, average_daily_records,
    category_load, category_load_exact, national_load, reference_inputs, storage_size,
)
