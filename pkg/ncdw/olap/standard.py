import logging
from pathlib import Path

from ncdw.core.errors import StorageError
from ncdw.olap.cube import CubeSpec
from ncdw.olap.materialize import materialize_cube

logger = logging.getLogger(__name__)

STANDARD_CUBOIDS = {
    "diagnosis_counts": CubeSpec("testresult", ("diagnosis",), ("count",)),
    "retests": CubeSpec("testresult", ("pik", "test_attribute@code"), ("count",)),
    "month_district": CubeSpec("testresult", ("time@month", "geography@district"),
                               ("count", "pct_true(result_positive)")),
}


def retest_frame(cuboid):
    """
    Per (patient, test) cells with the number of repeat tests: a patient
    tested twice with the same code counts one retest.
    """
    frame = cuboid.measure_frame()
    frame["retests"] = (frame["count"] - 1).clip(lower=0).astype("int64")
    frame["retested"] = frame["count"] > 1
    return frame


def precompute_standard(store, out_dir=None):
    """
    Materialize the aggregates kept ready for routine questions: counts by
    diagnosis, retests per patient and test, and monthly counts per
    district.

    Args:
        store: WarehouseStore
        out_dir: when given, each aggregate is written there as <name>.tsv

    Returns:
        dict: name -> DataFrame of cells with their measures
    """
    results = {}
    for name, spec in STANDARD_CUBOIDS.items():
        base = materialize_cube(spec, store).base
        results[name] = retest_frame(base) if name == "retests" else base.measure_frame()

    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            for name, frame in results.items():
                frame.to_csv(out_dir / f"{name}.tsv", sep="\t", index=False, na_rep="", lineterminator="\n")
        except OSError as e:
            raise StorageError(f"cannot write standard cuboids to {out_dir}: {e}") from e
        logger.info("wrote %d standard cuboids to %s", len(results), out_dir)
    return results
