from ncdw.olap.cube import CubeLattice, CubeSpec, Cuboid, DimRef, Measure, lattice_order
from ncdw.olap.materialize import Strategy, materialize_cube, prepare_frame
from ncdw.olap.operations import coarsen, dice, drilldown, rollup, slice_cube
from ncdw.olap.standard import STANDARD_CUBOIDS, precompute_standard, retest_frame
