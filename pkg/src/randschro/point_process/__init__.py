"""Sampling and statistics of the limiting point processes."""

from .kolmogorov import count_tail_probability, relative_phase_tail
from .sampling import (PointSample, SineBetaCounts, carousel_counts, count_sine_beta, lattice_count,
                       sample_sch_points, sch_counts, sch_counts_grid, sch_phase, sch_star_counts,
                       sine_beta_tape, write_points_csv)
from .stats import (StatReport, clt_report, compare_distributions, density_report, floor_difference_law,
                    gap_report, intensity_report, ks_two_sample, mean_se, repulsion_bounds, repulsion_report,
                    sine_beta_clt_report, theta_cell_mass, theta_density, var_se, wegner_minami_bounds,
                    wegner_minami_report, zero_event_upper)
