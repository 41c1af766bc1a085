"""latfield: lattice toolkit for the 2d O(N) linear sigma model.

Gap equations in all four regularizations, exact spectral sampling of the
massive GFF, Wick-ordered quartic observables, exact-target HMC with
thermodynamic integration, Gaussian information geometry in closed form,
and the estimators that tie them together.
"""

from .spectral import (TorusSpec, FrequencyLattice, CountertermScheme,
                       build_frequency_lattice, cutoff_eta, counterterm,
                       cutoff_counterterm, greens_function, lattice_propagator,
                       fft_forward, fft_inverse, hminus1_inner, mode_numbers)
from .gff import (SpectralCovariance, FieldConfig, rng_stream, sample_gff,
                  sample_gff_batch, relative_entropy_density, gaussian_w2_h1m,
                  wick_mass_log_mgf, talagrand_gaussian_check)
from .wick import (WickContext, hermite, wick_norm2, wick_norm4,
                   wick_norm4_hermite, quartic_action, action_lower_bound,
                   quartic_covariance_exact, quartic_covariance_exact_lattice,
                   mc_quartic_second_moment)
from .gap import (GapProblem, GapSolution, solve_gap_continuum,
                  solve_gap_n_continuum, solve_gap_finite, solve_gap_cutoff,
                  solve_gap_lattice, lattice_sum_h, lattice_sum_h_derivative,
                  verify_poisson_identity, verify_riemann_bounds,
                  verify_nelson_integral_bound)
from .mcmc import (ModelParams, ChainState, Schedule, MeasurementRecord,
                   ChainResult, lattice_action, action_gradient,
                   action_form_shift, hmc_step, run_chain, initial_field,
                   thermo_integrate_logz, estimate_relative_entropy,
                   direct_partition_estimate)
from .analysis import (Correlator, TrendReport, correlator_series,
                       two_point_function, correlator_from_series,
                       effective_mass, dispersion_mass,
                       connected_four_cumulant, cylindrical_observable_gap,
                       mode_variance_spectrum, h1_variance_proxy,
                       mass_beta_scan, bump_test_function, smeared_field,
                       gaussian_smeared_variance, integrated_autocorrelation,
                       effective_sample_size, jackknife, jackknife_mean)

__version__ = "0.1.0"
