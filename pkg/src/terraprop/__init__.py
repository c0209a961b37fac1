"""Terrain radio-propagation laboratory.

Path loss over 1D terrain profiles from a forward-scattering EFIE
method-of-moments solver (exact back substitution or the fast far-field
approximation), statistically controlled terrain synthesis, a binary
dataset pipeline, reference diffraction baselines, and a NumPy inference
engine for trained 1D U-Net surrogates.
"""

from .emcore import ETA0, RadioConfig, hankel2_0, incident_field, wavenumber
from .terrain import (FractalParams, GaussianParams, TerrainProfile,
                      estimate_stats, gen_fractal, gen_gaussian)
from .mom import (BasisSet, PathLossProfile, SolverConfig, SurfaceCurrent,
                  discretize, path_gain, scattered_field, solve_exact,
                  solve_faffa, solve_profile)
from .baselines import (KnifeEdgeResult, deygout_loss, fresnel_v,
                        knife_edge_loss, two_ray_reference)
from .dataset import (DatasetHeader, PathLossRecord, generate_dataset,
                      ingest_measured, read_records, split, write_records)
from .inference import (SurrogatePrediction, UNetWeights, forward,
                        forward_batch, load_weights, standard_layer_plan,
                        write_weights)
from .evalreport import ErrorStats, compare_table, emit_plot_data, error_stats

__version__ = "0.1.0"
