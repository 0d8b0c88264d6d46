"""One-shot beam alignment simulator for cell-free mmWave massive MIMO."""

from .airlink import (QuadraticObservables, beamspace_gain, draw_slot_gains, noise_variance,
                      synthesize_observables)
from .beamspace import (DftDictionary, array_response, dft_matrix, nearest_grid_index,
                        to_beamspace)
from .estimators import (PairEstimate, build_sco_row, mco_accumulate, mco_estimate, nnls_solve,
                         sco_estimate, select_top_pairs)
from .harness import (DetectionStats, GroundTruth, RunConfig, associate_ues, compute_ground_truth,
                      evaluate_detection, export_results, run_monte_carlo)
from .patterns import (DataPattern, PatternAssignment, UeCodebook, assign_patterns_lb,
                       assign_patterns_random, build_patterns, build_ue_codebook, num_patterns)
from .scenario import (ChannelGeometry, ChannelPath, ScenarioDrop, SimParams,
                       build_channel_geometry, generate_drop, los_probability, path_loss_gain)

__version__ = "0.1.0"
