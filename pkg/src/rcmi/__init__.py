"""Row-centric lossless compression laboratory for binary Markov images."""

from .calibrate import (CalibrationResult, CalibrationTable, calibrate_corpus,
                        estimate_target_moment, exact_target_moment,
                        solve_theta_star)
from .chain import (BlockModel, backward_pass, block_conditional_entropy,
                    block_moment, build_block_model, column_pair_weight,
                    column_unary_weight, next_column_distribution)
from .coder import (QuantizedDistribution, RangeDecoder, RangeEncoder,
                    measure_ideal_bits, quantize)
from .grid import (enumerate_exact, gibbs_sample, grid_edges,
                   log_unnormalized_prob, validate_image)
from .pbm import read_pbm, write_pbm
from .schemes import (ContextTable, decode, encode_empirical_1sided,
                      encode_model_0sided, encode_model_1sided, encode_rcc,
                      train_context_table)

__version__ = "0.1.0"
