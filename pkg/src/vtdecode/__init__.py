"""Unsupervised temporal filter learning for voxel-time decoding."""

from .autoencoder import (AEHyper, AEParams, CostBreakdown, DivergenceError,
                          FilterBank, cost, forward, gradient, init_params,
                          kl_sparsity, load_filterbank, save_filterbank, train)
from .convnet import (PipelineConfig, PipelineModel, ResponseStack, apply_block,
                      load_model, output_dim, pretrain, save_model,
                      spatial_max_pool, temporal_convolve, transform)
from .dataset import (ConfigError, DatasetFormatError, HeaderError, Label,
                      PayloadError, SamplingError, SynthConfig, VersionError,
                      VTDataset, WindowSet, generate_synthetic, load_dataset,
                      sample_windows, save_dataset, test_exclusion_columns)
from .decode import (DesignMatrix, HRFKernel, cnn_features, hrf_kernel,
                     hrf_mvpa_features, knn_classify, raw_mvpa_features,
                     t_mvpa_features)
from .harness import (EvalReport, LearningCurve, accuracy, binomial_pvalue,
                      emit_report, learning_curve, run_experiment, stage_seed)
from .hyperselect import (DegenerateFilterError, GridEntry, GridResult,
                          HyperGrid, decorrelation_distance, filter_correlation,
                          grid_search)

__version__ = "0.1.0"
