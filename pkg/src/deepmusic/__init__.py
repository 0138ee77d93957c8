"""Direction-finding toolkit.

Simulates uniform-linear-array snapshots, provides the classical subspace
baselines (grid-scanned and root-polynomial spectra, spatial smoothing, the
stochastic Cramer-Rao bound), generates partitioned-spectrum training
corpora, trains one convolutional network per angular subregion with a
self-contained float32 engine, and benchmarks estimation RMSE and runtime.
"""

from .arraysim import (
    ArrayConfig,
    CovMatrix,
    SnapshotMatrix,
    SourceConfig,
    correlated_pair_covariance,
    ideal_covariance,
    sample_covariance,
    simulate_snapshots,
    steering_matrix,
    steering_vector,
)
from .bench import (
    ExperimentConfig,
    RmseRow,
    RmseTable,
    TimingRow,
    rmse,
    run_correlation_sweep,
    run_rmse_vs_snr,
    time_methods,
)
from .datagen import (
    DatasetConfig,
    InputTensor,
    LabeledSample,
    SpectrumDataset,
    build_input_tensor,
    draw_doa_set,
    generate_dataset,
    label_spectra,
    snr_to_noise_variance,
    split_train_val,
)
from .errors import (
    ConfigError,
    FileFormatError,
    PersistenceError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .estimator import (
    DeepMusicModel,
    DoaEstimate,
    estimate_doas,
    fit_model,
    predict_full_spectrum,
    predict_subspectrum,
)
from .grids import AngularGrid, Partition, make_grid, partition_grid
from .nn import (
    InputStats,
    LayerSpec,
    Network,
    TrainConfig,
    TrainingLog,
    build_deepmusic_network,
    build_network,
    load_checkpoint,
    save_checkpoint,
    sgd_momentum_step,
    train_network,
)
from .rng import complex_normal, derive_seed, substream
from .subspace import (
    DoaResult,
    EigenBasis,
    Spectrum,
    eigendecompose,
    forward_backward_smooth,
    grid_manifold,
    music_spectrum,
    root_music,
    spectral_peaks,
    stochastic_crb,
)

__version__ = "0.1.0"
