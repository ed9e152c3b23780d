"""Sparse Pauli-channel estimation from noisy eigenvalue queries."""

from .pauli import (
    Gf2Matrix,
    PauliLabel,
    gf2_matmul,
    gf2_rank,
    gf2_solve_nullspace,
    is_stabilizer_group,
    label_from_string,
    symplectic_product,
    weight,
)
from .wht import inverse_wht, wht, wht_brute, wht_fast_inplace
from .channel import (
    EigenvalueOracle,
    SparsePauliChannel,
    eigenvalue,
    eigenvalues,
    extrapolate_local_averages,
    load_channel,
    plant_paulis,
    random_sparse_channel,
    save_channel,
    tail_profile_channel,
)
from .design import (
    OffsetSet,
    SubsamplingDesign,
    ExperimentDesign,
    local_stabilizer_design,
    make_offsets,
    random_design,
    random_subsampling_matrix,
    type2_design,
)
from .binning import BinTensor, bin_observation_bruteforce, subsample_bins
from .detector import BinVerdict, OffsetCodeSpec, detect, singleton_flip_probability
from .peeler import PeelConfig, RecoveryResult, noisy_peel, peel, predicted_edge_survival
from .metrics import RecoveryReport, compare, tv_distance

__version__ = "0.1.0"
