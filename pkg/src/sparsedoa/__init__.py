"""Sparse direction-of-arrival and line-spectral estimation toolkit."""

from .arrays import (
    ArrayGeometry,
    SteeringDictionary,
    doa_to_freq,
    freq_to_doa,
    identifiability_check,
    min_separation,
    mutual_coherence,
    planar,
    row_selector,
    sla,
    spark_bruteforce,
    steering_matrix,
    steering_vector,
    ula,
    wrap_distance,
    wrap_frequency,
)
from .admm import AdmmConfig, BlockSdpProblem, SdpSolution, admm_solve, psd_project
from .gridless import (
    GridlessConfig,
    anm,
    anm_smv_cov,
    atomic_l0_bruteforce,
    default_eta,
    default_lambda,
    emac,
    gls,
    gls_from_covariance,
    nnm_music,
    nuclear_ball_denoise,
    ram,
    reduce_snapshots_gridless,
    weighted_anm,
)
from .offgrid import OffsetSolution, TaylorDictionary, offgrid_alternating, offgrid_joint
from .ongrid import (
    GridSolverConfig,
    RowSparseSolution,
    group_lasso,
    l21_bpdn,
    l21_lasso,
    l21_svd_reduce,
    m_focuss,
    mle_em,
    reduce_snapshots,
    slim,
    spice,
    sr_lasso,
)
from .retrieval import (
    LineSpectrum,
    MatchReport,
    esprit,
    match_and_score,
    model_order,
    music,
    noise_split_decompose,
    vandermonde_decompose,
)
from .signals import (
    SnapshotMatrix,
    SourceScenario,
    coarray_average,
    diag_sum,
    hankel_lift,
    sample_covariance,
    simulate,
    toeplitz,
    virtual_snapshot,
)

__version__ = "0.1.0"
