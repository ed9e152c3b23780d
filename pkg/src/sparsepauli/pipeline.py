"""End-to-end recovery runs: design, oracle sampling, binning, peeling."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .binning import BinTensor, subsample_bins
from .channel import EigenvalueOracle, SparsePauliChannel
from .design import SubsamplingDesign, local_stabilizer_design, random_design, type2_design
from .detector import OffsetCodeSpec
from .peeler import PeelConfig, RecoveryResult, noisy_peel, peel


@dataclass
class Run:
    result: RecoveryResult
    design: SubsamplingDesign
    bins: BinTensor
    seconds: float


def _split_seed(seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def recover_provable(
    channel: SparsePauliChannel,
    xi: float,
    b: int,
    C: int = 2,
    P1: int = 16,
    r: int = 9,
    seed: int = 0,
    config: PeelConfig | None = None,
) -> Run:
    """Random hashes with coded offsets, decoded by the variance-tracking peeler."""
    t0 = time.perf_counter()
    dseed, oseed = _split_seed(seed)
    code = OffsetCodeSpec(channel.n, r)
    design = random_design(channel.n, b, C, P1, code, include_basis=False, seed=dseed)
    orc = EigenvalueOracle(channel, xi, oseed)
    bins = subsample_bins(orc, design)
    res = peel(bins, design, config or PeelConfig(sparsity_hint=channel.sparsity), code)
    return Run(res, design, bins, time.perf_counter() - t0)


def recover_heuristic(
    channel: SparsePauliChannel,
    xi: float,
    C: int = 2,
    seed: int = 0,
    design_type: int = 1,
    config: PeelConfig | None = None,
) -> Run:
    """Local-stabilizer design decoded by the relaxation-schedule peeler."""
    t0 = time.perf_counter()
    dseed, oseed = _split_seed(seed)
    if design_type == 1:
        design, _ = local_stabilizer_design(channel.n, C, dseed)
    elif design_type == 2:
        design = type2_design(channel.n, dseed).subsampling
    else:
        raise ValueError(f"unknown design type {design_type}")
    orc = EigenvalueOracle(channel, xi, oseed)
    bins = subsample_bins(orc, design)
    res = noisy_peel(bins, design, config or PeelConfig(sparsity_hint=channel.sparsity))
    return Run(res, design, bins, time.perf_counter() - t0)
