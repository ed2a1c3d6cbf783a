"""Rehearsal-free incremental learning with stage-isolated heads.

Each stage trains its own classifier head on fixed embeddings. An anchor
term pulls every head's free energy toward a common value, so confidences
of different heads are comparable; at inference the heads vote over a set
of calibrated temperatures and the winning head predicts the class.
"""
from .bankio import BankFormatError, load_bank, save_bank
from .config import ConfigError, ExperimentConfig, load_config
from .data import (CIL, DIL, XDCIL, EmbeddingFormatError, FeatureRecord, StageDataset, StreamSpec,
                   generate_stream, read_embeddings, read_manifest, write_embeddings, write_stream)
from .energy import ContractError, confidence_score, energy_of_pair, free_energy, gibbs_probabilities
from .head import EnergyConfig, StageHead, anchor_loss, ce_loss, gradients, init_head, total_loss
from .inference import ModelBank, criterion3_check, predict, predict_batch, select_stage, stage_id_accuracy
from .kernels import BACKEND
from .metrics import AccuracyMatrix, faa, ff
from .trainer import (DivergenceError, OptimizerConfig, TemperaturePools, calibrate_temperature,
                      candidate_temperatures, run_stream, train_stage)

__version__ = "0.1.0"
