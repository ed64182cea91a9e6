"""Individual treatment effect estimation with two-headed representation
networks, transfer learning from a large source dataset, and Fisher-based
task affinity scoring."""

__version__ = "0.1.0"

from .backend import BACKEND_NAME
from .cita import CitaScore, FisherDiagonal, cita_normalized, cita_raw, cita_symmetrized, diag_fisher
from .data import (CsvSchema, Dataset, DgpParams, gen_source, load_csv, save_csv,
                   standardize, subsample_biased, subsample_random)
from .errors import (CheckpointError, DataError, InvalidSpecError, NumericalError,
                     SingleGroupError)
from .ipm import IpmConfig, ipm, mmd_rbf, sinkhorn_divergence
from .metrics import ReplicationResult, ScenarioSummary, dispersion, mean_ite, pehe, summarize
from .model import (TarnetModel, TrainConfig, TrainHistory, factual_loss, init_model,
                    predict_ite, sample_weights, tarnet_forward, total_loss, train_source)
from .network import (NetworkSpec, ParameterStore, forward, backward, freeze_layers,
                      init_network, load_checkpoint, parameter_count, save_checkpoint)
from .optim import OptimizerState, adam_step, init_optimizer
from .transfer import (PhaseConfig, TransferConfig, TransferReport, alignment_loss,
                       phase1_align, phase2_finetune, transfer_pipeline, transplant)
