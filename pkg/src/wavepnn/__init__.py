"""wavepnn: forward-forward training of deep physical neural networks.

A numpy library for training networks whose layers are physical input-output
transformations (simulated wave systems or remote hardware) using only
forward evaluations, plus the gradient-based baselines it is benchmarked
against.
"""

from .backends import (AcousticSystem, BackendError, MicrowaveSystem,
                       OpticsSystem, RemoteSystem, backend_vjp,
                       clone_with_param_noise, is_simulator, k_factor,
                       linearity_metric, perturb, remote_forward,
                       serve_backend)
from .baselines import (BpNetwork, BpTrainConfig, PerturbRecoverConfig,
                        perturb_recover_experiment, recovery_epoch,
                        train_ideal_bp, train_in_silico, train_pa_bp)
from .data import (Dataset, LabelEmbedSpec, PosNegBatch, Sample, accuracy,
                   confusion_matrix, embed_label, embed_labels,
                   gen_vowel_dataset, load_dataset_csv, load_mnist_idx,
                   make_pos_neg_batch, save_dataset_csv)
from .fftrain import (FfLayer, FfNetwork, FfTrainConfig, GoodnessReport,
                      ff_loss, ff_loss_grad, goodness, infer, layer_input,
                      normalize_direction, train_layer, train_mfff)
from .report import RunReport
from .surrogate import (FitReport, Mlp, MlpBackend, fit_surrogate,
                        mlp_forward, mlp_vjp, silu)

__version__ = "0.1.0"
