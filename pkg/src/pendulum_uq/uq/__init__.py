from .concrete import ConcreteDropoutLayer, cd_regularizer, concrete_mask, dropout_probabilities
from .flipout import FlipoutLayer, kl_diag_gaussian, kl_penalty, network_kl
from .mixture import PredictiveSummary, combine
from .models import (METHODS, BnnModel, ConcreteDropoutModel, DeepEnsemble, MethodConfig,
                     UntrainedModelError, load_model, predict, save_model, train_bnn,
                     train_concrete_dropout, train_deep_ensemble, train_model)
