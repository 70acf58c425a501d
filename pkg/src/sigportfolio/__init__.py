"""Signature-based portfolio construction, training and backtesting."""
from .backtest import BacktestReport, TcOutcome, run_backtest, solve_rebalance_alpha, split_train_cv_test
from .market import DataError, MarketPanel, load_prices_csv, market_weights, rank_weights
from .portfolio import FeatureSpec, PortfolioSpec, controlling_functions, weights_type1, weights_type2
from .qp import QpProblem, assemble_logopt, assemble_mv, solve_qp, tune_beta
from .signature import DiscretePath, jl_signature, path_signature, randomized_signature, signature_features
from .simulation import SimConfig, growth_optimal_weights, simulate
from .tensor import TruncatedTensor, Word, shuffle, tensor_exp, tensor_mul

__version__ = "0.1.0"
