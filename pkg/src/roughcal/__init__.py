"""roughcal: neural-network calibration of the rough Bergomi model.

Pipeline: exact-covariance Monte Carlo pricing (`volterra`), synthetic
training data (`dataset`), a small feedforward surrogate of the implied
volatility surface (`neuralnet`, `surrogate`), Levenberg-Marquardt
calibration (`calibrator`), Bayesian posterior sampling (`bayes`), and an
inverse-map convolutional baseline (`onestep`).
"""

from .blackscholes import (PriceBoundsError, bs_price, bs_price_vec, bs_vega,
                           implied_vol, implied_vol_vec)
from .calibrator import (CalibrationError, CalibrationProblem,
                         CalibrationReport, LMConfig, interpolate_surface,
                         lm_calibrate, lm_calibrate_multistart,
                         relative_error, rmse)
from .dataset import (McConfig, PriorBox, TrainingSet, expand_gridwise,
                      generate_gridwise, generate_pointwise,
                      load_training_set, sample_parameters, save_training_set,
                      scale_inputs, surface_for, unscale_inputs)
from .neuralnet import (AdamConfig, DenseNetwork, LossSpec, backprop, forward,
                        init_network, input_jacobian, load_network,
                        save_network, train_adam)
from .surface import IVSurface, SurfaceGrid
from .surrogate import SurfaceSurrogate
from .volterra import (ModelParams, PathBatch, SimulationError, TimeGrid,
                       TwoFactorParams, joint_covariance, mc_price_surface,
                       simulate_rbergomi, simulate_two_factor,
                       volterra_autocovariance, volterra_cross_covariance)

__version__ = "0.1.0"
