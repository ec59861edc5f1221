"""Exotic option valuation toolkit.

Two pricing routes over Heston-family dynamics are implemented and compared:

- the calibration route: fit Heston parameters to an implied-volatility
  surface, then Monte Carlo the exotic under the calibrated model;
- the surrogate route: train a neural network that maps surface points and
  option parameters straight to a model price, then value by forward pass.

Modules
-------
market_models    parameter containers, derived quantities, randomized samplers
pricing_mc       path simulation and Monte Carlo / semi-analytic pricing
bs_surface       Black-Scholes, implied vols, surface grids and fitting
mca_calibration  multi-start Nelder-Mead surface calibration
neural_net       from-scratch MLP with Adam, checkpointing, input gradients
dataset          training-set generation, k-means + AMI sampling validation
experiments      the four studies (regression, sensitivity, parity, model risk)
cli              command-line entry points
"""

__version__ = "0.1.0"
