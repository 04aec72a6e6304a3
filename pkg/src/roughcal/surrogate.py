"""Trained-network surrogate for the model implied-vol surface map.

Bundles a dense network with its input-scaling box and surface grid and
exposes evaluation and Jacobians in raw parameter coordinates, plus spline
interpolation for off-grid (T, k) queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibrator import interpolate_surface
from .dataset import PriorBox, scale_inputs
from .neuralnet import DenseNetwork, forward, input_jacobian, load_network, save_network
from .surface import SurfaceGrid


@dataclass
class SurfaceSurrogate:
    net: DenseNetwork
    prior: PriorBox
    grid: SurfaceGrid

    def surface(self, theta):
        """Flat surface vector (L,) at a raw parameter point."""
        return forward(self.net, scale_inputs(np.asarray(theta, float), self.prior))

    def surface_matrix(self, theta):
        return self.surface(theta).reshape(self.grid.n_maturities, self.grid.n_strikes)

    def surface_batch(self, thetas):
        return forward(self.net, scale_inputs(np.atleast_2d(thetas), self.prior))

    def jacobian(self, theta):
        """d(surface)/d(theta) in raw coordinates, shape (L, 4)."""
        jac = input_jacobian(self.net, scale_inputs(np.asarray(theta, float), self.prior))
        chain = 2.0 / (self.prior.upper_array() - self.prior.lower_array())
        return jac * chain[None, :]

    def iv(self, theta, t, k):
        """Off-grid query through the strike-spline / total-variance scheme."""
        return interpolate_surface(self.grid, self.surface(theta), t, k)

    def iv_points(self, theta, points):
        surf = self.surface(theta)
        return np.array([interpolate_surface(self.grid, surf, t, k) for t, k in points])

    def save(self, path):
        save_network(
            self.net,
            path,
            extra={
                "prior_lower": list(self.prior.lower),
                "prior_upper": list(self.prior.upper),
                "strikes": list(self.grid.strikes),
                "maturities": list(self.grid.maturities),
            },
        )

    @classmethod
    def load(cls, path):
        net, doc = load_network(path)
        prior = PriorBox(tuple(doc["prior_lower"]), tuple(doc["prior_upper"]))
        grid = SurfaceGrid(tuple(doc["strikes"]), tuple(doc["maturities"]))
        return cls(net=net, prior=prior, grid=grid)
