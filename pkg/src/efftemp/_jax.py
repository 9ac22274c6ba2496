"""Central JAX import point.

Everything numerical in this package runs in float64/complex128; importing
jax through this module guarantees the x64 switch is flipped before any
array is created.
"""

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402

__all__ = ["jax", "jnp"]
