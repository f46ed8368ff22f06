"""Latent-space traversal: a residual VAE steered by soft-fern controllers."""

__version__ = "0.1.0"

from .autograd import ContractError, DimensionError, Tensor, no_grad  # noqa: E402
from .controller import (  # noqa: E402
    ControllerConfig,
    ControllerModule,
    ControlSpec,
    compose_controllers,
    control_step,
    image_loss,
    latent_loss,
    scalar_head,
)
from .fern import FernBlock, FernEnsemble, SoftFern, TransformerNetwork, fern_enumerate, fern_reparam  # noqa: E402
from .vae import VaeConfig, VaeModel, kl_to_standard_normal, reparameterize  # noqa: E402
