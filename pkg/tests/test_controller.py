import numpy as np
import pytest

from lstnet.autograd import Tensor, check_gradients
from lstnet.autograd.tensor import ContractError, DimensionError
from lstnet.controller import (
    ControlSpec,
    ControllerConfig,
    ControllerModule,
    ScalarHead,
    compose_controllers,
    image_loss,
    latent_loss,
)

CFG = ControllerConfig(latent_dim=6, history_len=1, hidden=10, decision_width=8, n_blocks=2)


def test_fresh_controller_is_the_identity(rng):
    ctrl = ControllerModule(CFG, rng)
    z = Tensor(rng.standard_normal((4, 6)))
    np.testing.assert_array_equal(ctrl([z], 0.3).data, z.data)


def test_step_is_added_to_last_latent(rng):
    cfg = ControllerConfig(latent_dim=3, history_len=2, hidden=8, decision_width=4, n_blocks=1)
    ctrl = ControllerModule(cfg, rng)
    ctrl.transformer.output_map.bias.data[...] = [1.0, 2.0, 3.0]
    for block in ctrl.transformer.blocks:
        block.ferns.zero_()
    z1, z2 = Tensor(rng.standard_normal((2, 3))), Tensor(rng.standard_normal((2, 3)))
    np.testing.assert_allclose(ctrl([z1, z2], 2.0).data, z2.data + [1, 2, 3], rtol=1e-6)
    # a stacked [N, n, d] history gives the same answer
    stacked = Tensor(np.stack([z1.data, z2.data], axis=1))
    np.testing.assert_allclose(ctrl(stacked, 2.0).data, ctrl([z1, z2], 2.0).data)


def test_history_length_and_width_are_checked(rng):
    ctrl = ControllerModule(CFG, rng)
    z = Tensor(np.zeros((2, 6)))
    with pytest.raises(ContractError):
        ctrl([z, z], 0.0)
    with pytest.raises(DimensionError):
        ctrl([Tensor(np.zeros((2, 5)))], 0.0)


def test_theta_changes_output_once_trained(rng):
    ctrl = ControllerModule(CFG, rng)
    ctrl.transformer.output_map.weight.data[...] = rng.standard_normal((10, 6))
    z = Tensor(rng.standard_normal((3, 6)))
    assert not np.allclose(ctrl([z], -0.5).data, ctrl([z], 0.5).data)
    ctrl.eval()   # batch statistics would couple the samples
    per_sample = np.array([-0.5, 0.5, 0.1], np.float32)
    out = ctrl([z], per_sample).data
    for i, th in enumerate(per_sample):
        np.testing.assert_allclose(out[i], ctrl([Tensor(z.data[i:i + 1])], th).data[0], atol=1e-5)


def test_composition_order_and_contracts(rng):
    a = ControllerModule(ControllerConfig(latent_dim=4, hidden=6, decision_width=4), rng)
    b = ControllerModule(ControllerConfig(latent_dim=4, hidden=6, decision_width=4), rng)
    a.transformer.output_map.bias.data[...] = 1.0
    b.transformer.output_map.bias.data[...] = -3.0
    z = Tensor(np.zeros((2, 4)))
    np.testing.assert_allclose(compose_controllers([a, b], [ControlSpec("rotation", 0.1), ControlSpec("dilation", 1.0)], z).data[0, 0],
                               b([a([z], 0.1)], 1.0).data[0, 0])
    with pytest.raises(ContractError):
        compose_controllers([a], [0.1, 0.2], z)
    c = ControllerModule(ControllerConfig(latent_dim=5, hidden=6, decision_width=4), rng)
    with pytest.raises(ContractError):
        compose_controllers([a, c], [0.1, 0.2], z)


def test_control_spec_ranges():
    assert ControlSpec("rotation", np.pi / 4).in_distribution()
    assert not ControlSpec("dilation", 2.5).in_distribution()
    with pytest.raises(ValueError):
        ControlSpec("shear", 0.1)


def test_losses_are_batch_means_of_squared_distances():
    a = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]]))
    b = Tensor(np.array([[3.0, 4.0], [1.0, 1.0]]))
    assert latent_loss(a, b).item() == pytest.approx(12.5)
    assert image_loss(Tensor(np.zeros((2, 1, 2, 2))), Tensor(np.ones((2, 1, 2, 2)))).item() == pytest.approx(4.0)


def test_scalar_head_starts_at_zero(rng):
    head = ScalarHead(10, rng)
    assert np.all(head(Tensor(rng.standard_normal((3, 10)))).data == 0)


def test_controller_gradients(rng):
    ctrl = ControllerModule(ControllerConfig(latent_dim=3, history_len=2, hidden=6, decision_width=4), rng)
    ctrl = ctrl.astype(np.float64)
    ctrl.transformer.output_map.weight.data[...] = rng.uniform(-0.5, 0.5, (6, 3))
    z1 = Tensor(rng.standard_normal((5, 3)), requires_grad=True, dtype=np.float64)
    z2 = Tensor(rng.standard_normal((5, 3)), requires_grad=True, dtype=np.float64)
    target = Tensor(rng.standard_normal((5, 3)), dtype=np.float64)
    theta = rng.uniform(-1, 1, 5)
    tensors = {"z1": z1, "z2": z2, **dict(ctrl.named_parameters())}
    for rep in check_gradients(lambda: latent_loss(target, ctrl([z1, z2], theta)), tensors, h=1e-3):
        assert rep.ok(1e-3), rep
