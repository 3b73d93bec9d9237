import numpy as np
import torch
from django.test import SimpleTestCase

from ..exceptions import InvalidVariantError, MissingComponentError, ShapeMismatchError
from ..services.geometry import AXIS_PITCH, N_FRAMES, N_INSTRUMENTS, N_PITCH_BINS, FrameRaster
from ..services.nets import (
    BASELINE_2D,
    CQT_HSF,
    CQT_PITCH_C,
    CQT_PITCH_F,
    RESBLOCK_1D,
    VARIANTS,
    ModelSpec,
    assemble_input,
    build_model,
    count_conv_layers,
    forward,
    forward_batch,
)
from ..services.pitch import build_hsf, salience_from_roll
from ..services.training import weighted_bce


def small_spec(variant: str) -> ModelSpec:
    return ModelSpec(variant, hsf_order=3 if variant == CQT_HSF else None, width=16)


class ModelSpecTests(SimpleTestCase):
    def test_resblock_has_eleven_conv_layers(self):
        for variant in (RESBLOCK_1D, CQT_HSF, CQT_PITCH_F, CQT_PITCH_C):
            self.assertEqual(count_conv_layers(small_spec(variant)), 11)

    def test_baseline_conv_layers(self):
        self.assertEqual(count_conv_layers(ModelSpec(BASELINE_2D)), 5)

    def test_input_shapes(self):
        self.assertEqual(ModelSpec(RESBLOCK_1D).input_shape, (1, N_FRAMES, N_PITCH_BINS))
        self.assertEqual(ModelSpec(CQT_HSF, hsf_order=2).input_shape, (2, N_FRAMES, N_PITCH_BINS))
        self.assertEqual(ModelSpec(CQT_PITCH_F).input_shape, (1, N_FRAMES, 2 * N_PITCH_BINS))
        self.assertEqual(ModelSpec(CQT_PITCH_C).input_shape, (2, N_FRAMES, N_PITCH_BINS))

    def test_invalid_variant_lists_valid_ones(self):
        with self.assertRaises(InvalidVariantError) as ctx:
            ModelSpec('transformer')
        for variant in VARIANTS:
            self.assertIn(variant, str(ctx.exception))

    def test_hsf_variant_needs_order(self):
        with self.assertRaises(InvalidVariantError):
            ModelSpec(CQT_HSF, hsf_order=7)

    def test_labels(self):
        self.assertEqual(ModelSpec(CQT_HSF, hsf_order=3).label, 'CQT+HSF-3')
        self.assertEqual(ModelSpec(CQT_PITCH_F).label, 'CQT+Pitch (F)')

    def test_dict_round_trip(self):
        spec = ModelSpec(CQT_HSF, hsf_order=4, width=32)
        data = spec.to_dict()
        self.assertEqual(data['n_conv_layers'], 11)
        self.assertEqual(ModelSpec.from_dict(data), spec)


class AssembleInputTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.cqt = FrameRaster(rng.random((N_FRAMES, N_PITCH_BINS)).astype(np.float32), f_axis=AXIS_PITCH)
        roll = FrameRaster((rng.random((N_FRAMES, N_PITCH_BINS)) < 0.05).astype(np.uint8), f_axis=AXIS_PITCH)
        self.salience = salience_from_roll(roll)

    def test_pitch_f_concatenates_along_frequency(self):
        x = assemble_input(ModelSpec(CQT_PITCH_F), self.cqt, salience=self.salience)
        self.assertEqual(x.shape, (1, N_FRAMES, 176))
        np.testing.assert_array_equal(x[0, :, :N_PITCH_BINS], self.cqt.data)
        np.testing.assert_array_equal(x[0, :, N_PITCH_BINS:], self.salience.data.data)

    def test_pitch_c_stacks_channels(self):
        x = assemble_input(ModelSpec(CQT_PITCH_C), self.cqt, salience=self.salience)
        self.assertEqual(x.shape, (2, N_FRAMES, N_PITCH_BINS))
        np.testing.assert_array_equal(x[1], self.salience.data.data)

    def test_hsf_channel(self):
        hsf = build_hsf(self.salience, 2)
        x = assemble_input(ModelSpec(CQT_HSF, hsf_order=2), self.cqt, salience=self.salience, hsf=hsf)
        np.testing.assert_array_equal(x[1], hsf.data.data)

    def test_missing_component(self):
        with self.assertRaises(MissingComponentError) as ctx:
            assemble_input(ModelSpec(CQT_HSF, hsf_order=3), self.cqt, salience=self.salience)
        self.assertEqual(ctx.exception.details['component'], 'hsf')
        with self.assertRaises(MissingComponentError):
            assemble_input(CQT_PITCH_C, self.cqt)


class ForwardTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_all_variants_shape_and_range(self):
        for variant in VARIANTS:
            spec = small_spec(variant)
            model = build_model(spec)
            batch = torch.randn((2,) + spec.input_shape)
            probabilities = forward_batch(model, batch)
            self.assertEqual(probabilities.shape, (2, N_FRAMES, N_INSTRUMENTS), variant)
            self.assertTrue(np.all((probabilities >= 0) & (probabilities <= 1)), variant)

    def test_single_example(self):
        spec = small_spec(CQT_PITCH_F)
        roll = forward(build_model(spec), np.zeros(spec.input_shape, dtype=np.float32))
        self.assertEqual(roll.data.shape, (N_FRAMES, N_INSTRUMENTS))

    def test_wrong_input_shape(self):
        model = build_model(small_spec(RESBLOCK_1D))
        with self.assertRaises(ShapeMismatchError):
            forward_batch(model, torch.zeros(1, 2, N_FRAMES, N_PITCH_BINS))

    def test_residual_block_with_zero_branch_is_identity(self):
        model = build_model(small_spec(RESBLOCK_1D))
        block = model.blocks[0]
        last_bn = block.layers[-1].bn
        with torch.no_grad():
            last_bn.weight.zero_()
            last_bn.bias.zero_()
        block.eval()
        x = torch.randn(2, 16, N_FRAMES)
        torch.testing.assert_close(block(x), x)

    def test_gradients_reach_every_parameter(self):
        for variant in (BASELINE_2D, RESBLOCK_1D, CQT_HSF):
            spec = small_spec(variant)
            model = build_model(spec)
            model.train()
            logits = model(torch.randn((3,) + spec.input_shape))
            labels = (torch.rand(logits.shape) < 0.3).float()
            weighted_bce(logits, labels, (2.0,) * N_INSTRUMENTS).backward()
            for name, parameter in model.named_parameters():
                self.assertIsNotNone(parameter.grad, f"{variant}: {name}")
                self.assertTrue(torch.isfinite(parameter.grad).all(), f"{variant}: {name}")
            early = model.early.conv.weight.grad if variant != BASELINE_2D else model.convs[0].conv.weight.grad
            self.assertGreater(float(early.abs().sum()), 0.0)

    def test_frames_are_independent_beyond_receptive_field(self):
        spec = small_spec(RESBLOCK_1D)
        model = build_model(spec)
        x = torch.randn((1,) + spec.input_shape)
        changed = x.clone()
        changed[0, 0, 200:] += 5.0
        before = forward_batch(model, x)
        after = forward_batch(model, changed)
        # 10 time convolutions of width 3 reach 10 frames back
        np.testing.assert_allclose(before[0, :189], after[0, :189], atol=1e-6)
        self.assertFalse(np.allclose(before[0, 200:], after[0, 200:]))

    def test_duplicated_example_gets_identical_outputs(self):
        for variant in VARIANTS:
            spec = small_spec(variant)
            model = build_model(spec)
            x = torch.randn((3,) + spec.input_shape)
            x[2] = x[0]
            first = forward_batch(model, x)
            np.testing.assert_allclose(first[2], first[0], atol=1e-6, err_msg=variant)
            np.testing.assert_array_equal(forward_batch(model, x), first)
            np.testing.assert_allclose(forward_batch(model, x[:1])[0], first[0], atol=1e-5, err_msg=variant)
