"""Forward semantics of the op set: values, shape errors, determinism."""

import numpy as np
import pytest

from quantforecast.engine import (OP_TABLE, SeededRng, Tensor, add, concat,
                                  conv1d, conv2d, forward, hadamard, matmul,
                                  pinball_branch, reduce_mean, reduce_sum,
                                  relu, reshape, reverse_time, scalar_mul,
                                  sigmoid, slice_axis, sub, tanh, tensor_new,
                                  transpose)
from quantforecast.errors import InvalidShape, NumericalError, ShapeError


class TestTensorNew:
    def test_zeros(self):
        t = tensor_new([2, 3], "zeros")
        assert t.shape == (2, 3)
        assert np.all(t.data == 0.0)

    def test_constant(self):
        t = tensor_new([1], "constant", value=5.0)
        assert t.data.tolist() == [5.0]

    def test_glorot_same_seed_is_bitwise_identical(self):
        a = tensor_new([4, 4], "glorot", rng=SeededRng(7))
        b = tensor_new([4, 4], "glorot", rng=SeededRng(7))
        assert np.array_equal(a.data, b.data)

    def test_glorot_bounds(self):
        t = tensor_new([40, 60], "glorot", rng=SeededRng(0))
        limit = np.sqrt(6.0 / (40 + 60))
        assert np.all(np.abs(t.data) < limit)

    def test_zero_extent_rejected(self):
        with pytest.raises(InvalidShape):
            tensor_new([2, 0], "zeros")

    def test_empty_shape_rejected(self):
        with pytest.raises(InvalidShape):
            tensor_new([], "zeros")

    def test_nan_input_rejected(self):
        with pytest.raises(NumericalError):
            Tensor([1.0, np.nan])


class TestOpValues:
    def test_matmul_identity(self):
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor(np.eye(2)))
        assert out.data.tolist() == [[1, 2], [3, 4]]

    def test_sigmoid_at_zero(self):
        assert sigmoid(Tensor([0.0])).data.tolist() == [0.5]

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = sigmoid(Tensor([-1000.0, 1000.0]))
        assert out.data[0] == 0.0 and out.data[1] == 1.0

    def test_conv1d_sliding_dot_product(self):
        out = conv1d(Tensor([1, 2, 3, 4]), Tensor([1, 1]))
        assert out.data.tolist() == [3, 5, 7]

    def test_conv1d_batched_matches_plain(self):
        signal = np.array([0.5, -1.0, 2.0, 0.25, 3.0])
        kernel = np.array([2.0, -0.5])
        plain = conv1d(Tensor(signal), Tensor(kernel)).data
        batched = conv1d(Tensor(signal.reshape(1, 5, 1)),
                         Tensor(kernel.reshape(2, 1, 1))).data
        assert np.allclose(batched.ravel(), plain)

    def test_conv2d_hand_case(self):
        x = Tensor([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        k = Tensor([[1, 0], [0, 1]])
        # each output = x[i,j] + x[i+1,j+1]
        assert conv2d(x, k).data.tolist() == [[6, 8], [12, 14]]

    def test_tanh_relu(self):
        assert tanh(Tensor([0.0])).data[0] == 0.0
        assert relu(Tensor([-2.0, 0.0, 3.0])).data.tolist() == [0, 0, 3]

    def test_scalar_mul(self):
        assert scalar_mul(Tensor([1.5, -2.0]), 2.0).data.tolist() == [3.0, -4.0]

    def test_reductions(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert reduce_sum(t).item() == 10.0
        assert reduce_mean(t).item() == 2.5

    def test_pinball_branch_values(self):
        out = pinball_branch(Tensor([0.5, -0.5]), 0.95)
        assert np.allclose(out.data, [0.475, 0.025])

    def test_add_broadcasts_bias(self):
        out = add(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0, 3.0]))
        assert np.allclose(out.data, [[1, 2, 3], [1, 2, 3]])


class TestOpErrors:
    def test_matmul_shape_error_names_op_and_shapes(self):
        with pytest.raises(ShapeError) as err:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
        message = str(err.value)
        assert "matmul" in message and "(2, 3)" in message and "(4, 2)" in message

    def test_add_shape_error(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))

    def test_concat_shape_error(self):
        with pytest.raises(ShapeError):
            concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)

    def test_reshape_size_mismatch(self):
        with pytest.raises(ShapeError):
            reshape(Tensor(np.zeros((2, 3))), (4, 2))

    def test_slice_out_of_range(self):
        with pytest.raises(ShapeError):
            slice_axis(Tensor(np.zeros((2, 3))), 1, 2, 5)

    def test_overflowing_op_surfaces_numerical_error(self):
        big = Tensor(np.full((2, 2), 1e308))
        with np.errstate(over="ignore"):
            with pytest.raises(NumericalError):
                hadamard(big, big)


class TestStructuralProperties:
    def test_reverse_time_is_involution(self, rng):
        for shape in [(5,), (4, 3), (2, 6, 3)]:
            x = Tensor(rng.normal(size=shape))
            twice = reverse_time(reverse_time(x))
            assert np.array_equal(twice.data, x.data)

    def test_reverse_time_flips_time_axis(self):
        x = Tensor(np.arange(6.0).reshape(1, 3, 2))
        out = reverse_time(x)
        assert np.array_equal(out.data[0, 0], x.data[0, 2])

    def test_concat_slice_roundtrip(self, rng):
        for axis in (0, 1):
            a = Tensor(rng.normal(size=(3, 4)))
            b = Tensor(rng.normal(size=(3, 4)))
            joined = concat([a, b], axis=axis)
            size = a.shape[axis]
            first = slice_axis(joined, axis, 0, size)
            second = slice_axis(joined, axis, size, 2 * size)
            assert np.array_equal(first.data, a.data)
            assert np.array_equal(second.data, b.data)

    def test_transpose_roundtrip(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 4)))
        assert np.array_equal(transpose(transpose(x, (2, 0, 1)), (1, 2, 0)).data,
                              x.data)

    def test_op_sequence_is_deterministic(self):
        def build(seed):
            rng = SeededRng(seed)
            x = tensor_new([4, 4], "glorot", rng=rng)
            y = tensor_new([4, 4], "normal", rng=rng)
            out = reduce_sum(tanh(matmul(sigmoid(x), sub(y, x))))
            return out.item()

        assert build(42) == build(42)

    def test_forward_dispatch_covers_op_table(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        out = forward("matmul", [a, b])
        assert out.data.tolist() == [[11.0]]
        out = forward("concat", [a, a], axis=0)
        assert out.shape == (2, 2)
        out = forward("slice", [a], axis=1, start=0, stop=1)
        assert out.data.tolist() == [[1.0]]
        assert set(OP_TABLE) == {
            "matmul", "add", "sub", "hadamard", "scalar-mul", "concat",
            "slice", "reshape", "transpose", "sigmoid", "tanh", "relu",
            "conv1d", "conv2d", "reduce-mean", "reduce-sum", "reverse-time",
            "pinball-residual-branch"}
