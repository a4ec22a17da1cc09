import numpy as np
import pytest

from deul.ode import IntegrationError, integrate


def damped(t, y, rows):
    # y'' + 2 y' + y = 0, critically damped
    return np.stack([y[:, 1], -2 * y[:, 1] - y[:, 0]], axis=1)


@pytest.mark.parametrize("method", ["dop853", "dopri5"])
def test_critically_damped_closed_form(method):
    t_out = np.linspace(0.0, 20.0, 41)
    Y, retired = integrate(damped, np.zeros(1), [[1.0, 0.0]], t_out[None, :], rtol=1e-11, atol=1e-13, method=method)
    exact = (1 + t_out) * np.exp(-t_out)
    np.testing.assert_allclose(Y[0, :, 0], exact, rtol=1e-8, atol=1e-12)
    assert not retired.any()


def test_rows_are_independent():
    t_out = np.array([[1.0, 2.0], [3.0, 5.0]])
    Y, _ = integrate(lambda t, y, rows: -y * (rows + 1)[:, None], np.array([0.0, 1.0]), [[1.0], [2.0]], t_out)
    np.testing.assert_allclose(Y[0, :, 0], np.exp(-t_out[0]), rtol=1e-9)
    np.testing.assert_allclose(Y[1, :, 0], 2 * np.exp(-2 * (t_out[1] - 1.0)), rtol=1e-9)


def test_output_at_start_time_is_initial_state():
    Y, _ = integrate(damped, np.zeros(1), [[0.3, -0.2]], np.array([[0.0, 1.0]]))
    assert Y[0, 0].tolist() == [0.3, -0.2]


def test_stop_retires_rows():
    stop = lambda t, y, rows: np.abs(y[:, 0]) < 1e-3
    Y, retired = integrate(lambda t, y, rows: -y, np.zeros(2), [[1.0], [1.0]], np.array([[1.0, 20.0], [1.0, 2.0]]), stop=stop)
    assert retired[0] and not retired[1]
    assert Y[0, 1, 0] == 0.0


def test_rejects_decreasing_output_times():
    with pytest.raises(ValueError):
        integrate(damped, np.zeros(1), [[1.0, 0.0]], np.array([[2.0, 1.0]]))


def test_step_budget():
    with pytest.raises(IntegrationError):
        integrate(lambda t, y, rows: np.cos(50 * t)[:, None] * np.ones_like(y), np.zeros(1), [[0.0]], np.array([[100.0]]), max_steps=10)
