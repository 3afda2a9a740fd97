"""Toy nonlinear RC plant, excitation signals and dataset generation.

The plant is a first-order system with a nonlinear capacitor and a nonlinear
resistor driven by an effort source ``u``::

    q' = phi_r(u - phi_c(q))

Its measured observables are the resistor flow ``f = phi_r(u - phi_c(q))``
(which depends on the current input) and the capacitor effort
``e_c = phi_c(q)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .lifting import Dataset, Trajectory
from .numerics import NonFiniteError, make_rng, uniform

INPUT_RANGE = (-2.5, 2.5)
INITIAL_STATE_RANGE = (-2.0, 2.0)
DEFAULT_SUBSTEPS = 10
# evaluation square wave; steady states are q = +-sqrt(1.75)
TEST_AMPLITUDE = 1.75
TEST_PERIOD = 6.0


def phi_r(e):
    """Resistor law ``2 / (1 + exp(-4 e)) - 1``, equal to ``tanh(2 e)``."""
    # tanh form avoids overflow of exp(-4e) for large negative e
    return np.tanh(2.0 * np.asarray(e, dtype=np.float64))


def phi_c(q):
    """Capacitor law ``sgn(q) q**2``."""
    q = np.asarray(q, dtype=np.float64)
    return np.sign(q) * q * q


class ToyPlant:
    """Scalar plant with state ``q``, input ``u`` and observables ``(f, e_c)``."""

    l = 1
    n = 1
    z = 2

    def derivative(self, q, u):
        return phi_r(u - phi_c(q))

    def observables(self, q, u):
        e_c = phi_c(q)
        return np.stack([phi_r(u - e_c), e_c], axis=-1)

    def simulate(self, q0, inputs, dt, substeps=DEFAULT_SUBSTEPS):
        return simulate(self, q0, inputs, dt, substeps)


def _integrate(plant, q0, inputs, dt, substeps):
    """RK4 for a batch: ``q0`` is ``(K,)`` and ``inputs`` is ``(K, T)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be a positive integer")
    h = dt / substeps
    q = np.empty(inputs.shape)
    q[:, 0] = state = np.asarray(q0, dtype=np.float64)
    f = plant.derivative
    for k in range(inputs.shape[1] - 1):
        uk = inputs[:, k]
        for _ in range(substeps):
            k1 = f(state, uk)
            k2 = f(state + 0.5 * h * k1, uk)
            k3 = f(state + 0.5 * h * k2, uk)
            k4 = f(state + h * k3, uk)
            state = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise NonFiniteError(f"state became non-finite at sample {k + 1}")
        q[:, k + 1] = state
    return q


def simulate(plant, q0, inputs, dt, substeps=DEFAULT_SUBSTEPS):
    """Integrate the plant under zero-order-hold inputs with classical RK4.

    ``inputs[k]`` is applied over ``[k dt, (k + 1) dt)``; the returned
    trajectory has one sample per input, the first being the initial state.
    Observables are evaluated from ``(q, u)`` at the sample instants.

    Raises
    ------
    NonFiniteError
        If integration produces NaN or Inf.
    """
    u = np.asarray(inputs, dtype=np.float64).reshape(-1)
    q = _integrate(plant, [float(q0)], u[None, :], dt, substeps)[0]
    return Trajectory(dt, q[:, None], u[:, None], plant.observables(q, u))


def simulate_many(plant, q0s, inputs, dt, substeps=DEFAULT_SUBSTEPS):
    """Vectorized :func:`simulate` over rows of ``inputs`` (``(K, T)``)."""
    U = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    Q = _integrate(plant, q0s, U, dt, substeps)
    return [Trajectory(dt, q[:, None], u[:, None], plant.observables(q, u))
            for q, u in zip(Q, U)]


class SignalKind(enum.Enum):
    PIECEWISE_CONSTANT_UNIFORM = "piecewise_constant_uniform"
    SQUARE_WAVE = "square_wave"
    NOISY_PID = "noisy_pid"


@dataclass(frozen=True)
class SignalSpec:
    """Excitation signal description.

    ``lo``/``hi`` bound the uniform draws (input values for the piecewise
    constant signal, setpoints for the PID signal). ``noise`` is the half
    width ``w`` of the additive ``U(-w, w)`` PID noise.
    """

    kind: SignalKind = SignalKind.PIECEWISE_CONSTANT_UNIFORM
    lo: float = INPUT_RANGE[0]
    hi: float = INPUT_RANGE[1]
    amplitude: float = 1.0
    period: float = 2.5
    kp: float = 1.0
    ki: float = 0.0
    kd: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        kind = SignalKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is SignalKind.SQUARE_WAVE and not self.period > 0:
            raise ValueError("square wave period must be positive")
        if kind is not SignalKind.SQUARE_WAVE and not self.hi > self.lo:
            raise ValueError("bounds require hi > lo")
        if self.noise < 0:
            raise ValueError("noise bound must be nonnegative")


class NoisyPid:
    """Discrete PID tracking a fixed setpoint, plus uniform noise.

    The integral uses the rectangle rule and is clamped at ``10 * bound``
    where ``bound = max(|lo|, |hi|)``.
    """

    def __init__(self, spec, setpoint, dt, rng):
        self.spec = spec
        self.setpoint = float(setpoint)
        self.dt = dt
        self.rng = rng
        self.integral = 0.0
        self.previous_error = None
        self.clamp = 10.0 * max(abs(spec.lo), abs(spec.hi))

    def __call__(self, measurement):
        s = self.spec
        error = self.setpoint - float(measurement)
        self.integral = float(np.clip(self.integral + error * self.dt,
                                      -self.clamp, self.clamp))
        derivative = (0.0 if self.previous_error is None
                      else (error - self.previous_error) / self.dt)
        self.previous_error = error
        u = s.kp * error + s.ki * self.integral + s.kd * derivative
        if s.noise > 0:
            u += uniform(self.rng, -s.noise, s.noise, 1)[0]
        return u


def _sample_count(duration, dt):
    steps = duration / dt
    if not dt > 0 or not duration > 0 or abs(steps - round(steps)) > 1e-9 * max(1, steps):
        raise ValueError("duration must be a positive multiple of dt")
    return int(round(steps)) + 1


def generate_signal(spec, rng, duration, dt, measurements=None):
    """Sample an input sequence with ``duration / dt + 1`` entries.

    ``measurements`` feeds the NoisyPid law (defaults to zeros, i.e. an
    open-loop sequence). Use :func:`simulate_closed_loop` to drive a plant
    with the PID law in feedback.
    """
    count = _sample_count(duration, dt)
    if spec.kind is SignalKind.PIECEWISE_CONSTANT_UNIFORM:
        return uniform(rng, spec.lo, spec.hi, count)
    if spec.kind is SignalKind.SQUARE_WAVE:
        t = dt * np.arange(count)
        # small offset keeps samples at exact half-period multiples on the next level
        phase = np.floor(t / (0.5 * spec.period) + 1e-9).astype(int)
        return np.where(phase % 2 == 0, spec.amplitude, -spec.amplitude)
    setpoint = uniform(rng, spec.lo, spec.hi, 1)[0]
    pid = NoisyPid(spec, setpoint, dt, rng)
    y = np.zeros(count) if measurements is None else np.asarray(measurements, float)
    return np.array([pid(y[k]) for k in range(count)])


def simulate_closed_loop(plant, q0, spec, rng, duration, dt,
                         substeps=DEFAULT_SUBSTEPS):
    """Drive ``plant`` with a NoisyPid law measuring the state ``q``."""
    count = _sample_count(duration, dt)
    pid = NoisyPid(spec, uniform(rng, spec.lo, spec.hi, 1)[0], dt, rng)
    q, u = [float(q0)], []
    for k in range(count):
        u.append(pid(q[-1]))
        if k < count - 1:
            q.append(simulate(plant, q[-1], [u[-1], 0.0], dt, substeps).states[1, 0])
    q, u = np.array(q), np.array(u)
    return Trajectory(dt, q[:, None], u[:, None], plant.observables(q, u))


def generate_dataset(plant, count=100, duration=5.0, rate=20.0, seed=0,
                     substeps=DEFAULT_SUBSTEPS, input_range=INPUT_RANGE,
                     initial_range=INITIAL_STATE_RANGE):
    """Random-input trajectories with an 80-20 split by trajectory.

    Each trajectory ``i`` draws from its own stream ``(seed, i)``, so the
    result does not depend on generation order.
    """
    if count < 2:
        raise ValueError("count must be at least 2 for a train/validation split")
    dt = 1.0 / rate
    spec = SignalSpec(SignalKind.PIECEWISE_CONSTANT_UNIFORM, *input_range)
    q0s, inputs = [], []
    for i in range(count):
        rng = make_rng(seed, i)
        q0s.append(uniform(rng, *initial_range, 1)[0])
        inputs.append(generate_signal(spec, rng, duration, dt))
    trajectories = simulate_many(plant, np.array(q0s), np.array(inputs), dt,
                                 substeps)
    return Dataset.with_random_split(trajectories, seed)


def square_wave_test(plant, duration=10.0, rate=20.0, amplitude=TEST_AMPLITUDE,
                     period=TEST_PERIOD, q0=0.0, substeps=DEFAULT_SUBSTEPS):
    """Ground-truth response to the evaluation square wave."""
    dt = 1.0 / rate
    spec = SignalSpec(SignalKind.SQUARE_WAVE, amplitude=amplitude, period=period)
    u = generate_signal(spec, None, duration, dt)
    return simulate(plant, q0, u, dt, substeps)
