"""Time-domain stochastic simulation of the mirror mode.

The mirror obeys

    m x'' + 2 m gamma x' + m omega_m^2 x = f_rp + f_pt + thermal force

where ``f_rp`` relaxes toward the full Lorentzian radiation force (minus its
static value at the operating point) at rate ``2*kappa`` and ``f_pt``
relaxes toward ``ratio`` times the same force at rate ``1/tau``.  The
linearised part of this four-state system is propagated with its exact
discretisation (matrix exponential plus exact noise covariance), so the
step only has to resolve the mechanical period.  The nonlinear remainder of
the force is held constant over each step.

Run seeds for ensembles come from ``numpy.random.SeedSequence(master)``:
run ``i`` uses ``spawn(n_runs)[i].generate_state(1, uint64)[0]``.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _kernel
from .backaction import effective_damping
from .cavity import circulating_power, force_gradient_beta
from .errors import NonFinite, StepTooLarge, TooShort, UnstableSpring, ValidationError
from .params import C, HBAR, K_B, CavityParams, MechanicalMode, PhotothermalModel

MIN_SAMPLES_PER_PERIOD = 50
CHUNK_STEPS = 1 << 18
_MAGIC = b"TTRC"
_HEADER = struct.Struct("<4sIdQQ")


@dataclass(frozen=True)
class SimState:
    x: float
    v: float
    f_rp: float = 0.0
    f_pt: float = 0.0
    t: float = 0.0


@dataclass
class TimeTrace:
    dt: float
    samples: np.ndarray
    seed: int
    params: dict = field(default_factory=dict)
    final_state: SimState | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.dt > 0:
            raise ValidationError("trace spacing must be positive")
        if self.samples.size < 2:
            raise TooShort("a trace needs at least two samples")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) * self.dt

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", "x_m"])
        for t, x in zip(self.times, self.samples):
            writer.writerow([repr(float(t)), repr(float(x))])
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        """Little-endian block: magic, version u32, dt f64, n u64, seed u64, n x f64."""
        header = _HEADER.pack(_MAGIC, 1, self.dt, self.samples.size, self.seed & 0xFFFFFFFFFFFFFFFF)
        return header + self.samples.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TimeTrace":
        magic, version, dt, n, seed = _HEADER.unpack_from(blob)
        if magic != _MAGIC or version != 1:
            raise ValidationError("not a time-trace block")
        samples = np.frombuffer(blob, dtype="<f8", count=n, offset=_HEADER.size)
        return cls(dt, samples.astype(float), int(seed))


@dataclass(frozen=True)
class RunFailure:
    index: int
    seed: int
    error: str


@dataclass(frozen=True)
class EnergyBreakdown:
    field_term: float
    coupling_term: float
    mechanical_term: float
    drive_term: float

    @property
    def total(self) -> float:
        return self.field_term + self.coupling_term + self.mechanical_term + self.drive_term


def max_step(mode: MechanicalMode) -> float:
    return 1.0 / (MIN_SAMPLES_PER_PERIOD * mode.frequency_hz)


def _van_loan(a: np.ndarray, g: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[0]
    m = np.zeros((2 * n, 2 * n))
    m[:n, :n] = -a
    m[:n, n:] = np.outer(g, g)
    m[n:, n:] = a.T
    e = expm(m * s)
    phi = e[n:, n:].T
    q = phi @ e[:n, n:]
    return phi, 0.5 * (q + q.T)


def _noise_factor(q: np.ndarray, rel: float = 1e-13) -> np.ndarray:
    w, v = np.linalg.eigh(q)
    if w[-1] <= 0.0:
        return np.zeros((q.shape[0], 0))
    keep = w > rel * w[-1]
    return np.ascontiguousarray(v[:, keep] * np.sqrt(w[keep]))


@dataclass(frozen=True)
class _Discretisation:
    phi: np.ndarray
    b_in: np.ndarray
    chol: np.ndarray
    x_scale: float
    v_scale: float
    f_scale: float
    u0: float
    shift: float
    force0: float
    b_lin: float


def _discretise(dt, cavity, mode, pt, delta, thermal) -> _Discretisation:
    w = mode.omega_m
    m = mode.effective_mass
    t_ref = mode.bath_temperature if mode.bath_temperature > 0 else 300.0
    xs = math.sqrt(K_B * t_ref / (m * w * w))
    fs = m * w * w * xs
    s = w * dt

    beta = float(force_gradient_beta(delta, cavity))
    b = beta / (m * w * w)
    rate_rp = 2.0 * cavity.kappa / w
    r = pt.effective_ratio
    use_pt = r != 0.0
    n = 4 if use_pt else 3

    a = np.zeros((n, n))
    a[0, 1] = 1.0
    a[1, 0] = -1.0
    a[1, 1] = -2.0 * mode.gamma / w
    a[1, 2] = 1.0
    a[2, 0] = rate_rp * b
    a[2, 2] = -rate_rp
    e_in = np.zeros(n)
    e_in[2] = rate_rp
    if use_pt:
        rate_pt = 1.0 / (pt.tau * w)
        a[1, 3] = 1.0
        a[3, 0] = rate_pt * r * b
        a[3, 3] = -rate_pt
        e_in[3] = rate_pt * r

    g = np.zeros(n)
    if thermal and mode.bath_temperature > 0:
        g[1] = math.sqrt(4.0 * mode.gamma * K_B * mode.bath_temperature / (m * w ** 3 * xs * xs))
    phi, q = _van_loan(a, g, s)

    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = a
    aug[:n, n] = e_in
    b_in = expm(aug * s)[:n, n].copy()

    f0 = 2.0 * float(circulating_power(0.0, cavity)) / C
    return _Discretisation(
        phi=np.ascontiguousarray(phi), b_in=b_in, chol=_noise_factor(q),
        x_scale=xs, v_scale=w * xs, f_scale=fs,
        u0=delta / cavity.kappa,
        shift=cavity.omega_laser / cavity.length * xs / cavity.kappa,
        force0=f0 / fs, b_lin=b,
    )


def simulate(duration: float, dt: float, cavity: CavityParams, mode: MechanicalMode,
             pt: PhotothermalModel | None, delta: float, seed: int, *,
             initial: SimState | str = "thermal", record_every: int = 1,
             thermal: bool = True) -> TimeTrace:
    """Integrate the mirror dynamics for ``duration`` seconds.

    Parameters
    ----------
    initial
        ``"thermal"`` draws position and velocity from the stationary
        distribution predicted by the analytic model (rest if that model is
        unstable), ``"rest"`` starts at zero, or pass a :class:`SimState`.
        Filter states given as zero in a ``SimState`` are settled onto the
        initial position.
    record_every
        Keep every n-th position; the trace spacing is ``dt * record_every``.
    thermal
        Switch the bath force off for ring-down runs.

    Raises
    ------
    StepTooLarge
        If ``dt`` gives fewer than 50 steps per mechanical period.
    NonFinite
        If the state overflows; the exception carries the last finite state.
    """
    pt = pt or PhotothermalModel.off()
    if not dt > 0 or not duration > 0:
        raise ValidationError("dt and duration must be positive")
    if dt > max_step(mode) * (1.0 + 1e-12):
        raise StepTooLarge(f"dt={dt:.3g} s exceeds 1/(50 f_M) = {max_step(mode):.3g} s")
    if record_every < 1:
        raise ValidationError("record_every must be >= 1")
    n_steps = int(round(duration / dt))
    if n_steps // record_every < 1:
        raise TooShort("duration shorter than one recorded sample")

    disc = _discretise(dt, cavity, mode, pt, delta, thermal)
    rng = np.random.Generator(np.random.PCG64(seed))
    state = _initial_state(initial, disc, cavity, mode, pt, delta, rng)

    out = np.empty(n_steps // record_every + 1)
    out[0] = state[0]
    pos, phase = 1, 0
    k = disc.chol.shape[1]
    done = 0
    zero_noise = np.zeros((min(CHUNK_STEPS, n_steps), 0))
    while done < n_steps:
        block = min(CHUNK_STEPS, n_steps - done)
        noise = rng.standard_normal((block, k)) if k else zero_noise
        pos, phase, ok = _kernel.step_block(
            state, disc.phi, disc.b_in, disc.chol, noise, block, record_every, phase,
            disc.u0, disc.shift, disc.force0, disc.b_lin, out, pos)
        if not ok:
            raise NonFinite(f"state diverged near t={(done + block) * dt:.4g} s",
                            state=_to_state(out[pos - 1:pos], disc, (done) * dt))
        done += block

    final = SimState(
        x=state[0] * disc.x_scale, v=state[1] * disc.v_scale,
        f_rp=state[2] * disc.f_scale,
        f_pt=state[3] * disc.f_scale if state.size > 3 else 0.0,
        t=n_steps * dt,
    )
    params = {
        "duration_s": duration, "dt_s": dt, "record_every": record_every,
        "delta_rad_s": delta, "thermal": thermal,
        "cavity": {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(cavity).items()},
        "mode": asdict(mode), "photothermal": asdict(pt),
    }
    return TimeTrace(dt * record_every, out[:pos] * disc.x_scale, seed, params, final)


def _to_state(last, disc, t):
    x = float(last[0]) * disc.x_scale if len(last) else math.nan
    return SimState(x=x, v=math.nan, t=t)


def _initial_state(initial, disc, cavity, mode, pt, delta, rng) -> np.ndarray:
    n = disc.phi.shape[0]
    state = np.zeros(n)
    if isinstance(initial, SimState):
        state[0] = initial.x / disc.x_scale
        state[1] = initial.v / disc.v_scale
        state[2] = initial.f_rp / disc.f_scale
        if n > 3:
            state[3] = initial.f_pt / disc.f_scale
    elif initial == "thermal" and mode.bath_temperature > 0:
        try:
            dyn = effective_damping(delta, cavity, mode, pt)
        except UnstableSpring:
            dyn = None
        if dyn is not None and dyn.stable:
            var = (mode.gamma / dyn.gamma_eff) * K_B * mode.bath_temperature / (
                mode.effective_mass * dyn.omega_eff ** 2)
            state[0] = rng.normal(0.0, math.sqrt(var)) / disc.x_scale
            state[1] = rng.normal(0.0, math.sqrt(var) * dyn.omega_eff) / disc.v_scale
    elif initial not in ("thermal", "rest"):
        raise ValidationError(f"unknown initial condition {initial!r}")
    if not (isinstance(initial, SimState) and initial.f_rp != 0.0):
        state[2] = disc.b_lin * state[0]
    if n > 3 and not (isinstance(initial, SimState) and initial.f_pt != 0.0):
        state[3] = pt.effective_ratio * disc.b_lin * state[0]
    return state


def run_seeds(master_seed: int, n_runs: int) -> list[int]:
    children = np.random.SeedSequence(master_seed).spawn(n_runs)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def ensemble(n_runs: int, duration: float, dt: float, cavity: CavityParams,
             mode: MechanicalMode, pt: PhotothermalModel | None, delta: float,
             master_seed: int, *, workers: int = 1, **kwargs) -> list:
    """Independent runs with seeds split from ``master_seed``.

    Failed runs come back as :class:`RunFailure` entries in their slot.
    """
    if n_runs < 1:
        raise ValidationError("n_runs must be >= 1")
    seeds = run_seeds(master_seed, n_runs)

    def one(i):
        try:
            return simulate(duration, dt, cavity, mode, pt, delta, seeds[i], **kwargs)
        except (NonFinite, ArithmeticError) as exc:
            return RunFailure(i, seeds[i], str(exc))

    if workers <= 1:
        return [one(i) for i in range(n_runs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_runs)))


def total_energy(state: SimState, cavity: CavityParams, mode: MechanicalMode, delta: float,
                 quadratures: tuple[float, float] | None = None) -> EnergyBreakdown:
    """Four addends of the optomechanical energy for a classical state.

    Field quadratures default to the adiabatic steady state for the
    displaced cavity, ``a = E / (kappa + i*delta_x)``, with ``X = sqrt(2) Re a``
    and ``Y = sqrt(2) Im a`` so that ``X^2 + Y^2`` is twice the photon number.
    """
    omega_c = cavity.omega_laser + delta
    if quadratures is None:
        d = delta - cavity.omega_laser / cavity.length * state.x
        amp = cavity.drive_rate / (cavity.kappa + 1j * d)
        quad_x, quad_y = math.sqrt(2.0) * amp.real, math.sqrt(2.0) * amp.imag
    else:
        quad_x, quad_y = quadratures
    n2 = quad_x ** 2 + quad_y ** 2
    p = mode.effective_mass * state.v
    q = state.x
    return EnergyBreakdown(
        field_term=HBAR * delta * n2,
        coupling_term=-HBAR * omega_c / (2.0 * cavity.length) * (n2 - 1.0) * q,
        mechanical_term=0.5 * (p * p / mode.effective_mass + mode.effective_mass * mode.omega_m ** 2 * q * q),
        drive_term=math.sqrt(2.0) * HBAR * cavity.drive_rate * quad_y,
    )


# -- trace analysis ----------------------------------------------------------------

@dataclass(frozen=True)
class GrowthReport:
    growth_rate: float
    saturation_amplitude: float
    unstable: bool


def envelope_peaks(trace: TimeTrace) -> tuple[np.ndarray, np.ndarray]:
    """Times and values of the local maxima of ``|x|`` (one per half period)."""
    a = np.abs(trace.samples)
    idx = np.flatnonzero((a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:])) + 1
    # parabolic refinement of each peak
    y0, y1, y2 = a[idx - 1], a[idx], a[idx + 1]
    den = y0 - 2.0 * y1 + y2
    off = np.where(den != 0, 0.5 * (y0 - y2) / np.where(den != 0, den, 1.0), 0.0)
    peak = y1 - 0.25 * (y0 - y2) * off
    return (idx + off) * trace.dt, peak


def decay_rate(trace: TimeTrace, skip: float = 0.05) -> float:
    """Amplitude decay rate from a log-linear fit of the envelope peaks."""
    t, p = envelope_peaks(trace)
    keep = (t > skip * trace.duration) & (p > 0)
    if keep.sum() < 4:
        raise TooShort("not enough oscillation peaks to fit a decay")
    slope = np.polyfit(t[keep], np.log(p[keep]), 1)[0]
    return -float(slope)


def classify_growth(trace: TimeTrace, mode: MechanicalMode, threshold: float = 10.0) -> GrowthReport:
    """Envelope growth rate over the first half and amplitude over the last fifth of a run.

    With a thermal bath the run counts as unstable when the late amplitude
    exceeds ``threshold`` times the bare thermal amplitude; at zero
    temperature, when the envelope grows.
    """
    t, p = envelope_peaks(trace)
    if t.size < 8:
        raise TooShort("not enough oscillation peaks")
    first = t < 0.5 * trace.duration
    rate = float(np.polyfit(t[first], np.log(np.maximum(p[first], 1e-300)), 1)[0])
    late = trace.samples[int(0.8 * trace.samples.size):]
    amplitude = float(math.sqrt(2.0 * np.mean(late ** 2)))
    reference = math.sqrt(2.0 * mode.thermal_variance)
    unstable = amplitude > threshold * reference if reference > 0 else rate > 0
    return GrowthReport(rate, amplitude, bool(unstable))
