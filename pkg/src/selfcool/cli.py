"""Command-line entry point: ``selfcool {sweep,simulate,modes,report}``.

Every command writes CSV as the numeric record, optional SVG figures, and a
``manifest.json`` written last as the completion marker.

Exit codes: 0 success, 1 invalid input, 2 numerical failure (or a failed
acceptance check), 3 file-system error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, acceptance, backaction, estimation, langevin, modes, spectra
from .config import ExperimentConfig, default_config, load_config
from .errors import NonFinite, RegimeWarning, SelfCoolError, Unstable, ValidationError
from .params import K_B

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class Outputs:
    """Single writer for a run directory; remembers every file it produced."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _atomic(self, name: str, data: bytes) -> None:
        target = self.path(name)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        if name not in self.files:
            self.files.append(name)

    def text(self, name: str, content: str) -> None:
        self._atomic(name, content.encode())

    def binary(self, name: str, content: bytes) -> None:
        self._atomic(name, content)

    def figure(self, name: str, fig) -> None:
        import matplotlib.pyplot as plt

        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
        self.binary(name, buf.getvalue())

    def manifest(self, command: str, cfg: ExperimentConfig, seed, started: float, extra=None) -> None:
        record = {
            "command": command,
            "tool_version": __version__,
            "config_source": cfg.source,
            "config": cfg.snapshot(),
            "master_seed": seed,
            "outputs": sorted(self.files),
            "wall_clock_s": round(time.perf_counter() - started, 3),
        }
        if extra:
            record.update(extra)
        self._atomic("manifest.json", (json.dumps(record, indent=2, sort_keys=True) + "\n").encode())


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "selfcool"
    return plt


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    """Fold command-line flags into a copy of the configuration."""
    values = dict(cfg.values)
    mapping = {
        "seed": "simulation.seed", "delta_min": "sweep.delta_min", "delta_max": "sweep.delta_max",
        "points": "sweep.points", "runs": "simulation.runs", "duration_s": "simulation.duration_s",
        "delta": "simulation.delta_over_kappa", "dt_s": "simulation.dt_s",
    }
    for attr, key in mapping.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    if getattr(args, "power_w", None):
        values["laser.power_w"] = list(args.power_w)
    new = ExperimentConfig(values, cfg.source, cfg.explicit)
    new.validate()
    return new


# -- sweep -------------------------------------------------------------------------------

def cmd_sweep(cfg: ExperimentConfig, out: Outputs, svg: bool) -> dict:
    v = cfg.values
    if v["sweep.points"] < 2 or not v["sweep.delta_max"] > v["sweep.delta_min"]:
        raise ValidationError("sweep needs delta_max > delta_min and at least 2 points")
    u = np.linspace(v["sweep.delta_min"], v["sweep.delta_max"], v["sweep.points"])
    mode, pt = cfg.mode(), cfg.photothermal()
    rows = []
    for p in cfg.powers:
        cav = cfg.cavity(p)
        rows.extend(backaction.sweep_detuning(u * cav.kappa, cav, mode, pt))
    out.text("sweep.csv", backaction.sweep_to_csv(rows))
    if svg:
        plt = _pyplot()
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 7), sharex=True)
        for p in cfg.powers:
            sel = [r for r in rows if r.power == p]
            x = [r.delta / r.kappa for r in sel]
            width = [r.dynamics.fwhm_hz if r.dynamics else math.nan for r in sel]
            ratio = [r.cooling_ratio if r.stable else math.nan for r in sel]
            ax1.plot(x, width, label=f"{p * 1e3:g} mW")
            ax2.plot(x, ratio, label=f"{p * 1e3:g} mW")
        ax1.set_ylabel("FWHM (Hz)")
        ax2.set_ylabel("cooling ratio")
        ax2.set_yscale("log")
        ax2.set_xlabel("detuning / kappa")
        ax1.legend()
        fig.tight_layout()
        out.figure("sweep.svg", fig)
    return {"points": len(rows), "unstable_points": sum(not r.stable for r in rows)}


# -- simulate ----------------------------------------------------------------------------

def _simulate_power(cfg: ExperimentConfig, power: float, out: Outputs, prefix: str, svg: bool) -> dict:
    v = cfg.values
    cav, mode, pt = cfg.cavity(power), cfg.mode(), cfg.photothermal()
    delta = v["simulation.delta_over_kappa"] * cav.kappa
    dyn = backaction.effective_damping(delta, cav, mode, pt)
    if not dyn.stable:
        raise Unstable("operating point is anti-damped; no stationary spectrum")
    dt = v["simulation.dt_s"]
    dt = langevin.max_step(mode) if math.isnan(dt) else dt
    duration = v["simulation.duration_s"]
    duration = 200.0 / dyn.gamma_eff if math.isnan(duration) else duration
    seed = v["simulation.seed"]
    runs = langevin.ensemble(v["simulation.runs"], duration, dt, cav, mode, pt, delta, seed,
                             record_every=v["simulation.record_every"])
    traces = [r for r in runs if isinstance(r, langevin.TimeTrace)]
    failures = [r for r in runs if isinstance(r, langevin.RunFailure)]
    for i, r in enumerate(runs):
        if isinstance(r, langevin.TimeTrace):
            out.binary(f"{prefix}traces/run_{i:03d}.bin", r.to_bytes())
    if failures:
        out.text(f"{prefix}failures.csv",
                 _csv(("run", "seed", "message"), [(f.index, f.seed, f.error) for f in failures]))
    if not traces:
        raise NonFinite("every run diverged")
    psd = estimation.ensemble_psd(traces, dyn.fwhm_hz)
    out.text(f"{prefix}psd.csv", psd.to_csv())
    fit = estimation.fit_lorentzian(psd)
    out.text(f"{prefix}fit.csv", estimation.fits_to_csv([fit]))
    t_fit = mode.effective_mass * mode.omega_m ** 2 * fit.area / K_B
    predicted_area = spectra.mean_square_displacement(mode, dyn)
    summary = [
        ("power_w", power), ("delta_over_kappa", v["simulation.delta_over_kappa"]),
        ("runs_ok", len(traces)), ("runs_failed", len(failures)),
        ("duration_s", duration), ("dt_s", dt),
        ("fwhm_fit_hz", fit.fwhm_hz), ("fwhm_pred_hz", dyn.fwhm_hz),
        ("center_fit_hz", fit.center_hz), ("center_pred_hz", spectra.peak_center(dyn) / (2 * math.pi)),
        ("area_fit_m2", fit.area), ("area_pred_m2", predicted_area),
        ("t_eff_fit_k", t_fit), ("t_eff_pred_k", mode.bath_temperature / dyn.cooling_ratio_pred),
    ]
    out.text(f"{prefix}summary.csv", _csv(("quantity", "value"), summary))
    if svg:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(psd.frequency / 1e3, psd.values, lw=0.8, label="ensemble PSD")
        ax.semilogy(psd.frequency / 1e3, fit.evaluate(psd.frequency), lw=1.0, label="Lorentzian fit")
        lo, hi = fit.center_hz - 15 * fit.fwhm_hz, fit.center_hz + 15 * fit.fwhm_hz
        ax.set_xlim(lo / 1e3, hi / 1e3)
        ax.set_xlabel("frequency (kHz)")
        ax.set_ylabel("S_x (m^2/Hz)")
        ax.legend()
        fig.tight_layout()
        out.figure(f"{prefix}psd.svg", fig)
    return dict(summary)


def cmd_simulate(cfg: ExperimentConfig, out: Outputs, svg: bool) -> dict:
    powers = cfg.powers
    results = {}
    for p in powers:
        prefix = "" if len(powers) == 1 else f"p{p * 1e3:g}mW/"
        results[f"{p:g}"] = _simulate_power(cfg, p, out, prefix, svg)
    return results


# -- modes -------------------------------------------------------------------------------

def _shape(cfg, out, svg):
    beam = cfg.beam()
    nx, ny = 98, 22
    xs = (np.arange(nx) + 0.5) * beam.length / nx
    ys = (np.arange(ny) + 0.5) * beam.width / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    u = modes.mode_shape(beam, gx, gy)
    out.text("mode_shape.csv", _csv(("x_m", "y_m", "u"), zip(gx.ravel(), gy.ravel(), u.ravel())))
    if svg:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(7, 2.5))
        im = ax.pcolormesh(xs * 1e6, ys * 1e6, (u ** 2).T, shading="auto")
        fig.colorbar(im, ax=ax, label="u^2")
        ax.set_xlabel("x (um)")
        ax.set_ylabel("y (um)")
        fig.tight_layout()
        out.figure("mode_shape.svg", fig)
    return {"mode_index": beam.mode_index, "frequency_ratio": modes.frequency_ratio(beam.longitudinal, beam.mode_index)}


def _tomography(cfg, out, svg):
    beam = cfg.beam()
    v = cfg.values
    data = modes.synthesize_tomography(beam, modes.raster_grid(beam), v["tomography.noise"],
                                       v["simulation.seed"])
    out.text("tomography.csv", data.to_csv())
    fit = modes.fit_mode(data, longitudinal=beam.longitudinal, surface_density=beam.surface_density)
    m = fit.model
    rows = [("mode_index", m.mode_index), ("transverse", m.transverse.value),
            ("dead_fraction", m.dead_fraction), ("amplitude", fit.amplitude), ("residual", fit.residual)]
    rows += [(f"residual_n{n}", r) for n, r in sorted(fit.residuals_by_index.items())]
    out.text("tomography_fit.csv", _csv(("quantity", "value"), rows))
    if svg:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(7, 2.5))
        sc = ax.scatter(data.x * 1e6, data.y * 1e6, c=data.mean_square_disp, s=30, marker="s")
        fig.colorbar(sc, ax=ax, label="<x^2> (arb.)")
        ax.set_xlabel("x (um)")
        ax.set_ylabel("y (um)")
        fig.tight_layout()
        out.figure("tomography.svg", fig)
    return {k: v for k, v in rows}


def _mass(cfg, out, svg):
    beam = cfg.beam()
    probe = cfg.probe(beam)
    m_eff, err = modes.effective_mass_with_error(beam, probe)
    rows = [("total_mass_kg", beam.total_mass), ("effective_mass_kg", m_eff),
            ("quadrature_error_kg", err), ("probe_waist_m", probe.waist),
            ("probe_x_m", probe.x0), ("probe_y_m", probe.y0)]
    out.text("mass.csv", _csv(("quantity", "value"), rows))
    return dict(rows)


def _tau(cfg, out, svg):
    zeta = cfg.values["photothermal.zeta"]
    target = cfg.values["photothermal.tau_s"]
    rows = [("tau_zeta1_s", modes.photothermal_tau(zeta=1.0)),
            ("zeta", zeta), ("tau_s", modes.photothermal_tau(zeta=zeta)),
            ("target_tau_s", target), ("zeta_for_target", modes.zeta_for_tau(target))]
    out.text("tau.csv", _csv(("quantity", "value"), rows))
    return dict(rows)


MODE_COMMANDS = {"shape": _shape, "tomography": _tomography, "mass": _mass, "tau": _tau}


def cmd_modes(cfg: ExperimentConfig, out: Outputs, svg: bool, what: str) -> dict:
    return MODE_COMMANDS[what](cfg, out, svg)


# -- report ------------------------------------------------------------------------------

def cmd_report(cfg: ExperimentConfig, out: Outputs, svg: bool, quick: bool = False,
               stream=None) -> dict:
    stream = stream or sys.stdout
    cav = cfg.cavity()
    lines = [f"config: {cfg.source}",
             f"kappa = {cav.kappa:.6g} rad/s, 1/(2 kappa) = {1e9 / (2 * cav.kappa):.2f} ns"]
    for line in lines:
        print(line, file=stream)

    def show(res):
        print(res.line(), file=stream, flush=True)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        results = acceptance.run_all(include_slow=not quick, progress=show)
    out.text("report.csv", _csv(("check", "name", "measured", "expected", "passed", "seconds"),
                                [(r.number, r.name, r.measured, r.expected, r.passed, r.seconds)
                                 for r in results]))
    out.text("report.txt", "\n".join(lines + [r.line() for r in results]) + "\n")
    failed = [r.number for r in results if not r.passed]
    return {"checks_run": len(results), "failed": failed, "quick": quick}


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, default=Path("selfcool-out"), help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--svg", action=argparse.BooleanOptionalAction, default=True,
                        help="also write SVG figures")

    parser = argparse.ArgumentParser(prog="selfcool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", parents=[common], help="damping and spring versus detuning")
    sw.add_argument("--delta-min", type=float, help="lowest detuning in units of kappa")
    sw.add_argument("--delta-max", type=float, help="highest detuning in units of kappa")
    sw.add_argument("--points", type=int)
    sw.add_argument("--power-w", type=float, action="append", help="input power (repeatable)")

    sm = sub.add_parser("simulate", parents=[common], help="Langevin ensemble, PSD and fit")
    sm.add_argument("--delta", type=float, help="detuning in units of kappa")
    sm.add_argument("--runs", type=int)
    sm.add_argument("--duration-s", type=float)
    sm.add_argument("--dt-s", type=float)
    sm.add_argument("--power-w", type=float, action="append", help="input power (repeatable)")

    md = sub.add_parser("modes", parents=[common], help="mirror mode shape, tomography, mass, tau")
    md.add_argument("what", choices=sorted(MODE_COMMANDS))

    rp = sub.add_parser("report", parents=[common], help="run the acceptance checks")
    rp.add_argument("--quick", action="store_true", help="skip the stochastic checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = _apply_overrides(cfg, args)
        out = Outputs(args.out)
        out.root.mkdir(parents=True, exist_ok=True)
        if args.command == "sweep":
            extra = cmd_sweep(cfg, out, args.svg)
        elif args.command == "simulate":
            extra = cmd_simulate(cfg, out, args.svg)
        elif args.command == "modes":
            extra = cmd_modes(cfg, out, args.svg, args.what)
        else:
            extra = cmd_report(cfg, out, args.svg, args.quick)
        name = args.command if args.command != "modes" else f"modes {args.what}"
        out.manifest(name, cfg, cfg.values["simulation.seed"], started, {"result": extra})
    except OSError as exc:
        where = f" ({exc.filename})" if exc.filename else ""
        print(f"selfcool: I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"selfcool: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SelfCoolError, ArithmeticError) as exc:
        print(f"selfcool: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.command == "report" and extra["failed"]:
        print(f"selfcool: failed checks {extra['failed']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
