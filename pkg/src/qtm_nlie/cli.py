"""Command line front end: ``qtm-nlie <command> --config run.toml [overrides]``.

Exit status 0 on success, 2 when the configuration does not validate, 3 when a
solver fails to converge or hits a numerical obstruction.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:          # Python < 3.11
    import tomli as _toml
import tomli_w

from . import bethe_check as bc
from .contours import ContourSpec, build_ref_contour
from .core_types import ModelParams, NumericalError, QtmError, ValidationError, validate_params
from .excitations import ExcitationSpec, solve_quantisation
from .integral_equations import dressed_suite
from .observables import cft_spectrum_check, spectral_report

COMMANDS = ("dressed", "contour", "solve-nlie", "excite", "spectrum", "cft-check", "bethe-check", "sweep")
FORMATS = ("json", "csv")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("qtm_nlie")


class ConfigError(ValidationError):
    pass


# ------------------------------------------------------------ configuration

@dataclass
class NumericsConfig:
    quad_order: int = 64
    tol: float = 1e-10
    max_iter: int = 60
    window_order: int = 24
    rail_order: int = 16
    arc_order: int = 24
    arc_panels: int = 4
    segment_order: int = 16
    far_fraction: float = 0.2
    fit_disk: bool = True          # bethe-check: widen the disk around the Trotter branch points

    def contour_spec(self) -> ContourSpec:
        return ContourSpec(window_order=self.window_order, rail_order=self.rail_order,
                           arc_order=self.arc_order, arc_panels=self.arc_panels,
                           segment_order=self.segment_order)


@dataclass
class SweepConfig:
    command: str = "spectrum"
    temperatures: list = field(default_factory=list)
    trotter: list = field(default_factory=list)


@dataclass
class OutputConfig:
    path: str = "qtm_out.json"
    format: str = "json"


@dataclass
class RunConfig:
    command: str
    model: ModelParams
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    excitations: list = field(default_factory=list)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if self.output.format not in FORMATS:
            raise ConfigError(f"output format must be one of {FORMATS}")
        if self.sweep.command not in COMMANDS or self.sweep.command == "sweep":
            raise ConfigError(f"sweep.command must be a single-point command, got {self.sweep.command!r}")

    @property
    def specs(self) -> list:
        return list(self.excitations) or [ExcitationSpec(far_fraction=self.numerics.far_fraction)]

    def to_dict(self) -> dict:
        model = {k: v for k, v in self.model.to_dict().items() if v is not None}
        return {"command": self.command, "model": model, "numerics": asdict(self.numerics),
                "excitations": [e.to_dict() for e in self.excitations],
                "sweep": asdict(self.sweep), "output": asdict(self.output)}

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - {"command", "model", "numerics", "excitations", "sweep", "output"}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        if "command" not in d:
            raise ConfigError("config has no command")
        model = validate_params(d.get("model", {}))
        return cls(command=d["command"], model=model,
                   numerics=_section(NumericsConfig, d.get("numerics", {})),
                   excitations=[ExcitationSpec.from_dict(e) for e in d.get("excitations", [])],
                   sweep=_section(SweepConfig, d.get("sweep", {})),
                   output=_section(OutputConfig, d.get("output", {})))

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(_toml.loads(text))
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"malformed TOML: {exc}") from exc


def _section(kind, data: dict):
    names = {f.name: f for f in fields(kind)}
    bad = set(data) - set(names)
    if bad:
        raise ConfigError(f"unknown keys {sorted(bad)} in [{kind.__name__}]")
    out = kind(**data)
    for name, f in names.items():
        v = getattr(out, name)
        want = type(getattr(kind(), name))
        if want is float and isinstance(v, int) and not isinstance(v, bool):
            setattr(out, name, float(v))
        elif want is not type(v) and not (want is list and isinstance(v, list)):
            raise ConfigError(f"{kind.__name__}.{name} should be {want.__name__}, got {v!r}")
    return out


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    model = cfg.model
    if args.temperature is not None:
        model = model.with_(T=args.temperature)
    if args.trotter_n is not None:
        model = model.with_(trotter=args.trotter_n)
    model = validate_params(model)
    num = cfg.numerics
    if args.quad_order is not None:
        num = replace(num, quad_order=args.quad_order)
    if args.tol is not None:
        num = replace(num, tol=args.tol)
    out = cfg.output
    if args.out is not None:
        fmt = "csv" if args.out.endswith(".csv") else ("json" if args.out.endswith(".json") else out.format)
        out = OutputConfig(path=args.out, format=fmt)
    return replace(cfg, model=model, numerics=num, output=out)


# ------------------------------------------------------------ serialisation

def _plain(x):
    """Make numpy scalars / complex numbers JSON friendly; complex -> [re, im]."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _num(x) -> str:
    # repr gives the shortest string that round-trips the double (at most 17 digits)
    return repr(float(x))


@dataclass
class Result:
    """One computation: a JSON record and CSV rows sharing one header."""

    record: dict
    header: list
    rows: list


def _write(results: list, out: OutputConfig) -> None:
    if out.format == "json":
        text = json.dumps([_plain(r.record) for r in results], indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(results[0].header if results else [])
        for r in results:
            for row in r.rows:
                w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
        text = buf.getvalue()
    with open(out.path, "w") as fh:
        fh.write(text)


# ------------------------------------------------------------ commands

def _suite(cfg: RunConfig, p: ModelParams):
    return dressed_suite(p.with_(trotter=None), order=cfg.numerics.quad_order)


def _solve(cfg, p, spec, suite):
    return solve_quantisation(p, spec, suite, cfg.numerics.contour_spec(), cfg.numerics.tol)


def cmd_dressed(cfg: RunConfig, p: ModelParams) -> list:
    s = _suite(cfg, p).summary()
    rec = {"params": p.to_dict(), **{k: s[k] for k in ("q", "vF", "tau", "det_segment")}}
    tau = complex(s["tau"])
    rows = [[p.T, s["q"], s["vF"], tau.real, tau.imag, s["det_segment"]]]
    return [Result(rec, ["T", "q", "vF", "tau_re", "tau_im", "det_segment"], rows)]


CURVE_HEADER = ["curve_id", "idx", "re", "im"]


def _curve_rows(curve_id: str, pts) -> list:
    return [[curve_id, i, float(z.real), float(z.imag)] for i, z in enumerate(pts)]


def cmd_contour(cfg: RunConfig, p: ModelParams) -> list:
    suite = _suite(cfg, p)
    ref = build_ref_contour(suite, p.with_(trotter=None), cfg.numerics.contour_spec()).contour
    out = [Result({"params": p.to_dict(), "curve_id": "reference", "points": ref.polyline()},
                  CURVE_HEADER, _curve_rows("reference", ref.polyline()))]
    for spec in cfg.specs:
        sol, _ = _solve(cfg, p, spec, suite)
        for pc in sol.contour.pieces:
            cid = f"adapted[{spec.label()}]:{pc.name}"
            out.append(Result({"params": p.to_dict(), "curve_id": cid, "points": pc.lam},
                              CURVE_HEADER, _curve_rows(cid, pc.lam)))
    return out


def cmd_solve_nlie(cfg: RunConfig, p: ModelParams) -> list:
    suite = _suite(cfg, p)
    out = []
    for spec in cfg.specs:
        sol, _ = _solve(cfg, p, spec, suite)
        rec = json.loads(sol.to_json())
        rec["spec"] = spec.label()
        log.info("solve-nlie %s T=%g N=%s iterations=%d index=%s", spec.label(), p.T, p.trotter,
                 sol.iterations, sol.index)
        lam, u = sol.contour.lam, sol.values()
        rows = [[spec.label(), i, float(a.real), float(a.imag), float(b.real), float(b.imag)]
                for i, (a, b) in enumerate(zip(lam, u))]
        out.append(Result(rec, ["spec", "idx", "lam_re", "lam_im", "u_re", "u_im"], rows))
    return out


def cmd_excite(cfg: RunConfig, p: ModelParams) -> list:
    suite = _suite(cfg, p)
    out = []
    for spec in cfg.specs:
        sol, rs = _solve(cfg, p, spec, suite)
        rec = {"params": p.to_dict(), "spec": spec.to_dict(), "label": spec.label(),
               "targets": [[t.kind, t.side, t.n] for t in rs.targets], "roots": rs.roots,
               "predictions": {str(k): v for k, v in rs.predictions.items()},
               "residuals": rs.residuals, "jacobian_cond": rs.jacobian_cond,
               "classification": asdict(rs.report) if rs.report else None,
               "classification_ok": bool(rs.report.ok) if rs.report else None}
        rows = []
        for i, (t, r) in enumerate(zip(rs.targets, rs.roots)):
            p1 = rs.predictions.get(1, [np.nan] * len(rs.roots))[i]
            p2 = rs.predictions.get(2, [np.nan] * len(rs.roots))[i]
            rows.append([spec.label(), t.kind, t.side, t.n, float(r.real), float(r.imag),
                         float(np.real(p1)), float(np.imag(p1)), float(np.real(p2)), float(np.imag(p2)),
                         float(rs.residuals[i])])
        out.append(Result(rec, ["spec", "kind", "side", "n", "re", "im", "pred1_re", "pred1_im",
                                "pred2_re", "pred2_im", "residual"], rows))
    return out


SPECTRUM_HEADER = ["spec", "T", "N", "P_re", "P_im", "E_re", "E_im", "lnLambda_re", "lnLambda_im",
                   "xi", "phase", "Upsilon_R", "Upsilon_L"]


def cmd_spectrum(cfg: RunConfig, p: ModelParams) -> list:
    suite = _suite(cfg, p)
    ref, _ = _solve(cfg, p, ExcitationSpec(), suite)
    out = []
    for spec in cfg.specs:
        sol = ref if spec == ExcitationSpec(far_fraction=spec.far_fraction) else _solve(cfg, p, spec, suite)[0]
        rep = spectral_report(sol, spec, ref)
        rec = {"params": p.to_dict(), **rep.to_dict()}
        rows = [[rep.label, p.T, p.trotter or 0, rep.P.real, rep.P.imag, rep.E.real, rep.E.imag,
                 rep.lnLambda.real, rep.lnLambda.imag, rep.xi, rep.phase,
                 float(rep.Upsilon["R"]), float(rep.Upsilon["L"])]]
        out.append(Result(rec, SPECTRUM_HEADER, rows))
    return out


CFT_HEADER = ["spec", "T", "Upsilon_R", "Upsilon_L", "dln_re", "dln_im", "prediction", "residual",
              "dE_re", "dE_im", "prediction_E", "residual_E", "xi", "phase"]


def cmd_cft_check(cfg: RunConfig, p: ModelParams) -> list:
    Ts = cfg.sweep.temperatures or [p.T]
    specs = list(cfg.excitations) or [ExcitationSpec(0, (0,), (0,))]
    rows = cft_spectrum_check(specs, p.with_(trotter=None), Ts, cfg.numerics.contour_spec())
    out = []
    for r in rows:
        rec = {"params": p.with_(T=r.T).to_dict(), **asdict(r)}
        row = [r.label, r.T, r.upsilon_R, r.upsilon_L, r.dln.real, r.dln.imag, r.prediction.real,
               r.residual, r.dln_energy.real, r.dln_energy.imag, r.prediction_energy.real,
               r.residual_energy, r.xi, r.phase]
        out.append(Result(rec, CFT_HEADER, [row]))
    return out


BETHE_HEADER = ["spec", "N", "idx", "re", "im", "residual"]


def cmd_bethe_check(cfg: RunConfig, p: ModelParams) -> list:
    if p.trotter is None:
        raise ConfigError("bethe-check needs a finite Trotter number (model.trotter or --trotter-n)")
    if cfg.numerics.fit_disk:
        p = bc.fit_disk(p)
    suite = _suite(cfg, p)
    out = []
    for spec in cfg.specs:
        sol, _ = _solve(cfg, p, spec, suite)
        rec = bc.certification_record(sol)
        rs = bc.extract_bethe_roots(sol)
        bc.bae_residual(rs, p)
        rec.update({"params": p.to_dict(), "spec": spec.label(), "roots": rs.roots})
        log.info("bethe-check %s N=%d residual=%.3e factorisation=%.3e", spec.label(), p.trotter,
                 rec["bae_residual"], rec["norm"]["factorisation_residual"])
        rows = [[spec.label(), p.trotter, i, float(r.real), float(r.imag), float(e)]
                for i, (r, e) in enumerate(zip(rs.roots, rs.residuals))]
        out.append(Result(rec, BETHE_HEADER, rows))
    return out


SINGLE = {"dressed": cmd_dressed, "contour": cmd_contour, "solve-nlie": cmd_solve_nlie,
          "excite": cmd_excite, "spectrum": cmd_spectrum, "cft-check": cmd_cft_check,
          "bethe-check": cmd_bethe_check}


def _point(args):
    cfg, p = args
    return SINGLE[cfg.sweep.command](cfg, p)


def sweep_points(cfg: RunConfig) -> list:
    # cft-check loops over the temperatures itself
    Ts = [cfg.model.T] if cfg.sweep.command == "cft-check" else (cfg.sweep.temperatures or [cfg.model.T])
    Ns = cfg.sweep.trotter or [cfg.model.trotter]
    return [validate_params(cfg.model, T=float(T), trotter=N) for T in Ts for N in Ns]


def thread_cap() -> int:
    raw = os.environ.get("QTM_NLIE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"QTM_NLIE_THREADS must be an integer, got {raw!r}")


def cmd_sweep(cfg: RunConfig, p: ModelParams) -> list:
    inner = cfg if cfg.sweep.command == "cft-check" else replace(cfg, sweep=replace(cfg.sweep, temperatures=[]))
    pts = sweep_points(cfg)
    jobs = [(inner, q) for q in pts]
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_point, jobs))
    else:
        parts = [_point(j) for j in jobs]
    return [r for part in parts for r in part]


def run(cfg: RunConfig) -> int:
    """Dispatch and write the artefacts; returns the exit status."""
    t0 = time.perf_counter()
    try:
        fn = cmd_sweep if cfg.command == "sweep" else SINGLE[cfg.command]
        results = fn(cfg, cfg.model)
    except ValidationError as exc:
        log.error("validation: %s", exc)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        log.error("solver: %s: %s", type(exc).__name__, exc)
        return EXIT_SOLVER
    _write(results, cfg.output)
    log.info("%s: %d records written to %s in %.2fs", cfg.command, len(results), cfg.output.path,
             time.perf_counter() - t0)
    return EXIT_OK


# ------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtm-nlie", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--temperature", type=float)
    ap.add_argument("--trotter-n", type=int)
    ap.add_argument("--quad-order", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--out", help="output path; .json or .csv selects the format")
    return ap


def _setup_logging(path: str) -> logging.Handler:
    h = logging.FileHandler(path + ".log", mode="w")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(h)
    log.setLevel(logging.INFO)
    return h


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = None
    try:
        with open(args.config, "rb") as fh:
            raw = _toml.load(fh)
        raw["command"] = args.command
        cfg = apply_overrides(RunConfig.from_dict(raw), args)
    except (OSError, ValidationError, TypeError, ValueError) as exc:
        print(f"qtm-nlie: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        handler = _setup_logging(cfg.output.path)
        log.info("command=%s params=%s", cfg.command, cfg.model.to_dict())
        code = run(cfg)
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()
    if code != EXIT_OK:
        print(f"qtm-nlie: {cfg.command} failed with status {code}; see {cfg.output.path}.log", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
