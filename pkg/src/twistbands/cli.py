"""Command-line interface: bands, dos, converge, derive.

Runs are driven by an INI-style config (sections mirror the library
surface); angles live in the config in degrees and are converted once at
the boundary.  All data outputs are deterministic for a fixed config; the
run manifest isolates the only volatile field (the timestamp).  Files are
written to a temp name and atomically renamed, so failed runs never leave
partial outputs.
"""

import argparse
import configparser
import datetime
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .convergence import expansion_error_sweep, truncation_error_curve
from .errors import (
    CapabilityError,
    ContractError,
    DomainError,
    FormatError,
    ParameterError,
    ResourceError,
)
from .geometry import (
    VALLEY_K,
    VALLEY_KPRIME,
    build_layer_geometry,
    build_moire_geometry,
)
from .model import load_wannier_model, simplified_model
from .momentum import build_basis
from .spectral import (
    HamiltonianFamily,
    band_structure,
    bz_path,
    density_of_states,
    write_band_csv,
    write_dos_csv,
)
from .taylor import (
    build_moire_basis,
    derive_continuum_model,
    write_continuum_model,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_CONTRACT = 4

_KNOWN_KEYS = {
    "geometry": {"a", "theta_deg"},
    "model": {"type", "t", "alpha", "beta", "z", "scale", "path"},
    "family": {"kind", "m", "n", "tau"},
    "basis": {"lambda", "lambda_g", "max_dim"},
    "valley": {"valley"},
    "path": {"labels", "samples_per_segment"},
    "dos": {"sigma", "emin", "emax", "samples", "epsilon", "n_grid"},
    "sweep": {
        "axis",
        "values",
        "tau0",
        "sigma",
        "lambda_ref_g",
        "lambda_ref",
        "fixed_m",
        "fixed_n",
        "ref_m",
        "ref_n",
    },
    "output": {"dir"},
}


class _Config:
    """Typed access to the INI config with field-level error messages."""

    def __init__(self, path):
        self.parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        read = self.parser.read(path)
        if not read:
            raise ParameterError(f"config file not found: {path}")
        for section in self.parser.sections():
            if section not in _KNOWN_KEYS:
                raise ParameterError(f"[{section}]: unknown config section")
            for key in self.parser[section]:
                if key not in _KNOWN_KEYS[section]:
                    raise ParameterError(
                        f"[{section}] {key}: unknown config key"
                    )

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def _raw(self, section, key, default):
        if not self.parser.has_option(section, key):
            if default is not _REQUIRED:
                return default
            raise ParameterError(f"[{section}] {key}: required key missing")
        return self.parser.get(section, key)

    def get(self, section, key, default=None):
        return self._raw(section, key, default)

    def getfloat(self, section, key, default=None):
        raw = self._raw(section, key, default)
        if raw is default:
            return default
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ParameterError(
                f"[{section}] {key}: expected a number, got {raw!r}"
            )

    def getint(self, section, key, default=None):
        raw = self._raw(section, key, default)
        if raw is default:
            return default
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ParameterError(
                f"[{section}] {key}: expected an integer, got {raw!r}"
            )

    def getorder(self, section, key, default=None):
        """Expansion order: integer, or inf/none meaning unexpanded."""
        raw = self._raw(section, key, default)
        if raw is default:
            return default
        text = str(raw).strip().lower()
        if text in ("inf", "none", ""):
            return None
        try:
            return int(text)
        except ValueError:
            raise ParameterError(
                f"[{section}] {key}: expected an integer or 'inf', "
                f"got {raw!r}"
            )

    def snapshot(self):
        return {s: dict(self.parser[s]) for s in self.parser.sections()}


class _REQUIRED:
    pass


def _require(cfg, section, key):
    return cfg.get(section, key, _REQUIRED)


def _build_geometry(cfg):
    a = cfg.getfloat("geometry", "a", _REQUIRED)
    theta_deg = cfg.getfloat("geometry", "theta_deg", _REQUIRED)
    geom = build_layer_geometry(a, math.radians(theta_deg))
    moire = build_moire_geometry(geom)
    return geom, moire


def _build_model(cfg, geom):
    kind = cfg.get("model", "type", "simplified").strip().lower()
    if kind == "simplified":
        kwargs = {
            "a": geom.a,
            "theta": geom.theta,
            "t": cfg.getfloat("model", "t", 2.7),
            "alpha": cfg.getfloat("model", "alpha", 2.0),
            "beta": cfg.getfloat("model", "beta", 1.0),
            "z": cfg.getfloat("model", "z", 3.35),
        }
        if cfg.has("model", "scale"):
            kwargs["scale"] = cfg.getfloat("model", "scale")
        return simplified_model(**kwargs)
    if kind == "wannier":
        path = _require(cfg, "model", "path")
        return load_wannier_model(path, geom)
    raise ParameterError(
        f"[model] type: expected simplified or wannier, got {kind!r}"
    )


def _valleys(cfg):
    raw = cfg.get("valley", "valley", "K").strip()
    if raw in (VALLEY_K, VALLEY_KPRIME):
        return [raw]
    if raw.lower() == "both":
        return [VALLEY_K, VALLEY_KPRIME]
    raise ParameterError(
        f"[valley] valley: expected K, Kprime or both, got {raw!r}"
    )


def _lambda(cfg, moire):
    if cfg.has("basis", "lambda"):
        return cfg.getfloat("basis", "lambda")
    return cfg.getfloat("basis", "lambda_g", 6.0) * moire.shortest_g


def _family(cfg, model, geom, moire, valley):
    kind = cfg.get("family", "kind", "exact").strip().lower()
    Lambda = _lambda(cfg, moire)
    max_dim = cfg.getint("basis", "max_dim", 20000)
    m = cfg.getorder("family", "m")
    n = cfg.getorder("family", "n")
    tau = cfg.getorder("family", "tau")
    if kind == "exact":
        basis = build_basis(geom, moire, Lambda, valley, max_dim=max_dim)
        return HamiltonianFamily(
            "exact", model=model, basis=basis, tau=tau
        )
    if kind == "expanded":
        basis = build_basis(geom, moire, Lambda, valley, max_dim=max_dim)
        return HamiltonianFamily(
            "expanded", model=model, basis=basis, m=m, n=n, tau=tau
        )
    if kind == "continuum":
        if m is None or n is None or tau is None:
            raise ParameterError(
                "[family] m, n, tau: the continuum family needs finite "
                "orders"
            )
        cm = derive_continuum_model(model, geom, moire, valley, m, n, tau)
        basis_M = build_moire_basis(moire, Lambda, max_dim=max_dim)
        return HamiltonianFamily(
            "continuum", continuum=cm, moire_basis=basis_M
        )
    raise ParameterError(
        f"[family] kind: expected exact, expanded or continuum, got {kind!r}"
    )


def _build_path(cfg, moire, valley):
    raw = cfg.get("path", "labels", "K_M, Gamma_M, M_M, K_M")
    labels = [tok.strip() for tok in raw.split(",") if tok.strip()]
    samples = cfg.getint("path", "samples_per_segment", 30)
    return bz_path(moire, labels, samples, valley=valley)


def _atomic_write(path, data):
    """Write text or bytes to ``path`` via temp file + atomic rename."""
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _atomic_via_temp(path, writer):
    """Run ``writer(tmp_path)`` then atomically rename onto ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _write_manifest(out_dir, cfg, outputs, command):
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg.snapshot(),
        "outputs": sorted(outputs),
    }
    _atomic_write(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _render_bands(band_data, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(band_data.path.s, band_data.energies, lw=0.8, color="C0")
    for x in band_data.path.label_positions:
        ax.axvline(x, color="0.8", lw=0.5, zorder=0)
    ax.set_xticks(band_data.path.label_positions)
    ax.set_xticklabels(band_data.path.labels)
    ax.set_ylabel("energy")
    ax.set_xlim(band_data.path.s[0], band_data.path.s[-1])
    fig.tight_layout()
    _atomic_via_temp(path, lambda tmp: fig.savefig(tmp, format="svg"))
    plt.close(fig)


def _render_dos(curve, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(curve.energies, curve.dos, lw=0.9, color="C0")
    ax.set_xlabel("energy")
    ax.set_ylabel("DoS")
    fig.tight_layout()
    _atomic_via_temp(path, lambda tmp: fig.savefig(tmp, format="svg"))
    plt.close(fig)


def _render_sweep(values, errors, xlabel, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(values, np.maximum(errors, 1e-300), "o-", color="C0")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error")
    fig.tight_layout()
    _atomic_via_temp(path, lambda tmp: fig.savefig(tmp, format="svg"))
    plt.close(fig)


def cmd_bands(cfg, out_dir, threads, render):
    geom, moire = _build_geometry(cfg)
    model = _build_model(cfg, geom)
    outputs = []
    for valley in _valleys(cfg):
        family = _family(cfg, model, geom, moire, valley)
        path = _build_path(cfg, moire, valley)
        data = band_structure(family, path, threads=threads)
        name = f"bands_{family.kind}_{valley}.csv"
        dest = os.path.join(out_dir, name)
        _atomic_via_temp(dest, lambda tmp: write_band_csv(data, tmp))
        outputs.append(name)
        if render:
            svg = f"bands_{family.kind}_{valley}.svg"
            _render_bands(data, os.path.join(out_dir, svg))
            outputs.append(svg)
    _write_manifest(out_dir, cfg, outputs, "bands")
    return outputs


def cmd_dos(cfg, out_dir, threads, render):
    geom, moire = _build_geometry(cfg)
    model = _build_model(cfg, geom)
    sigma = cfg.getfloat("dos", "sigma", None)
    emin = cfg.getfloat("dos", "emin", None)
    emax = cfg.getfloat("dos", "emax", None)
    if (emin is None) != (emax is None):
        raise ParameterError("[dos] emin/emax: give both or neither")
    if emin is None:
        if sigma is None:
            raise ParameterError("[dos] sigma: required (or emin+emax)")
        emin, emax = -sigma, sigma
    if emax <= emin:
        raise ParameterError("[dos] emax: must exceed emin")
    samples = cfg.getint("dos", "samples", 200)
    epsilon = cfg.getfloat("dos", "epsilon", None)
    if epsilon is None:
        epsilon = 0.02 * (emax - emin) / 2.0
    N = cfg.getint("dos", "n_grid", 12)
    E_grid = np.linspace(emin, emax, samples)
    families = {
        valley: _family(cfg, model, geom, moire, valley)
        for valley in _valleys(cfg)
    }
    curve = density_of_states(families, E_grid, epsilon, N, threads=threads)
    outputs = ["dos.csv"]
    dest = os.path.join(out_dir, "dos.csv")
    _atomic_via_temp(dest, lambda tmp: write_dos_csv(curve, tmp))
    if render:
        _render_dos(curve, os.path.join(out_dir, "dos.svg"))
        outputs.append("dos.svg")
    _write_manifest(out_dir, cfg, outputs, "dos")
    return outputs


def _sweep_csv(parameter, values, errors):
    lines = ["param,value,error"]
    for v, e in zip(values, errors):
        lines.append(f"{parameter},{v:.12g},{e:.12g}")
    return "\n".join(lines) + "\n"


def cmd_converge(cfg, out_dir, threads, render):
    geom, moire = _build_geometry(cfg)
    model = _build_model(cfg, geom)
    valley = _valleys(cfg)[0]
    axis = _require(cfg, "sweep", "axis").strip().lower()
    raw_values = _require(cfg, "sweep", "values")
    try:
        values = [float(tok) for tok in raw_values.split(",") if tok.strip()]
    except ValueError:
        raise ParameterError(
            f"[sweep] values: expected comma-separated numbers, "
            f"got {raw_values!r}"
        )
    pathspec = _build_path(cfg, moire, valley)
    Lambda = _lambda(cfg, moire)
    max_dim = cfg.getint("basis", "max_dim", 20000)
    outputs = []
    if axis == "lambda":
        Sigma = cfg.getfloat("sweep", "sigma", _REQUIRED)
        if cfg.has("sweep", "lambda_ref"):
            Lambda_ref = cfg.getfloat("sweep", "lambda_ref")
        else:
            Lambda_ref = (
                cfg.getfloat("sweep", "lambda_ref_g", 10.0) * moire.shortest_g
            )
        Lambdas = [v * moire.shortest_g for v in values]
        errors = truncation_error_curve(
            model, Lambdas, Sigma, pathspec, Lambda_ref,
            valley=valley, threads=threads, max_dim=max_dim,
        )
        name = "sweep_lambda.csv"
        _atomic_write(
            os.path.join(out_dir, name),
            _sweep_csv("Lambda", Lambdas, errors),
        )
        outputs.append(name)
        sidecar = {
            "axis": "lambda",
            "values": Lambdas,
            "Sigma": Sigma,
            "Lambda_ref": Lambda_ref,
            "valley": valley,
            "path_labels": list(pathspec.labels),
            "path_points": len(pathspec),
            "errors": errors,
        }
        plot_vals = Lambdas
    else:
        if axis not in ("m", "n", "tau"):
            raise ParameterError(
                f"[sweep] axis: expected m, n, tau or lambda, got {axis!r}"
            )
        tau0 = cfg.getint("sweep", "tau0", _REQUIRED)
        fixed = {
            "m": cfg.getorder("sweep", "fixed_m"),
            "n": cfg.getorder("sweep", "fixed_n"),
            "ref_m": cfg.getorder("sweep", "ref_m"),
            "ref_n": cfg.getorder("sweep", "ref_n"),
        }
        result = expansion_error_sweep(
            model, geom.theta, tau0, axis, [int(v) for v in values],
            fixed_orders=fixed, Lambda=Lambda, path=pathspec,
            valley=valley, threads=threads, max_dim=max_dim,
        )
        errors = result.errors
        name = f"sweep_{axis}.csv"
        _atomic_write(
            os.path.join(out_dir, name),
            _sweep_csv(axis, result.values, errors),
        )
        outputs.append(name)
        sidecar = result.config | {"errors": errors}
        plot_vals = result.values
    side_name = outputs[0].replace(".csv", "_config.json")
    _atomic_write(
        os.path.join(out_dir, side_name),
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
    )
    outputs.append(side_name)
    if render:
        svg = outputs[0].replace(".csv", ".svg")
        _render_sweep(plot_vals, errors, axis, os.path.join(out_dir, svg))
        outputs.append(svg)
    _write_manifest(out_dir, cfg, outputs, "converge")
    return outputs


def cmd_derive(cfg, out_dir, threads, render):
    geom, moire = _build_geometry(cfg)
    model = _build_model(cfg, geom)
    m = cfg.getorder("family", "m")
    n = cfg.getorder("family", "n")
    tau = cfg.getorder("family", "tau")
    if m is None or n is None or tau is None:
        raise ParameterError(
            "[family] m, n, tau: finite orders are required to derive a "
            "continuum model"
        )
    outputs = []
    for valley in _valleys(cfg):
        cm = derive_continuum_model(model, geom, moire, valley, m, n, tau)
        name = f"continuum_{valley}.txt"
        dest = os.path.join(out_dir, name)
        _atomic_via_temp(dest, lambda tmp: write_continuum_model(cm, tmp))
        outputs.append(name)
    _write_manifest(out_dir, cfg, outputs, "derive")
    return outputs


_COMMANDS = {
    "bands": cmd_bands,
    "dos": cmd_dos,
    "converge": cmd_converge,
    "derive": cmd_derive,
}


def make_parser():
    parser = argparse.ArgumentParser(
        prog="twistbands",
        description=(
            "Band structures, density of states, convergence sweeps and "
            "continuum-model derivation for twisted bilayer models."
        ),
    )
    parser.add_argument(
        "command", choices=sorted(_COMMANDS), help="what to compute"
    )
    parser.add_argument(
        "--config", required=True, help="path to the INI run config"
    )
    parser.add_argument(
        "--out", default=".", help="output directory (created if missing)"
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count(),
        help="worker pool size for independent momenta",
    )
    parser.add_argument(
        "--render",
        action="store_true",
        help="also write static SVG renderings of the outputs",
    )
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = _Config(args.config)
        os.makedirs(args.out, exist_ok=True)
        outputs = _COMMANDS[args.command](
            cfg, args.out, args.threads, args.render
        )
    except (ParameterError, DomainError, FormatError, CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    for name in outputs:
        print(name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
