"""Command-line entry point: ``qclmi simulate | poincare | plot``.

Exit codes: 0 success, 2 configuration error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .core import ConfigError, ConvergenceError, preset_path

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3

log = logging.getLogger("qclmi")


def _read(path: str) -> tuple[str, str]:
    """Config text and the stem used to name outputs."""
    if not os.path.exists(path) and os.path.exists(preset_path(path)):
        path = preset_path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    stem = os.path.splitext(os.path.basename(path))[0]
    return text, stem


def simulate(config_path: str, out_dir: str, threads: int = 1) -> dict:
    """Run one configuration; writes ``<stem>.csv`` and ``<stem>.manifest.json``. Returns the manifest."""
    from .core import loads_config
    from .runner import write_simulation

    text, stem = _read(config_path)
    return write_simulation(loads_config(text), text, out_dir, stem, threads=threads)


def poincare(config_path: str, out_dir: str) -> dict:
    """Section points plus the selected packet centers; writes ``<stem>.section.csv`` and its manifest."""
    from .core import loads_config
    from .runner import write_poincare

    text, stem = _read(config_path)
    return write_poincare(loads_config(text), text, out_dir, stem)


def plot(csv_path: str, out_path: str) -> None:
    from .svgplot import plot_file

    plot_file(csv_path, out_path)


def _simulate(args) -> int:
    man = simulate(args.config, args.out, threads=args.threads)
    log.info("wrote %s", ", ".join(man["outputs"]))
    return EXIT_OK


def _poincare(args) -> int:
    man = poincare(args.config, args.out)
    log.info("wrote %s", ", ".join(man["outputs"]))
    return EXIT_OK


def _plot(args) -> int:
    plot(args.input, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qclmi", description="Quantum and classical linear mutual information runs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="entropy time series for one configuration")
    s.add_argument("--config", required=True, help="TOML file or preset name (fig1, fast_fig3a, ...)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int, default=1, help="run classical and quantum pipelines concurrently")
    s.set_defaults(func=_simulate)

    s = sub.add_parser("poincare", help="Poincare section and packet-center selection")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_poincare)

    s = sub.add_parser("plot", help="render a series or section CSV as SVG")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "threads", 1) < 1:
        print("config error: threads: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        diag = getattr(exc, "diagnostic", None) or "unknown"
        print(f"convergence failure [{diag}]: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, OSError) as exc:
        if args.command == "plot":
            print(f"plot error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
