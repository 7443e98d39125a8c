"""Thin command-line client for the pricing service.

Every subcommand loads a JSON config, applies flag overrides, posts it to a
service endpoint (an embedded in-process app by default, or a remote server
via --server) and writes the returned report and artifacts to the output
directory. Result files carry no timestamps; logs go to stderr, controlled
by UVOL_LOG={error|info|debug}.

Exit codes: 0 ok, 2 config error, 3 solver error, 4 validation check failed.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import sys
from pathlib import Path

import click
import httpx

from .serialize import canonical_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4

log = logging.getLogger("uvol")


def _setup_logging() -> None:
    level = os.environ.get("UVOL_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(stream=sys.stderr, level=levels[level], format="%(levelname)s %(name)s: %(message)s")


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    from .service import create_app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://uvol", timeout=None) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _load_payload(config_path: str) -> dict:
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if not isinstance(payload, dict):
        click.echo("config error: top-level JSON must be an object", err=True)
        sys.exit(EXIT_CONFIG)
    return payload


def _set_path(payload: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = payload
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _apply_overrides(payload: dict, seed, threads, grid_nx, mc_paths, mc_steps) -> dict:
    if seed is not None:
        _set_path(payload, "mc.seed", seed)
    if threads is not None:
        _set_path(payload, "threads", threads)
    if grid_nx is not None:
        _set_path(payload, "grid.n_x", grid_nx)
    if mc_paths is not None:
        _set_path(payload, "mc.n_paths", mc_paths)
    if mc_steps is not None:
        _set_path(payload, "mc.n_steps", mc_steps)
    return payload


def _write_outputs(out_dir: str, name: str, report: dict, artifacts: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / f"{name}.json"
    report_path.write_text(canonical_json(report), encoding="utf-8")
    for fname, content in sorted(artifacts.items()):
        (out / fname).write_text(content, encoding="utf-8")
    return report_path


def _handle(response: httpx.Response, out: str, name: str, summary) -> None:
    if response.status_code in (400, 422):
        click.echo(f"config error: {response.text}", err=True)
        sys.exit(EXIT_CONFIG)
    if response.status_code >= 500:
        click.echo(f"solver error: {response.text}", err=True)
        sys.exit(EXIT_SOLVER)
    body = response.json()
    report, artifacts = body["report"], body.get("artifacts", {})
    path = _write_outputs(out, name, report, artifacts)
    click.echo(summary(report))
    log.info("report written to %s", path)
    if name == "validate" and not report.get("all_passed", False):
        sys.exit(EXIT_VALIDATION)


def _common(f):
    f = click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))(f)
    f = click.option("--out", default="uvol-out", show_default=True, help="output directory")(f)
    f = click.option("--server", default=None, help="remote service URL; default runs in-process")(f)
    f = click.option("--seed", type=int, default=None, help="override mc.seed")(f)
    f = click.option("--threads", type=int, default=None, help="override worker threads")(f)
    f = click.option("--grid-nx", type=int, default=None, help="override grid.n_x")(f)
    f = click.option("--mc-paths", type=int, default=None, help="override mc.n_paths")(f)
    f = click.option("--mc-steps", type=int, default=None, help="override mc.n_steps")(f)
    return f


def _run_command(name, endpoint, summary, config_path, out, server, seed, threads, grid_nx, mc_paths, mc_steps):
    payload = _apply_overrides(_load_payload(config_path), seed, threads, grid_nx, mc_paths, mc_steps)
    response = _post(server, endpoint, payload)
    _handle(response, out, name, summary)


@click.group()
def main() -> None:
    """Pricing engine for European claims under volatility uncertainty."""
    _setup_logging()


def _register(name: str, endpoint: str, summary):
    @main.command(name=name)
    @_common
    def cmd(config_path, out, server, seed, threads, grid_nx, mc_paths, mc_steps):
        _run_command(name, endpoint, summary, config_path, out, server, seed, threads, grid_nx, mc_paths, mc_steps)

    cmd.__doc__ = f"Run {name} and write {name}.json (plus artifacts) to --out."
    return cmd


_register(
    "price",
    "/api/price",
    lambda r: f"super={r['super']:.6f} sub={r['sub']:.6f} method={r['method']}",
)
_register(
    "mc-bound",
    "/api/mc-bound",
    lambda r: (
        f"mc_sup={r['mc_sup']:.6f} pde_super={r['pde_super']:.6f} "
        f"gap={r['gap']:.6f} argmax={r['argmax_control']}"
    ),
)
_register(
    "hedge-sim",
    "/api/hedge-sim",
    lambda r: (
        f"initial={r['initial']:.6f} mean_surplus={r['mean_surplus']:.6f} "
        f"min_surplus={r['min_surplus']:.6f} valid={r['valid']}"
    ),
)
_register(
    "validate",
    "/api/validate",
    lambda r: "all checks passed" if r["all_passed"] else "validation checks FAILED",
)
_register(
    "surface",
    "/api/surface",
    lambda r: (
        f"side={r['side']} slices={r['retained_slices']} "
        f"price_at_query={r['price_at_query']:.6f}"
    ),
)
_register(
    "convergence",
    "/api/convergence",
    lambda r: (
        f"levels={len(r['levels'])} order={r['observed_order']} cauchy={r['cauchy']}"
    ),
)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the pricing service with uvicorn."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
