"""Command-line entry point: a thin client of the HTTP service.

Each operation subcommand assembles the effective configuration
(file < environment < flags), sends it to the service — in-process by
default, or to a running server via ``--server URL`` — and prints the JSON
run summary.  ``serve`` starts the HTTP service itself.

Exit codes: 0 success; 1 domain or transport failure (one-line diagnostic
on stderr); 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import CONFIG_KEYS, RunConfig, apply_overrides, load_config
from .errors import TcnformerError

OPERATIONS = ("fetch", "train", "evaluate", "forecast", "ablate")
ENDPOINT_ENV = "TCNFORMER_ENDPOINT_URL"

_OPERATION_HELP = {
    "fetch": "download a date span of hourly wind speed and canonicalize it",
    "train": "train on a season and score the held-out test window",
    "evaluate": "score a stored checkpoint on a season's test window",
    "forecast": "predict the next horizon hours from the latest data",
    "ablate": "run the three-arm attention substitution study",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcnformer",
        description="Short-term wind-speed forecasting runs",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    defaults = RunConfig()
    for op in OPERATIONS:
        p = sub.add_parser(op, help=_OPERATION_HELP[op],
                           description=_OPERATION_HELP[op])
        p.add_argument("--config", metavar="PATH",
                       help="key=value config file (flags override it)")
        p.add_argument("--server", metavar="URL",
                       help="send the request to a running service "
                            "instead of running in-process")
        for key in CONFIG_KEYS:
            p.add_argument(
                f"--{key.replace('_', '-')}",
                dest=key,
                metavar="VALUE",
                help=f"config key {key} (default {getattr(defaults, key)!r})",
            )

    serve = sub.add_parser("serve", help="start the HTTP service",
                           description="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _effective_payload(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides: dict[str, str] = {}
    env_endpoint = os.environ.get(ENDPOINT_ENV)
    if env_endpoint:
        overrides["endpoint_url"] = env_endpoint
    for key in CONFIG_KEYS:
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    cfg = apply_overrides(cfg, overrides)
    return {"config": cfg.to_mapping()}


class _TransportFailure(Exception):
    """The request never produced an HTTP response (connection, timeout)."""


def _post(command: str, server: str | None, payload: dict) -> tuple[int, object]:
    path = f"/{command}"
    if server:
        import httpx

        try:
            resp = httpx.post(
                server.rstrip("/") + path, json=payload, timeout=3600.0
            )
        except httpx.HTTPError as exc:
            raise _TransportFailure(f"cannot reach {server}: {exc}") from exc
    else:
        import warnings

        with warnings.catch_warnings():
            # fastapi's re-export module warns about its own httpx usage;
            # not actionable here and noise on every in-process request.
            warnings.filterwarnings("ignore", message=".*starlette.testclient.*")
            from fastapi.testclient import TestClient

        from .service import create_app

        resp = TestClient(create_app()).post(path, json=payload)
    try:
        body = resp.json()
    except ValueError:
        body = resp.text
    return resp.status_code, body


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        code = exc.code
        return 0 if code in (0, None) else int(code)

    if args.command is None:
        parser.print_help()
        return 2

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    try:
        payload = _effective_payload(args)
        status, body = _post(args.command, args.server, payload)
    except TcnformerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _TransportFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if status == 200:
        print(json.dumps(body, indent=2, sort_keys=True))
        return 0
    detail = body.get("detail") if isinstance(body, dict) else body
    print(f"error: {detail}", file=sys.stderr)
    return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
