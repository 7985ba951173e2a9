"""Serve entrypoint: guidance-service --port 8731 --mode echo [--seed N]
[--target path.npy]."""

from __future__ import annotations

import argparse
import logging

import numpy as np
import uvicorn

from .app import create_app
from .backends import ALL_MODES, BackendConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guidance-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8731)
    parser.add_argument("--mode", choices=ALL_MODES, default="echo")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--target", help="oracle clean image (.npy, values in [-1, 1])")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    target = None
    if args.target:
        target = np.load(args.target)
    config = BackendConfig(mode=args.mode, seed=args.seed, target=target)
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
