"""Command-line entry point: load a corpus, start the workbench API."""

from __future__ import annotations

import argparse
import json
import sys

import uvicorn

from .service import create_app
from .session import Session, SessionConfig
from .store import ConceptSchema


def build_session(corpus: str, schema_path: str, config: SessionConfig) -> Session:
    with open(schema_path, "r", encoding="utf-8") as fh:
        schema = ConceptSchema.from_json(json.load(fh))
    session = Session(schema, config)
    session.store.ingest_file(corpus)
    if not session.store.ready:
        session.store.resolve_pending_embeddings(session.embedder)
    return session


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="themekit", description=__doc__)
    parser.add_argument("--corpus", required=True, help="line-delimited JSON corpus file")
    parser.add_argument("--schema", required=True, help="concept schema JSON file")
    parser.add_argument("--port", type=int, default=8712)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--config", help="session config JSON (k, tau, K, seed, embedder, ...)")
    parser.add_argument("--import-session", dest="import_path", help="resume from an exported snapshot")
    args = parser.parse_args(argv)

    config = SessionConfig.from_file(args.config) if args.config else SessionConfig()
    if args.import_path:
        session = Session.import_file(args.import_path)
    else:
        session = build_session(args.corpus, args.schema, config)
    app = create_app(session)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
