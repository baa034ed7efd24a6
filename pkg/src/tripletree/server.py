"""HTTP session server for live interactive clustering.

One session = one sampler chain plus one worker thread.  The worker runs
a fixed-size MCMC block, selects a query subset, and then blocks until
the answer arrives; clients pull the pending query, answer it (accept or
triplet), and poll progress.  All mutation happens under a per-session
lock with the worker idle while an answer is being applied, so state
reads always see a consistent chain.

The deterministic part of a session (everything except the human) lives
in :class:`SessionCore`; replaying a query log through a fresh core with
the same dataset and config reproduces the tree sequence exactly.

Endpoints: POST /sessions, GET /sessions/{id}/query,
POST /sessions/{id}/answer, GET /sessions/{id}/state, GET /healthz.
Errors are JSON ``{code, message}``.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .constraints import UnrealizableError, incorporate_triplet
from .harness import Dataset, target_from_labels
from .model import DdtParams, estimate_sigma2
from .newick import to_newick
from .querying import QueryScheme, select_query
from .sampler import SamplerSchedule, gibbs_internal_values, initial_state, run
from .trace import SampleTrace
from .tree import induce_subtree
from .triplets import Triplet, TripletDistance


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass(frozen=True)
class SessionConfig:
    """Client-settable knobs of one session."""

    scheme: str = "random"
    iterations_per_query: int = 100
    subset_size: int = 10
    candidates: int = 20
    seed: int = 0
    sigma2: float | str = "auto"
    c: float = 1.0
    trace_capacity: int = 20
    trace_stride: int = 5
    use_target: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(doc) - allowed - {"dataset"}
        if unknown:
            raise ApiError(400, "bad_config", f"unknown config fields: {sorted(unknown)}")
        try:
            cfg = cls(**{k: v for k, v in doc.items() if k in allowed})
            QueryScheme(cfg.scheme, cfg.subset_size, cfg.candidates)
            if cfg.iterations_per_query <= 0 or cfg.trace_capacity <= 0 or cfg.trace_stride <= 0:
                raise ValueError("iteration and trace counts must be positive")
            if isinstance(cfg.sigma2, str) and cfg.sigma2 != "auto":
                raise ValueError('sigma2 must be a number or "auto"')
        except (TypeError, ValueError) as e:
            raise ApiError(400, "bad_config", str(e)) from None
        return cfg


class NoPendingQuery(Exception):
    pass


class AnswerOutsideSubset(Exception):
    pass


class DuplicateAnswer(Exception):
    pass


class SessionCore:
    """The replayable part of a session: chain, trace, queries, series.

    Methods must be called from one thread at a time; the server guards
    them with the session lock, replay calls them sequentially.
    """

    def __init__(self, dataset: Dataset, config: SessionConfig):
        self.dataset = dataset
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        sigma2 = (
            estimate_sigma2(dataset.X)
            if config.sigma2 == "auto"
            else float(config.sigma2)
        )
        self.params = DdtParams(sigma2=sigma2, c=config.c, dim=dataset.dim)
        self.state = initial_state(dataset.X, self.params, self.rng)
        self.trace = SampleTrace(capacity=config.trace_capacity)
        self.scheme = QueryScheme(
            config.scheme, subset_size=config.subset_size, candidates=config.candidates
        )
        self.schedule = SamplerSchedule(snapshot_stride=config.trace_stride)
        self.target = None
        self.td = None
        if config.use_target:
            if dataset.labels is None:
                raise ApiError(400, "bad_config", "use_target needs a labeled dataset")
            self.target = target_from_labels(dataset)
            self.td = TripletDistance(self.target)
        self.query_index = 0
        self.pending: dict[str, Any] | None = None
        self.log_posterior_series = [float(self.state.log_posterior)]
        self.td_series = [self.td(self.state.tree)] if self.td else None

    def _effective_turn(self) -> str:
        if self.scheme.kind != "interleaved":
            return self.scheme.kind
        even = (self.query_index + self.scheme.parity_offset) % 2 == 0
        return "random" if even else "active"

    def advance_block(self) -> dict[str, Any]:
        """One MCMC block, then select and stash the next pending query."""
        run(self.state, self.config.iterations_per_query, self.schedule, trace=self.trace)
        subset = select_query(
            self.scheme, self.state.tree, self.trace, self.rng, self.query_index
        )
        shown = induce_subtree(self.state.tree, subset)
        self.pending = {
            "query_index": self.query_index,
            "scheme_turn": self._effective_turn(),
            "subset": [int(p) for p in subset],
            "newick": to_newick(shown),
        }
        self.log_posterior_series.append(float(self.state.log_posterior))
        if self.td is not None:
            self.td_series.append(self.td(self.state.tree))
        return self.pending

    def apply_answer(self, answer: Triplet | None) -> dict[str, Any]:
        """Fold one answer in; raises without mutating on invalid input."""
        if self.pending is None:
            raise NoPendingQuery
        if answer is not None:
            subset = set(self.pending["subset"])
            outside = [p for p in answer.endpoints() if p not in subset]
            if outside:
                raise AnswerOutsideSubset(
                    f"leaves {outside} are not in the shown subset"
                )
            if answer in self.state.constraints:
                raise DuplicateAnswer(f"{answer} is already a constraint")
            incorporate_triplet(self.state.tree, self.state.constraints, answer)
            self.state.constraints.add(answer)
            gibbs_internal_values(self.state)
            self.state.refresh_log_terms()
        entry = {
            "type": "query",
            "query_index": self.pending["query_index"],
            "scheme_turn": self.pending["scheme_turn"],
            "subset": self.pending["subset"],
            "answer": "accept" if answer is None else list(answer.endpoints()),
        }
        self.pending = None
        self.query_index += 1
        return entry


class Session:
    """A core plus its worker thread, lock, and pacing events."""

    def __init__(self, sid: str, core: SessionCore, log_path: Path | None):
        self.id = sid
        self.core = core
        self.lock = threading.Lock()
        self.pending_ready = threading.Event()
        self.answered = threading.Event()
        self.stop_flag = False
        self.status = "sampling"
        self.failure: str | None = None
        self.log_entries: list[dict] = []
        self.log_path = log_path
        if log_path is not None:
            header = {
                "type": "session",
                "id": sid,
                "config": asdict(core.config),
                "dataset": core.dataset.source,
            }
            with open(log_path, "w") as f:
                f.write(json.dumps(header) + "\n")
        self.thread = threading.Thread(
            target=self._work, name=f"session-{sid}", daemon=True
        )

    def _work(self) -> None:
        try:
            while not self.stop_flag:
                with self.lock:
                    self.status = "sampling"
                with self.lock:
                    self.core.advance_block()
                    self.status = "awaiting_answer"
                    self.pending_ready.set()
                while not self.stop_flag:
                    if self.answered.wait(timeout=0.2):
                        self.answered.clear()
                        break
        except Exception as e:  # surfaced via /state
            with self.lock:
                self.failure = f"{type(e).__name__}: {e}"
                self.status = "failed"

    def log_answer(self, entry: dict) -> None:
        self.log_entries.append(entry)
        if self.log_path is not None:
            with open(self.log_path, "a") as f:
                f.write(json.dumps(entry) + "\n")

    def stop(self) -> None:
        self.stop_flag = True
        self.answered.set()
        self.thread.join(timeout=5)


class SessionManager:
    def __init__(self, datasets: dict[str, Dataset], log_dir: Path | None):
        self.datasets = datasets
        self.log_dir = log_dir
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, doc: dict) -> Session:
        name = doc.get("dataset", "default")
        if name not in self.datasets:
            raise ApiError(404, "unknown_dataset", f"no dataset named {name!r}")
        config = SessionConfig.from_dict(doc)
        core = SessionCore(self.datasets[name], config)
        sid = uuid.uuid4().hex[:12]
        log_path = self.log_dir / f"{sid}.jsonl" if self.log_dir else None
        session = Session(sid, core, log_path)
        with self._lock:
            self.sessions[sid] = session
        session.thread.start()
        return session

    def get(self, sid: str) -> Session:
        with self._lock:
            session = self.sessions.get(sid)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {sid!r}")
        return session

    def stop_all(self) -> None:
        with self._lock:
            sessions = list(self.sessions.values())
        for s in sessions:
            s.stop()


def _parse_answer(doc: dict) -> Triplet | None:
    if doc.get("accept"):
        return None
    raw = doc.get("triplet")
    if raw is None:
        raise ApiError(
            422, "bad_answer", 'answer must be {"accept": true} or carry a "triplet"'
        )
    try:
        if isinstance(raw, dict):
            return Triplet(raw["a"], raw["b"], raw["c"])
        a, b, c = raw
        return Triplet(a, b, c)
    except (KeyError, TypeError, ValueError) as e:
        raise ApiError(422, "bad_answer", f"malformed triplet: {e}") from None


def build_app(
    datasets: Dataset | dict[str, Dataset],
    log_dir: str | Path | None = None,
    query_timeout: float = 120.0,
) -> FastAPI:
    """Assemble the service around one or more named datasets."""
    if isinstance(datasets, Dataset):
        datasets = {"default": datasets}
    log_path = None
    if log_dir is not None:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
    manager = SessionManager(datasets, log_path)
    app = FastAPI(title="tripletree session server")
    # the browser client is typically served from a different origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.manager = manager

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            doc = await request.json()
        except Exception:
            doc = {}
        if not isinstance(doc, dict):
            raise ApiError(400, "bad_config", "request body must be a JSON object")
        session = manager.create(doc)
        return {"id": session.id, "config": asdict(session.core.config)}

    @app.get("/sessions/{sid}/query")
    def get_query(sid: str):
        session = manager.get(sid)
        if not session.pending_ready.wait(timeout=query_timeout):
            with session.lock:
                if session.status == "failed":
                    raise ApiError(500, "session_failed", session.failure or "unknown")
            raise ApiError(503, "busy", "sampler has not reached a query boundary yet")
        with session.lock:
            pending = dict(session.core.pending or {})
            names = _leaf_names(session.core.dataset, pending.get("subset", ()))
        pending["names"] = names
        return pending

    @app.post("/sessions/{sid}/answer")
    def post_answer(sid: str, doc: dict):
        session = manager.get(sid)
        answer = _parse_answer(doc)
        with session.lock:
            try:
                entry = session.core.apply_answer(answer)
            except NoPendingQuery:
                raise ApiError(409, "no_pending_query", "nothing to answer yet") from None
            except AnswerOutsideSubset as e:
                raise ApiError(422, "endpoint_outside_subset", str(e)) from None
            except DuplicateAnswer as e:
                raise ApiError(422, "duplicate_triplet", str(e)) from None
            except UnrealizableError as e:
                raise ApiError(
                    422,
                    "unrealizable",
                    f"triplet contradicts the accepted constraints: {e}",
                ) from None
            session.log_answer(entry)
            session.pending_ready.clear()
            constraints = len(session.core.state.constraints)
        session.answered.set()
        return {
            "ok": True,
            "kind": entry["answer"] if entry["answer"] == "accept" else "triplet",
            "constraints_count": constraints,
        }

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        session = manager.get(sid)
        with session.lock:
            core = session.core
            return {
                "status": session.status,
                "iteration": core.state.iteration,
                "query_index": core.query_index,
                "constraints_count": len(core.state.constraints),
                "log_posterior": list(core.log_posterior_series),
                "triplet_distance": (
                    list(core.td_series) if core.td_series is not None else None
                ),
                "newick": to_newick(core.state.tree),
                "failure": session.failure,
            }

    return app


def _leaf_names(dataset: Dataset, subset) -> dict[str, str]:
    if dataset.labels is not None:
        return {str(p): dataset.labels[p] for p in subset}
    return {str(p): str(p) for p in subset}


# ----------------------------------------------------------------------
# replay


class ReplayError(ValueError):
    pass


def replay_session(
    dataset: Dataset, config: SessionConfig, entries: list[dict]
) -> SessionCore:
    """Re-run a session's deterministic part against a recorded query log.

    Each entry must carry the subset the live session showed (checked
    against the replayed selection) and the answer given.  After replaying
    N entries the core's chain sits exactly where the live session's chain
    sat right after its N-th answer.
    """
    core = SessionCore(dataset, config)
    for entry in entries:
        pending = core.advance_block()
        if list(pending["subset"]) != [int(p) for p in entry["subset"]]:
            raise ReplayError(
                f"query {entry.get('query_index')}: live subset {entry['subset']} "
                f"!= replayed {pending['subset']}; dataset/config/seed mismatch"
            )
        answer = entry["answer"]
        core.apply_answer(None if answer == "accept" else Triplet(*answer))
    return core


def read_session_log(path) -> tuple[dict, list[dict]]:
    """Split a session log into its header config and its query entries."""
    header = None
    entries = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("type") == "session":
                header = doc
            elif doc.get("type") == "query":
                entries.append(doc)
    if header is None:
        raise ReplayError(f"{path}: no session header line")
    return header, entries


def replay_from_log(dataset: Dataset, path) -> SessionCore:
    header, entries = read_session_log(path)
    config = SessionConfig.from_dict(header["config"])
    return replay_session(dataset, config, entries)
