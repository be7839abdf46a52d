"""HTTP/JSON facade over sessions, generation, and attribution.

Sessions live in memory (optionally mirrored to a persist directory as
JSON on every mutation). Responses are built with fixed key order and the
documented field names, so a fixed engine and request script always yields
byte-identical transcripts.

Session JSON schema:
    {"id", "document": {"tokens", "sentences": [[start, end], ...]},
     "selection", "summary": [{"tokens", "origin"}],
     "coverage": {"usage_probs", "covered_words", "covered_sentences",
                  "threshold", "empty_summary"} | null,
     "aggregated", "history"}
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from cosum.attribution import AttributionModel, attribute
from cosum.autodiff import ContractViolation
from cosum.inference import GenerationMode
from cosum.model import CopyGatedSeq2Seq
from cosum.session import (
    Engine,
    SelectionTemplate,
    Session,
    create_session,
    delete_sentence,
    edit_sentence,
    run_forward,
    select_template,
    set_selection,
)
from cosum.textproc import Document, tokenize

ERROR_STATUS = {
    "INVALID_REQUEST": 400,
    "NOT_FOUND": 404,
    "NO_BACKWARD_RESULT": 409,
    "MODEL_ERROR": 500,
}


class ApiException(Exception):
    def __init__(self, code: str, message: str):
        if code not in ERROR_STATUS:
            raise ValueError(f"unknown error code {code}")
        self.code = code
        self.message = message
        super().__init__(message)


def engine_version(engine: Engine) -> str:
    """Deterministic short digest of both parameter stores."""
    digest = hashlib.sha256()
    for store in (engine.model.store, engine.attribution.store):
        for name in store.names():
            digest.update(name.encode("utf-8"))
            digest.update(store.get(name).data.astype("<f8").tobytes())
    return digest.hexdigest()[:12]


def engine_from_dir(model_dir: str | Path, threshold: float = 0.5) -> Engine:
    model_dir = Path(model_dir)
    forward_path = model_dir / "forward.ckpt"
    backward_path = model_dir / "backward.ckpt"
    for path in (forward_path, backward_path):
        if not path.exists():
            raise FileNotFoundError(str(path))
    model, vocab = CopyGatedSeq2Seq.load(forward_path)
    attr, attr_vocab = AttributionModel.load(backward_path)
    if vocab.to_config() != attr_vocab.to_config():
        raise ContractViolation("forward and backward checkpoints disagree on vocab")
    return Engine(model=model, attribution=attr, vocab=vocab, threshold=threshold)


def session_to_json(session: Session) -> dict:
    coverage = None
    if session.coverage is not None:
        coverage = {
            "usage_probs": list(session.coverage.usage_probs),
            "covered_words": list(session.coverage.covered_words),
            "covered_sentences": list(session.coverage.covered_sentences),
            "threshold": session.coverage.threshold,
            "empty_summary": session.coverage.empty_summary,
        }
    return {
        "id": session.id,
        "document": {
            "tokens": list(session.document.tokens),
            "sentences": [list(span) for span in session.document.sentence_spans],
        },
        "selection": sorted(session.selection),
        "summary": [
            {"tokens": list(s.tokens), "origin": s.origin.value}
            for s in session.summary
        ],
        "coverage": coverage,
        "aggregated": session.aggregated,
        "history": session.history,
    }


def create_app(engine: Engine, persist_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cosum", docs_url=None, redoc_url=None)
    sessions: dict[str, Session] = {}
    counter = {"next": 1}
    version = engine_version(engine)
    persist = Path(persist_dir) if persist_dir else None
    if persist:
        persist.mkdir(parents=True, exist_ok=True)

    def persist_session(session: Session) -> None:
        if persist:
            path = persist / f"{session.id}.json"
            path.write_text(
                json.dumps(session_to_json(session), ensure_ascii=False) + "\n",
                encoding="utf-8",
            )

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise ApiException("NOT_FOUND", f"no session {session_id!r}")
        return session

    def ok(session: Session, status_code: int = 200) -> JSONResponse:
        return JSONResponse(session_to_json(session), status_code=status_code)

    @app.exception_handler(ApiException)
    async def handle_api_error(_req: Request, exc: ApiException):
        return JSONResponse(
            {"code": exc.code, "message": exc.message},
            status_code=ERROR_STATUS[exc.code],
        )

    @app.exception_handler(Exception)
    async def handle_unexpected(_req: Request, exc: Exception):
        return JSONResponse(
            {"code": "MODEL_ERROR", "message": str(exc)},
            status_code=500,
        )

    async def read_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise ApiException("INVALID_REQUEST", "body must be JSON") from None
        if not isinstance(body, dict):
            raise ApiException("INVALID_REQUEST", "body must be a JSON object")
        return body

    @app.get("/healthz")
    async def healthz():
        return JSONResponse({"status": "ok", "model_version": version})

    @app.post("/sessions")
    async def post_session(request: Request):
        body = await read_body(request)
        text = body.get("document")
        if not isinstance(text, str) or not text.strip():
            raise ApiException("INVALID_REQUEST", "document must be non-empty text")
        session_id = f"s{counter['next']:04d}"
        counter["next"] += 1
        try:
            session = create_session(session_id, text)
        except ContractViolation as exc:
            raise ApiException("INVALID_REQUEST", str(exc)) from None
        sessions[session_id] = session
        persist_session(session)
        return ok(session, status_code=201)

    @app.get("/sessions/{session_id}")
    async def get_session_route(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return ok(session)

    @app.post("/sessions/{session_id}/selection")
    async def post_selection(session_id: str, request: Request):
        session = get_session(session_id)
        body = await read_body(request)
        with session.lock:
            try:
                if "template" in body:
                    try:
                        kind = SelectionTemplate(body["template"])
                    except ValueError:
                        raise ApiException(
                            "INVALID_REQUEST",
                            f"unknown template {body['template']!r}",
                        ) from None
                    if kind == SelectionTemplate.MATCH and session.coverage is None:
                        raise ApiException(
                            "NO_BACKWARD_RESULT",
                            "run a generation or edit before matching coverage",
                        )
                    select_template(session, kind)
                elif "sentences" in body:
                    if not isinstance(body["sentences"], list):
                        raise ApiException(
                            "INVALID_REQUEST", "sentences must be a list of indices"
                        )
                    set_selection(session, body["sentences"])
                else:
                    raise ApiException(
                        "INVALID_REQUEST", "provide sentences or template"
                    )
            except ContractViolation as exc:
                raise ApiException("INVALID_REQUEST", str(exc)) from None
            persist_session(session)
            return ok(session)

    @app.post("/sessions/{session_id}/generate")
    async def post_generate(session_id: str, request: Request):
        session = get_session(session_id)
        body = await read_body(request)
        mode_name = body.get("mode")
        try:
            mode = GenerationMode(mode_name)
        except ValueError:
            raise ApiException(
                "INVALID_REQUEST", f"unknown mode {mode_name!r}"
            ) from None
        n_sentences = body.get("n_sentences", 1)
        if not isinstance(n_sentences, int):
            raise ApiException("INVALID_REQUEST", "n_sentences must be an integer")
        prefix = body.get("prefix", "")
        if not isinstance(prefix, str):
            raise ApiException("INVALID_REQUEST", "prefix must be a string")
        beam_width = body.get("beam_width", 1)
        if not isinstance(beam_width, int) or beam_width < 1:
            raise ApiException("INVALID_REQUEST", "beam_width must be a positive int")
        with session.lock:
            try:
                run_forward(
                    session,
                    engine,
                    mode,
                    n_sentences=n_sentences,
                    prefix_text=prefix,
                    beam_width=beam_width,
                )
            except ContractViolation as exc:
                raise ApiException("INVALID_REQUEST", str(exc)) from None
            persist_session(session)
            return ok(session)

    @app.post("/sessions/{session_id}/summary/{index}")
    async def post_summary(session_id: str, index: int, request: Request):
        session = get_session(session_id)
        body = await read_body(request)
        action = body.get("action")
        with session.lock:
            try:
                if action == "edit":
                    text = body.get("text")
                    if not isinstance(text, str):
                        raise ApiException(
                            "INVALID_REQUEST", "edit requires a text field"
                        )
                    edit_sentence(session, engine, index, text)
                elif action == "delete":
                    delete_sentence(session, engine, index)
                else:
                    raise ApiException(
                        "INVALID_REQUEST", f"unknown action {action!r}"
                    )
            except ContractViolation as exc:
                raise ApiException("INVALID_REQUEST", str(exc)) from None
            persist_session(session)
            return ok(session)

    @app.post("/attribute")
    async def post_attribute(request: Request):
        body = await read_body(request)
        text = body.get("document")
        summary = body.get("summary")
        if not isinstance(text, str) or not text.strip():
            raise ApiException("INVALID_REQUEST", "document must be non-empty text")
        if not isinstance(summary, str):
            raise ApiException("INVALID_REQUEST", "summary must be a string")
        threshold = body.get("threshold", engine.threshold)
        if not isinstance(threshold, (int, float)):
            raise ApiException("INVALID_REQUEST", "threshold must be a number")
        document = Document.from_text(text)
        report = attribute(
            engine.attribution,
            engine.vocab,
            document,
            tokenize(summary),
            threshold=float(threshold),
        )
        return JSONResponse(report.to_json())

    return app


# ---------------------------------------------------------------------------
# Scripted collaborative scenario (the golden round trip)
# ---------------------------------------------------------------------------

SCENARIO_STEP_COUNT = 11


def _last_sentence_text(session_json: dict) -> str:
    return " ".join(session_json["summary"][-1]["tokens"])


def _coverage_argmax_sentence(session_json: dict) -> int:
    """Source sentence with the largest total attributed usage."""
    coverage = session_json["coverage"]
    probs = coverage["usage_probs"]
    best, best_mass = 0, -1.0
    for s, (start, stop) in enumerate(session_json["document"]["sentences"]):
        mass = sum(probs[start:stop])
        if mass > best_mass:
            best, best_mass = s, mass
    return best


def scripted_scenario(client, document_text: str) -> tuple[str, int]:
    """Replay the collaborative walkthrough against a live API client.

    Script: init 3 -> match -> add -> delete -> deselect -> add ->
    complete "the water is ..." -> edit -> select-uncovered -> add -> edit.
    Returns the full request/response transcript and the scripted step count.
    """
    lines: list[str] = []

    def call(label: str, method: str, path: str, payload: dict | None = None):
        lines.append(f">>> {label}: {method} {path}")
        if payload is not None:
            lines.append(json.dumps(payload, ensure_ascii=False))
        if method == "GET":
            response = client.get(path)
        else:
            response = client.post(path, json=payload)
        lines.append(f"<<< {response.status_code}")
        lines.append(response.text)
        lines.append("")
        return response.json()

    created = call("setup", "POST", "/sessions", {"document": document_text})
    sid = created["id"]
    base = f"/sessions/{sid}"
    call("setup", "POST", f"{base}/selection", {"template": "all"})

    # 1. init with 3 sentences
    state = call("step 1/11 init_with 3", "POST", f"{base}/generate",
                 {"mode": "init_with", "n_sentences": 3})
    # 2. match blue selection to red coverage
    state = call("step 2/11 match", "POST", f"{base}/selection",
                 {"template": "match"})
    # 3. add one sentence
    state = call("step 3/11 add_sentence", "POST", f"{base}/generate",
                 {"mode": "add_sentence"})
    influential = _coverage_argmax_sentence(state)
    last_index = len(state["summary"]) - 1
    # 4. delete the new sentence
    state = call("step 4/11 delete", "POST", f"{base}/summary/{last_index}",
                 {"action": "delete"})
    # 5. deselect the most influential source sentence
    remaining = [s for s in state["selection"] if s != influential]
    state = call("step 5/11 deselect", "POST", f"{base}/selection",
                 {"sentences": remaining})
    # 6. add another sentence under the tightened constraint
    state = call("step 6/11 add_sentence", "POST", f"{base}/generate",
                 {"mode": "add_sentence"})
    # 7. typed sentence completion
    state = call("step 7/11 complete", "POST", f"{base}/generate",
                 {"mode": "complete", "prefix": "the water is ..."})
    # 8. fix the verb tense in the completed sentence
    completed = state["summary"][-1]["tokens"]
    edited = ["was" if tok == "is" else tok for tok in completed]
    idx = len(state["summary"]) - 1
    state = call("step 8/11 edit", "POST", f"{base}/summary/{idx}",
                 {"action": "edit", "text": " ".join(edited)})
    # 9. select a source sentence that is not yet covered
    covered = set(state["coverage"]["covered_sentences"])
    n_sentences = len(state["document"]["sentences"])
    uncovered = [s for s in range(n_sentences) if s not in covered]
    target = uncovered[0] if uncovered else 0
    state = call("step 9/11 select uncovered", "POST", f"{base}/selection",
                 {"sentences": [target]})
    # 10. add a sentence about it
    state = call("step 10/11 add_sentence", "POST", f"{base}/generate",
                 {"mode": "add_sentence"})
    # 11. trim the repeated lead-in of the final sentence
    final_tokens = state["summary"][-1]["tokens"]
    trimmed = final_tokens[1:] if len(final_tokens) > 1 else final_tokens
    idx = len(state["summary"]) - 1
    call("step 11/11 edit", "POST", f"{base}/summary/{idx}",
         {"action": "edit", "text": " ".join(trimmed)})

    return "\n".join(lines), SCENARIO_STEP_COUNT
