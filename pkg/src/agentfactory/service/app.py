"""FastAPI app exposing the runtime to clients.

Task-level failures (parse failure, backend trouble, step limit) come back
as 200 responses with outcome "failed"/"step_limit" — the request itself
succeeded. Domain errors map to 4xx statuses with a typed error body.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import errors as err
from ..config import RuntimeConfig
from ..meta_agent import TaskOutcome
from ..runtime import AgentRuntime
from . import schemas

_STATUS_BY_ERROR = {
    err.UnknownSkill: 404,
    err.UnknownTask: 404,
    err.UnknownSubagent: 404,
    err.NotASubagent: 409,
    err.DuplicateName: 409,
    err.DuplicateTask: 409,
    err.VersionConflict: 409,
    err.DestinationNotEmpty: 409,
    err.LockTimeout: 409,
    err.StagedOnlySkill: 409,
    err.InvalidManifest: 400,
    err.InvalidTaskId: 400,
    err.InvalidUrl: 400,
    err.BundleInvalid: 400,
    err.ConfigError: 400,
    err.LibraryCorrupt: 500,
}

_TASK_FAILURE_ERRORS = (
    err.ActionParseFailure,
    err.BackendUnavailable,
    err.ReplayExhausted,
    err.ReplayMismatch,
)


def _status_for(exc: err.AgentFactoryError) -> int:
    for klass, status in _STATUS_BY_ERROR.items():
        if isinstance(exc, klass):
            return status
    return 500


def create_app(config: RuntimeConfig) -> FastAPI:
    runtime = AgentRuntime(config)
    app = FastAPI(title="agentfactory", version="0.1.0")
    app.state.runtime = runtime

    @app.exception_handler(err.AgentFactoryError)
    async def _domain_error(_request: Request, exc: err.AgentFactoryError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": {"type": err.error_name(exc), "message": str(exc)}},
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/tasks/run", response_model=schemas.TaskRunResponse)
    def run_task(body: schemas.TaskRunRequest):
        try:
            result = runtime.run_task(
                body.query,
                task_id=body.task_id,
                replay_path=Path(body.replay_path) if body.replay_path else None,
                step_limit=body.step_limit,
            )
        except _TASK_FAILURE_ERRORS as exc:
            history = runtime.meta.last_history()
            return schemas.TaskRunResponse(
                task_id=history.task_id if history else (body.task_id or ""),
                outcome=TaskOutcome.FAILED.value,
                error=err.summarize(exc, limit=2000),
            )
        return schemas.TaskRunResponse(
            task_id=result.task_id,
            outcome=result.outcome.value,
            answer=result.answer,
            saved_skills=[schemas.SavedSkillRef(**s) for s in result.saved_skills],
            skipped_skills=[schemas.SkippedSkillRef(**s) for s in result.skipped_skills],
            orchestration_tokens=result.orchestration_tokens,
            steps=result.steps,
            error=result.error,
        )

    @app.post("/tasks/dry-plan", response_model=schemas.DryPlanResponse)
    def dry_plan(_body: schemas.DryPlanRequest):
        return schemas.DryPlanResponse(listing=runtime.dry_plan())

    @app.get("/skills", response_model=schemas.SkillListResponse)
    def list_skills():
        subagents, builtins = runtime.list_skills()
        return schemas.SkillListResponse(
            subagents=[
                schemas.SkillSummaryModel(
                    name=s.name, kind=s.kind.value, description=s.description, version=s.version
                )
                for s in subagents
            ],
            builtins=[
                schemas.SkillSummaryModel(
                    name=s.name, kind=s.kind.value, description=s.description, version=s.version
                )
                for s in builtins
            ],
        )

    @app.get("/skills/{name}", response_model=schemas.SkillShowResponse)
    def show_skill(name: str):
        return schemas.SkillShowResponse(name=name, skill_md=runtime.skill_description(name))

    @app.get("/skills/{name}/code", response_model=schemas.SkillCodeResponse)
    def skill_code(name: str):
        return schemas.SkillCodeResponse(name=name, code=runtime.skill_code(name))

    @app.post("/export", response_model=schemas.ExportResponse)
    def export(body: schemas.ExportRequest):
        payload = runtime.export(
            body.names, Path(body.dest), reproducible=body.reproducible, verify=body.verify
        )
        return schemas.ExportResponse(**payload)

    @app.post("/eval")
    def evaluate(body: schemas.EvalRequest):
        return runtime.evaluate(
            Path(body.manifest_path),
            report_path=Path(body.report_path) if body.report_path else None,
        )

    @app.get("/tasks/{task_id}/tokens", response_model=schemas.TokenTotalResponse)
    def token_total(task_id: str):
        return schemas.TokenTotalResponse(task_id=task_id, orchestration_tokens=runtime.token_total(task_id))

    @app.post("/reports/batch", response_model=schemas.BatchReportResponse)
    def batch_report(body: schemas.BatchReportRequest):
        return schemas.BatchReportResponse(**runtime.batch_report(body.task_ids))

    return app
